#include "invdec/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "invdec/ad_ops.hpp"
#include "invdec/error.hpp"
#include "invdec/rng.hpp"
#include "json.hpp"

namespace invdec::train {

using Json = nlohmann::json;

AdamState::AdamState(const ParameterStore& params, AdamConfig cfg) : config(cfg) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const auto& p : params) {
    m.emplace_back(p.value.shape());
    v.emplace_back(p.value.shape());
  }
}

void adam_step(ParameterStore& params, AdamState& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                         " tensors but the store holds " + std::to_string(params.size()));
  }
  const AdamConfig& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  std::size_t k = 0;
  for (auto& p : params) {
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    ++k;
    if (m.shape() != p.value.shape() || p.grad.shape() != p.value.shape()) {
      throw DimensionError("adam_step: shape mismatch for " + p.name);
    }
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.value[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (patience < 1) throw ConfigError("train.patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be at least 1");
  if (!(adam.lr >= 0.0)) throw ConfigError("train.lr must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("train.beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("train.beta2 must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("train.eps must be positive");
}

double RunRecord::best_val_mse() const {
  if (best_epoch == 0 || best_epoch > epochs.size()) return std::numeric_limits<double>::quiet_NaN();
  return epochs[best_epoch - 1].val_mse;
}

std::string RunRecord::to_jsonl(bool include_timings) const {
  std::ostringstream out;
  for (const auto& e : epochs) {
    Json j = {{"type", "epoch"},
              {"epoch", e.epoch},
              {"train_loss", e.train_loss},
              {"val_mse", e.val_mse},
              {"val_mae", e.val_mae}};
    if (include_timings) j["seconds"] = e.seconds;
    out << j.dump() << "\n";
  }
  Json s = {{"type", "summary"},
            {"best_epoch", best_epoch},
            {"best_val_mse", best_epoch ? best_val_mse() : 0.0},
            {"epochs", epochs.size()},
            {"stopped_early", stopped_early}};
  out << s.dump() << "\n";
  return out.str();
}

RunRecord RunRecord::from_jsonl(const std::string& text) {
  RunRecord r;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "epoch") {
        EpochRecord e;
        e.epoch = j.at("epoch").get<std::size_t>();
        e.train_loss = j.at("train_loss").get<double>();
        e.val_mse = j.at("val_mse").get<double>();
        e.val_mae = j.at("val_mae").get<double>();
        e.seconds = j.value("seconds", 0.0);
        r.epochs.push_back(e);
      } else if (type == "summary") {
        r.best_epoch = j.at("best_epoch").get<std::size_t>();
        r.stopped_early = j.at("stopped_early").get<bool>();
      } else {
        throw FormatError("unknown record type '" + type + "'");
      }
    } catch (const Json::exception& e) {
      throw FormatError("run record line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return r;
}

void RunRecord::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write run record " + path.string());
  out << to_jsonl();
}

namespace {

struct SampleErrors {
  std::vector<double> sq;
  std::vector<double> abs;
};

void accumulate_rows(const Tensor& pred, const Tensor& target, std::size_t first_sample,
                     std::size_t per_sample, SampleErrors& out) {
  const std::size_t n = pred.numel() / per_sample;
  for (std::size_t s = 0; s < n; ++s) {
    double sq = 0.0, ab = 0.0;
    for (std::size_t i = 0; i < per_sample; ++i) {
      const double d = pred[s * per_sample + i] - target[s * per_sample + i];
      sq += d * d;
      ab += std::abs(d);
    }
    out.sq[first_sample + s] = sq;
    out.abs[first_sample + s] = ab;
  }
}

MetricsReport reduce(const SampleErrors& e, std::size_t per_sample) {
  MetricsReport r;
  r.samples = e.sq.size();
  double sq = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < e.sq.size(); ++i) {
    sq += e.sq[i];
    ab += e.abs[i];
  }
  const double denom = static_cast<double>(r.samples * per_sample);
  r.mse = sq / denom;
  r.mae = ab / denom;
  return r;
}

}  // namespace

MetricsReport metrics_from(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("metrics: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  const std::size_t per_sample =
      pred.rank() >= 3 ? pred.numel() / pred.dim(0) : pred.numel();
  SampleErrors e{std::vector<double>(pred.numel() / per_sample),
                 std::vector<double>(pred.numel() / per_sample)};
  accumulate_rows(pred, target, 0, per_sample, e);
  return reduce(e, per_sample);
}

MetricsReport evaluate(model::ModelParams& params, const model::ModelConfig& cfg,
                       const data::WindowStream& windows, const EvalOptions& options) {
  if (windows.empty()) throw ConfigError("evaluate: split has no windows");
  if (windows.variates() != cfg.variates) {
    throw ConfigError("evaluate: data has C=" + std::to_string(windows.variates()) +
                      " but the model expects C=" + std::to_string(cfg.variates));
  }
  const std::size_t n = windows.size();
  const std::size_t bs = std::max<std::size_t>(1, options.batch_size);
  const std::size_t batches = (n + bs - 1) / bs;
  const std::size_t per_sample = cfg.horizon * cfg.variates;
  SampleErrors errors{std::vector<double>(n), std::vector<double>(n)};

  auto run_batch = [&](std::size_t b) {
    const std::size_t lo = b * bs, hi = std::min(n, lo + bs);
    std::vector<std::size_t> idx(hi - lo);
    std::iota(idx.begin(), idx.end(), lo);
    Tensor x({idx.size(), cfg.lookback, cfg.variates});
    Tensor y({idx.size(), cfg.horizon, cfg.variates});
    windows.gather(idx, x, y);
    const Tensor pred = model::predict_tensor(x, params, cfg);
    accumulate_rows(pred, y, lo, per_sample, errors);
  };

  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, batches);
  if (threads == 1) {
    for (std::size_t b = 0; b < batches; ++b) run_batch(b);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> failures(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t b = t; b < batches; b += threads) run_batch(b);
        } catch (...) {
          failures[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& f : failures)
      if (f) std::rethrow_exception(f);
  }
  return reduce(errors, per_sample);
}

namespace {

std::string describe_non_finite(const model::ModelParams& params, const Tape& tape) {
  for (const auto& p : params.store) {
    if (!p.value.all_finite()) return "parameter " + p.name;
  }
  const std::size_t id = tape.first_non_finite();
  if (id < tape.size()) {
    return "tape node #" + std::to_string(id) + " (" + tape.op_name(id) + ", shape " +
           shape_str(tape.value(id).shape()) + ")";
  }
  return "no non-finite tensor found on the tape";
}

}  // namespace

TrainResult train(const model::ModelParams& initial, const model::ModelConfig& cfg,
                  const data::WindowStream& train_windows, const data::WindowStream& val_windows,
                  const TrainConfig& tcfg, const EpochCallback& on_epoch) {
  tcfg.validate();
  cfg.validate();
  if (train_windows.empty()) throw ConfigError("train: training split has no windows");
  if (val_windows.empty()) throw ConfigError("train: validation split has no windows");
  if (train_windows.variates() != cfg.variates) {
    throw ConfigError("train: data has C=" + std::to_string(train_windows.variates()) +
                      " but the model expects C=" + std::to_string(cfg.variates));
  }

  RngStreams rng(tcfg.seed);
  model::ModelParams params = initial;
  AdamState adam(params.store, tcfg.adam);
  TrainResult result{params, {}};
  double best_mse = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);
  model::ForwardOptions fopts;
  fopts.training = true;
  fopts.rng = &rng;
  fopts.record_trace = false;
  EvalOptions eopts;
  eopts.batch_size = tcfg.batch_size;

  for (std::size_t epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (tcfg.shuffle) std::shuffle(order.begin(), order.end(), rng.stream("shuffle"));

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += tcfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + tcfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + lo, order.begin() + hi);
      Tensor x({idx.size(), cfg.lookback, cfg.variates});
      Tensor y({idx.size(), cfg.horizon, cfg.variates});
      train_windows.gather(idx, x, y);

      Tape tape;
      model::ForwardOutput out = model::forward(tape, x, params, cfg, fopts);
      Var loss = ad::mse(out.prediction, tape.constant(std::move(y)));
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", batch starting at " + std::to_string(lo) +
                           "; first non-finite tensor: " + describe_non_finite(params, tape));
      }
      params.store.zero_grads();
      tape.backward(loss);
      adam_step(params.store, adam);
      loss_sum += value * static_cast<double>(idx.size());
      seen += idx.size();
    }

    const MetricsReport val = evaluate(params, cfg, val_windows, eopts);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_mse = val.mse;
    rec.val_mae = val.mae;
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.record.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (val.mse < best_mse) {
      best_mse = val.mse;
      result.best = params;
      result.record.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= tcfg.patience) {
      result.record.stopped_early = epoch < tcfg.max_epochs;
      break;
    }
  }
  return result;
}

}  // namespace invdec::train
