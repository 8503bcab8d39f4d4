#include "invdec/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

#include "invdec/error.hpp"
#include "invdec/log.hpp"
#include "invdec/model.hpp"
#include "invdec/rng.hpp"

namespace invdec::exp {

using config::RunConfig;

data::RawSeries load_dataset(const RunConfig& cfg) {
  if (cfg.data.source == config::DataSource::kSynth) return data::synth_coupled(cfg.synth);
  if (cfg.data.path.empty()) throw ConfigError("data.path: required when data.source = csv");
  data::CsvOptions opts;
  opts.timestamp = cfg.data.timestamp;
  return data::load_csv(cfg.data.path, opts);
}

PreparedData prepare(const RunConfig& cfg, const data::RawSeries& raw,
                     const data::NormStats* given) {
  const std::size_t need = cfg.model.lookback + cfg.model.horizon;
  data::Segments seg = data::chronological_split(raw, cfg.data.split, need);
  data::NormStats stats = given ? *given : data::fit_norm_rows(seg.train.values);
  seg.train = data::apply_norm(seg.train, stats);
  seg.val = data::apply_norm(seg.val, stats);
  seg.test = data::apply_norm(seg.test, stats);
  auto tr = data::windows(seg.train, cfg.model.lookback, cfg.model.horizon);
  auto va = data::windows(seg.val, cfg.model.lookback, cfg.model.horizon);
  auto te = data::windows(seg.test, cfg.model.lookback, cfg.model.horizon);
  return PreparedData{std::move(seg), std::move(stats), std::move(tr), std::move(va), std::move(te)};
}

CellResult run_cell(RunConfig cfg, const data::RawSeries& raw, bool keep_params) {
  CellResult r;
  const auto start = std::chrono::steady_clock::now();
  try {
    cfg.resolve(raw.variates());
    PreparedData prepared = prepare(cfg, raw);
    RngStreams rng(cfg.seed);
    model::ModelParams init = model::init_params(cfg.model, rng);
    train::TrainResult trained =
        train::train(init, cfg.model, prepared.train, prepared.val, cfg.train);
    train::EvalOptions eopts;
    eopts.batch_size = cfg.train.batch_size;
    r.val = train::evaluate(trained.best, cfg.model, prepared.val, eopts);
    r.test = train::evaluate(trained.best, cfg.model, prepared.test, eopts);
    r.record = std::move(trained.record);
    if (keep_params) r.params = std::move(trained.best);
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<CellResult> run_cells(const std::vector<RunConfig>& cells, const data::RawSeries& raw,
                                  std::size_t threads) {
  std::vector<CellResult> results(cells.size());
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, cells.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      results[i] = run_cell(cells[i], raw);
      if (!results[i].ok) log::warn("cell " + std::to_string(i) + " failed: " + results[i].error);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return results;
}

void AblationSpec::validate() const {
  if (axis != "lambda" && axis != "dec_layers" && axis != "heads") {
    throw ConfigError("ablation.axis: expected lambda, dec_layers or heads, got '" + axis + "'");
  }
  if (values.empty()) throw ConfigError("ablation.values: at least one value is required");
  if (horizons.empty()) throw ConfigError("ablation.horizons: at least one horizon is required");
  if (seeds.empty()) throw ConfigError("ablation.seeds: at least one seed is required");
  for (double v : values) {
    if (axis == "lambda" && !(v >= 0.0 && v <= 1.0)) {
      throw ConfigError("ablation.values: lambda values must lie in [0, 1]");
    }
    if (axis != "lambda" && (v < 1.0 || v != std::floor(v))) {
      throw ConfigError("ablation.values: " + axis + " values must be positive integers");
    }
  }
}

AblationSpec AblationSpec::from(const config::AblationConfig& cfg) {
  return AblationSpec{cfg.axis, cfg.values, cfg.horizons, cfg.seeds};
}

RunConfig ablation_cell(const RunConfig& base, const std::string& axis, double value,
                        std::size_t horizon, std::uint64_t seed) {
  RunConfig c = base;
  if (axis == "lambda") {
    if (c.model.lambda_mode != model::LambdaMode::kFixed) {
      throw ConfigError("ablation.axis = lambda requires model.lambda_mode = fixed");
    }
    c.model.lambda = value;
    c.lambda_auto = false;
  } else if (axis == "dec_layers") {
    c.model.dec_layers = static_cast<std::size_t>(value);
  } else if (axis == "heads") {
    c.model.dec_heads = static_cast<std::size_t>(value);
  } else {
    throw ConfigError("ablation.axis: unknown axis '" + axis + "'");
  }
  c.model.horizon = horizon;
  c.seed = seed;
  c.train.seed = seed;
  return c;
}

namespace {

std::string value_text(const std::string& axis, double v) {
  if (axis == "lambda") return config::format_double(v);
  return std::to_string(static_cast<std::size_t>(v));
}

}  // namespace

AblationResult run_ablation(const AblationSpec& spec, const RunConfig& base,
                            const data::RawSeries& dataset, const std::string& dataset_name,
                            std::size_t threads) {
  spec.validate();
  AblationResult result;
  struct Key {
    double value;
    std::size_t horizon;
    std::uint64_t seed;
  };
  std::vector<Key> keys;
  for (double v : spec.values)
    for (std::size_t h : spec.horizons)
      for (std::uint64_t s : spec.seeds) {
        keys.push_back({v, h, s});
        result.configs.push_back(ablation_cell(base, spec.axis, v, h, s));
      }
  result.cells = run_cells(result.configs, dataset, threads);

  for (std::size_t i = 0; i < keys.size(); ++i) {
    const RunConfig& c = result.configs[i];
    const CellResult& cell = result.cells[i];
    report::Row row;
    row.run_id = c.fingerprint();
    row.axis = spec.axis;
    row.value = value_text(spec.axis, keys[i].value);
    row.horizon = keys[i].horizon;
    row.seed = keys[i].seed;
    row.wall_s = cell.wall_s;
    if (cell.ok) {
      row.mse = cell.test.mse;
      row.mae = cell.test.mae;
      const bool backbone = c.model.lambda_mode == model::LambdaMode::kFixed && !c.lambda_auto &&
                            c.model.lambda == 0.0;
      if (backbone) row.flag = "backbone";
    } else {
      row.mse = std::nan("");
      row.mae = std::nan("");
      row.flag = "error: " + cell.error;
    }
    result.table.rows.push_back(std::move(row));
  }

  if (dataset_name == "weather" && spec.axis == "lambda") {
    result.annotations = {{"Weather avg MSE, lambda=0 (w/o InvDec)", 0.259},
                          {"Weather avg MSE, lambda=1", 0.247}};
  }
  return result;
}

double relative_improvement(double baseline, double candidate) {
  return (baseline - candidate) / baseline;
}

HorizonRow average_row(const std::vector<HorizonRow>& rows) {
  HorizonRow avg;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    avg.baseline_mse += r.baseline_mse;
    avg.candidate_mse += r.candidate_mse;
    avg.baseline_mae += r.baseline_mae;
    avg.candidate_mae += r.candidate_mae;
    ++n;
  }
  if (n == 0) {
    avg.error = "no successful horizons";
    return avg;
  }
  const double k = static_cast<double>(n);
  avg.baseline_mse /= k;
  avg.candidate_mse /= k;
  avg.baseline_mae /= k;
  avg.candidate_mae /= k;
  avg.improvement = relative_improvement(avg.baseline_mse, avg.candidate_mse);
  return avg;
}

HorizonTable run_horizon_table(const RunConfig& base, const data::RawSeries& dataset,
                               const std::vector<std::size_t>& horizons,
                               const std::vector<std::uint64_t>& seeds, std::size_t threads) {
  if (horizons.empty()) throw ConfigError("horizon table: no horizons given");
  if (seeds.empty()) throw ConfigError("horizon table: no seeds given");
  std::vector<RunConfig> cells;
  for (std::size_t h : horizons)
    for (std::uint64_t s : seeds) {
      RunConfig cand = base;
      cand.model.horizon = h;
      cand.seed = s;
      cand.train.seed = s;
      RunConfig baseline = cand;
      baseline.model.lambda_mode = model::LambdaMode::kFixed;
      baseline.model.lambda = 0.0;
      baseline.lambda_auto = false;
      cells.push_back(std::move(cand));
      cells.push_back(std::move(baseline));
    }
  const auto results = run_cells(cells, dataset, threads);

  HorizonTable table;
  std::size_t k = 0;
  for (std::size_t h : horizons) {
    HorizonRow row;
    row.horizon = h;
    for (std::size_t s = 0; s < seeds.size(); ++s, k += 2) {
      const CellResult& cand = results[k];
      const CellResult& basel = results[k + 1];
      if (!cand.ok || !basel.ok) {
        if (row.error.empty()) row.error = !cand.ok ? cand.error : basel.error;
        continue;
      }
      row.candidate_mse += cand.test.mse;
      row.candidate_mae += cand.test.mae;
      row.baseline_mse += basel.test.mse;
      row.baseline_mae += basel.test.mae;
    }
    if (row.error.empty()) {
      const double n = static_cast<double>(seeds.size());
      row.candidate_mse /= n;
      row.candidate_mae /= n;
      row.baseline_mse /= n;
      row.baseline_mae /= n;
      row.improvement = relative_improvement(row.baseline_mse, row.candidate_mse);
    }
    table.rows.push_back(row);
  }
  table.average = average_row(table.rows);
  return table;
}

std::vector<DimensionalityRow> run_dimensionality_study(const std::vector<std::size_t>& c_values,
                                                        const data::SynthParams& generator,
                                                        const std::vector<std::uint64_t>& seeds,
                                                        const RunConfig& base,
                                                        std::size_t threads) {
  if (c_values.empty()) throw ConfigError("dimensionality study: no C values given");
  if (seeds.empty()) throw ConfigError("dimensionality study: no seeds given");
  for (std::size_t i = 0; i < c_values.size(); ++i) {
    if (c_values[i] < 2) throw ConfigError("dimensionality study: every C must be at least 2");
    if (i > 0 && c_values[i] <= c_values[i - 1]) {
      throw ConfigError("dimensionality study: C values must be strictly ascending");
    }
  }
  std::vector<DimensionalityRow> rows;
  for (std::size_t c : c_values) {
    data::SynthParams gen = generator;
    gen.variates = c;
    DimensionalityRow row;
    row.variates = c;
    try {
      const data::RawSeries raw = data::synth_coupled(gen);
      std::vector<RunConfig> cells;
      for (std::uint64_t s : seeds) {
        for (double lam : {1.0, 0.0}) {
          RunConfig cell = base;
          cell.variates_auto = true;
          cell.model.lambda_mode = model::LambdaMode::kFixed;
          cell.model.lambda = lam;
          cell.lambda_auto = false;
          cell.seed = s;
          cell.train.seed = s;
          cells.push_back(std::move(cell));
        }
      }
      const auto results = run_cells(cells, raw, threads);
      for (std::size_t i = 0; i < results.size(); i += 2) {
        if (!results[i].ok || !results[i + 1].ok) {
          throw Error(!results[i].ok ? results[i].error : results[i + 1].error);
        }
        row.coupled_per_seed.push_back(results[i].val.mse);
        row.backbone_per_seed.push_back(results[i + 1].val.mse);
      }
      for (double v : row.coupled_per_seed) row.coupled_val_mse += v;
      for (double v : row.backbone_per_seed) row.backbone_val_mse += v;
      row.coupled_val_mse /= static_cast<double>(seeds.size());
      row.backbone_val_mse /= static_cast<double>(seeds.size());
      row.improvement = relative_improvement(row.backbone_val_mse, row.coupled_val_mse);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DimensionError("loglog_slope: need at least two paired points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw NumericError("loglog_slope: values must be positive");
    sx += std::log(x[i]);
    sy += std::log(y[i]);
  }
  const double mx = sx / n, my = sy / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

namespace {

/// Median per-call seconds of `fn` over `reps` repetitions; each repetition
/// loops enough calls to last about 20 ms.
template <typename F>
double median_seconds(F&& fn, std::size_t reps) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  fn();
  const double once = std::chrono::duration<double>(clock::now() - t0).count();
  const std::size_t inner = std::max<std::size_t>(1, static_cast<std::size_t>(0.02 / std::max(once, 1e-9)));
  std::vector<double> samples;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto start = clock::now();
    for (std::size_t i = 0; i < inner; ++i) fn();
    samples.push_back(std::chrono::duration<double>(clock::now() - start).count() /
                      static_cast<double>(inner));
  }
  std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
  return samples[samples.size() / 2];
}

}  // namespace

ScalingReport run_scaling_check(const config::ScalingConfig& sc, std::uint64_t seed) {
  if (sc.variates.size() < 2) throw ConfigError("scaling.variates: need at least two values");
  if (sc.repetitions < 5) throw ConfigError("scaling.repetitions: must be at least 5");
  ScalingReport report;
  std::vector<double> cs, dec, enc;
  for (std::size_t c : sc.variates) {
    model::ModelConfig mc;
    mc.variates = c;
    mc.lookback = sc.lookback;
    mc.patch_len = sc.patch_len;
    mc.stride = sc.patch_len;
    mc.horizon = 1;
    mc.d_model = sc.d_model;
    mc.heads = sc.heads;
    mc.dec_heads = sc.heads;
    mc.enc_layers = 1;
    mc.dec_layers = 1;
    mc.dropout = 0.0;
    mc.lambda = 1.0;
    mc.validate();
    RngStreams rng(seed);
    model::ModelParams params = model::init_params(mc, rng);
    std::normal_distribution<double> dist(0.0, 1.0);
    auto& data_rng = rng.stream("scaling.input");
    Tensor g({c, mc.d_model});
    for (double& v : g.data()) v = dist(data_rng);
    Tensor e({c, mc.patches(), mc.d_model});
    for (double& v : e.data()) v = dist(data_rng);
    model::ForwardOptions opts;
    opts.record_trace = false;

    ScalingRow row;
    row.variates = c;
    row.decoder_s = median_seconds(
        [&] {
          Tape tape;
          model::decode_variates(tape.constant(g), params, mc, opts);
        },
        sc.repetitions);
    row.encoder_s = median_seconds(
        [&] {
          Tape tape;
          model::encode_temporal(tape.constant(e), params, mc, opts);
        },
        sc.repetitions);
    report.rows.push_back(row);
    cs.push_back(static_cast<double>(c));
    dec.push_back(row.decoder_s);
    enc.push_back(row.encoder_s);
  }
  report.decoder_slope = loglog_slope(cs, dec);
  report.encoder_slope = loglog_slope(cs, enc);
  return report;
}

}  // namespace invdec::exp
