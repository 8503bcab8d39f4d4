#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "invdec/checkpoint.hpp"
#include "invdec/error.hpp"
#include "invdec/experiments.hpp"
#include "invdec/log.hpp"
#include "invdec/model_check.hpp"
#include "invdec/report.hpp"
#include "invdec/run_config.hpp"
#include "json.hpp"

namespace invdec::cli {
namespace fs = std::filesystem;
using config::RunConfig;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kConfigFile = "config.ini";
constexpr const char* kPartialMarker = "PARTIAL";
constexpr const char* kCheckpointFile = "checkpoint.bin";
constexpr const char* kNormFile = "norm_stats.txt";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Config file, then --set overrides, then --seed and --out.
config::KvConfig load_kv(const CommonOptions& common) {
  config::KvConfig kv;
  if (!common.config.empty()) {
    try {
      kv = config::KvConfig::load(common.config);
    } catch (const IoError& e) {
      throw UsageError(e.what());
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }
  for (const auto& o : common.overrides) kv.apply_override(o);
  if (common.seed) kv.set("run.seed", std::to_string(*common.seed));
  if (!common.out.empty()) kv.set("run.out", common.out);
  return kv;
}

std::size_t thread_cap(std::size_t configured) {
  if (const char* env = std::getenv("INVDEC_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && cap > 0) return std::min<std::size_t>(configured, cap);
    log::warn("ignoring malformed INVDEC_THREADS='" + std::string(env) + "'");
  }
  return configured;
}

std::string utc_stamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

/// Per-run output directory holding the resolved config and a partial-run
/// marker that is removed by finish().
class RunDir {
 public:
  RunDir(const RunConfig& cfg, const std::string& command) {
    const fs::path base = cfg.out.empty() ? fs::path("runs") : fs::path(cfg.out);
    const std::string name = utc_stamp() + "-" + cfg.fingerprint();
    path_ = base / name;
    for (int k = 2; fs::exists(path_); ++k) path_ = base / (name + "-" + std::to_string(k));
    fs::create_directories(path_);
    write_text(path_ / kPartialMarker, command + " started " + utc_stamp() + "\n");
    write_text(path_ / kConfigFile, cfg.to_text());
    artifacts_.push_back(path_ / kConfigFile);
  }

  const fs::path& path() const { return path_; }
  fs::path file(const std::string& name) {
    artifacts_.push_back(path_ / name);
    return path_ / name;
  }
  void finish(CommandResult& result) {
    fs::remove(path_ / kPartialMarker);
    result.run_dir = path_;
    result.artifacts.insert(result.artifacts.end(), artifacts_.begin(), artifacts_.end());
  }

 private:
  fs::path path_;
  std::vector<fs::path> artifacts_;
};

Json metrics_json(const train::MetricsReport& m) {
  return Json{{"mse", m.mse}, {"mae", m.mae}, {"samples", m.samples}};
}

}  // namespace

CommandResult cmd_train(const CommonOptions& common) {
  RunConfig cfg = RunConfig::from_kv(load_kv(common));
  const data::RawSeries raw = exp::load_dataset(cfg);
  cfg.resolve(raw.variates());
  cfg.threads = thread_cap(cfg.threads);
  RunDir dir(cfg, "train");

  exp::PreparedData prepared = exp::prepare(cfg, raw);
  RngStreams rng(cfg.seed);
  model::ModelParams init = model::init_params(cfg.model, rng);
  log::info("training " + std::to_string(init.store.total_elements()) + " parameters on " +
            std::to_string(prepared.train.size()) + " windows");
  train::TrainResult trained =
      train::train(init, cfg.model, prepared.train, prepared.val, cfg.train,
                   [](const train::EpochRecord& e) {
                     log::info("epoch " + std::to_string(e.epoch) + " loss " + fmt(e.train_loss) +
                               " val_mse " + fmt(e.val_mse) + " val_mae " + fmt(e.val_mae));
                   });

  train::EvalOptions eopts;
  eopts.batch_size = cfg.train.batch_size;
  eopts.threads = cfg.threads;
  const auto val = train::evaluate(trained.best, cfg.model, prepared.val, eopts);
  const auto test = train::evaluate(trained.best, cfg.model, prepared.test, eopts);

  data::save_norm_stats(dir.file(kNormFile), prepared.stats, raw.variable_names);
  ckpt::save(dir.file(kCheckpointFile),
             ckpt::capture(trained.best, cfg.to_text(), kNormFile, cfg.seed));
  trained.record.save(dir.file("run_record.jsonl"));
  Json m{{"fingerprint", cfg.fingerprint()},
         {"best_epoch", trained.record.best_epoch},
         {"val", metrics_json(val)},
         {"test", metrics_json(test)}};
  write_text(dir.file("metrics.json"), m.dump(2) + "\n");

  CommandResult result;
  result.summary = "train: best epoch " + std::to_string(trained.record.best_epoch) +
                   ", val mse " + fmt(val.mse) + " mae " + fmt(val.mae) + ", test mse " +
                   fmt(test.mse) + " mae " + fmt(test.mae) + " -> " + dir.path().string();
  dir.finish(result);
  return result;
}

CommandResult cmd_eval(const CommonOptions& common, const EvalOptions& eval) {
  if (eval.checkpoint.empty()) throw UsageError("eval: --checkpoint is required");
  if (eval.split != "val" && eval.split != "test") {
    throw UsageError("eval: --split must be val or test, got '" + eval.split + "'");
  }
  const ckpt::Checkpoint ck = ckpt::load(eval.checkpoint);
  config::KvConfig kv = config::KvConfig::parse(ck.config_text, "checkpoint config");
  const config::KvConfig extra = load_kv(common);
  for (const auto& [k, v] : extra.entries()) kv.set(k, v);
  if (!eval.data.empty()) {
    kv.set("data.source", "csv");
    kv.set("data.path", eval.data);
  }
  RunConfig cfg = RunConfig::from_kv(kv);
  if (eval.horizon && *eval.horizon != cfg.model.horizon) {
    throw ConfigError("eval: checkpoint predicts H=" + std::to_string(cfg.model.horizon) +
                      " steps but --horizon " + std::to_string(*eval.horizon) + " was requested");
  }
  const data::RawSeries raw = exp::load_dataset(cfg);
  if (!cfg.variates_auto && raw.variates() != cfg.model.variates) {
    throw ConfigError("eval: checkpoint was trained on C=" + std::to_string(cfg.model.variates) +
                      " variables but the data has C=" + std::to_string(raw.variates()));
  }
  cfg.resolve(raw.variates());
  cfg.threads = thread_cap(cfg.threads);

  std::optional<data::NormStats> stats;
  const fs::path norm_path = fs::path(eval.checkpoint).parent_path() / ck.norm_stats_ref;
  if (!ck.norm_stats_ref.empty() && fs::exists(norm_path)) {
    stats = data::load_norm_stats(norm_path);
  } else {
    log::warn("normalization stats not found next to the checkpoint; refitting on the training split");
  }
  exp::PreparedData prepared = exp::prepare(cfg, raw, stats ? &*stats : nullptr);

  RngStreams rng(cfg.seed);
  model::ModelParams params = model::init_params(cfg.model, rng);
  ckpt::restore(ck, params);

  const data::WindowStream& windows = eval.split == "val" ? prepared.val : prepared.test;
  train::EvalOptions eopts;
  eopts.batch_size = cfg.train.batch_size;
  eopts.threads = cfg.threads;
  const auto metrics = train::evaluate(params, cfg.model, windows, eopts);

  RunDir dir(cfg, "eval");
  const data::WindowSample last = windows.at(windows.size() - 1);
  const Tensor forecast =
      data::invert_norm(model::predict_tensor(last.x, params, cfg.model), prepared.stats);
  data::RawSeries dump{forecast, raw.variable_names, std::nullopt};
  const fs::path dump_path = eval.dump.empty() ? dir.file("forecast.csv") : fs::path(eval.dump);
  data::save_csv(dump_path, dump);

  Json m{{"checkpoint", eval.checkpoint}, {"split", eval.split}, {"metrics", metrics_json(metrics)}};
  write_text(dir.file("metrics.json"), m.dump(2) + "\n");

  CommandResult result;
  result.summary = "eval " + eval.split + ": mse " + fmt(metrics.mse) + " mae " +
                   fmt(metrics.mae) + " over " + std::to_string(metrics.samples) + " windows -> " +
                   dir.path().string();
  if (!eval.dump.empty()) result.artifacts.push_back(dump_path);
  dir.finish(result);
  return result;
}

CommandResult cmd_ablate(const CommonOptions& common) {
  RunConfig cfg = RunConfig::from_kv(load_kv(common));
  const exp::AblationSpec spec = exp::AblationSpec::from(cfg.ablation);
  spec.validate();
  const data::RawSeries raw = exp::load_dataset(cfg);
  {
    RunConfig probe = exp::ablation_cell(cfg, spec.axis, spec.values.front(),
                                         spec.horizons.front(), spec.seeds.front());
    probe.resolve(raw.variates());
  }
  cfg.threads = thread_cap(cfg.threads);
  RunDir dir(cfg, "ablate");

  std::string name;
  if (cfg.data.source == config::DataSource::kCsv) {
    name = fs::path(cfg.data.path).stem().string();
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  }
  const exp::AblationResult result = exp::run_ablation(spec, cfg, raw, name, cfg.threads);

  report::Annotations notes;
  for (const auto& a : result.annotations) notes.emplace_back(a.label, a.value);
  const auto written = report::emit_report(result.table, dir.path() / "ablation",
                                           report::Format::kBoth, notes);

  std::size_t failed = 0;
  for (const auto& c : result.cells) failed += c.ok ? 0 : 1;
  CommandResult out;
  out.artifacts = written;
  out.summary = "ablate " + spec.axis + ": " + std::to_string(result.cells.size()) + " runs, " +
                std::to_string(failed) + " failed -> " + dir.path().string();
  out.exit_code = failed == 0 ? kExitOk : kExitRuntime;
  dir.finish(out);
  return out;
}

CommandResult cmd_synth(const CommonOptions& common, const std::string& csv_path) {
  RunConfig cfg = RunConfig::from_kv(load_kv(common));
  const data::RawSeries series = data::synth_coupled(cfg.synth);
  RunDir dir(cfg, "synth");
  const fs::path path = csv_path.empty() ? dir.file("synth.csv") : fs::path(csv_path);
  data::save_csv(path, series);
  CommandResult result;
  if (!csv_path.empty()) result.artifacts.push_back(path);
  result.summary = "synth: " + std::to_string(series.length()) + " rows x " +
                   std::to_string(series.variates()) + " variables -> " + path.string();
  dir.finish(result);
  return result;
}

CommandResult cmd_gradcheck(const CommonOptions& common) {
  RunConfig cfg = RunConfig::from_kv(load_kv(common));
  RunDir dir(cfg, "gradcheck");
  constexpr double kTol = 1e-4;

  std::map<std::string, double> worst;
  model::ModelConfig small = model::gradcheck_config();
  for (auto mode : {model::LambdaMode::kFixed, model::LambdaMode::kLearnable}) {
    small.lambda_mode = mode;
    const auto r = model::check_gradients(small, cfg.seed);
    for (const auto& [group, err] : r.group_error) worst[group] = std::max(worst[group], err);
  }

  Json j = Json::object();
  std::ostringstream groups;
  bool ok = true;
  for (const auto& [group, err] : worst) {
    j[group] = err;
    ok = ok && err < kTol;
    log::info("gradcheck " + group + ": max rel err " + fmt(err));
    groups << " " << group << "=" << fmt(err);
  }
  write_text(dir.file("gradcheck.json"), j.dump(2) + "\n");

  CommandResult result;
  result.exit_code = ok ? kExitOk : kExitRuntime;
  result.summary = std::string("gradcheck ") + (ok ? "passed" : "FAILED") + ":" + groups.str();
  dir.finish(result);
  return result;
}

CommandResult cmd_scaling(const CommonOptions& common) {
  RunConfig cfg = RunConfig::from_kv(load_kv(common));
  RunDir dir(cfg, "scaling");
  const exp::ScalingReport r = exp::run_scaling_check(cfg.scaling, cfg.seed);

  std::ostringstream csv;
  csv << "variates,decoder_s,encoder_s\n";
  std::vector<double> c, dec, enc;
  for (const auto& row : r.rows) {
    char line[128];
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g\n", row.variates, row.decoder_s, row.encoder_s);
    csv << line;
    c.push_back(static_cast<double>(row.variates));
    dec.push_back(row.decoder_s);
    enc.push_back(row.encoder_s);
  }
  write_text(dir.file("scaling.csv"), csv.str());
  report::write_series(dir.file("decoder_time.dat"), c, dec, "variates decoder_seconds");
  report::write_series(dir.file("encoder_time.dat"), c, enc, "variates encoder_seconds");

  CommandResult result;
  result.summary = "scaling: decoder slope " + fmt(r.decoder_slope) + ", encoder slope " +
                   fmt(r.encoder_slope) + " -> " + dir.path().string();
  dir.finish(result);
  return result;
}

namespace {

void add_common(CLI::App* cmd, CommonOptions& common) {
  cmd->add_option("--config", common.config, "Configuration file");
  cmd->add_option("--set", common.overrides, "Override section.key=value (repeatable)");
  cmd->add_option("--seed", common.seed, "Master seed (run.seed)");
  cmd->add_option("--out", common.out, "Output directory root (run.out)");
  cmd->add_flag("--quiet", common.quiet, "Only warnings and errors on stderr");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Patch transformer with an inverted variate decoder"};
  app.name("invdec");
  app.require_subcommand(1);

  CommonOptions common;
  EvalOptions eval;
  std::string csv_path;

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  auto* evalc = app.add_subcommand("eval", "Evaluate a checkpoint");
  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  auto* synth = app.add_subcommand("synth", "Write a synthetic coupled series");
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  auto* scaling = app.add_subcommand("scaling", "Forward timing versus variable count");
  for (auto* cmd : {train, evalc, ablate, synth, grad, scaling}) add_common(cmd, common);
  evalc->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  evalc->add_option("--data", eval.data, "CSV to evaluate on (default: the training data)");
  evalc->add_option("--horizon", eval.horizon, "Expected horizon");
  evalc->add_option("--split", eval.split, "val or test");
  evalc->add_option("--dump", eval.dump, "Forecast CSV path");
  synth->add_option("--csv", csv_path, "Output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  log::set_level(common.quiet ? log::Level::kWarn : log::Level::kInfo);
  CommandResult result;
  try {
    if (*train) result = cmd_train(common);
    else if (*evalc) result = cmd_eval(common, eval);
    else if (*ablate) result = cmd_ablate(common);
    else if (*synth) result = cmd_synth(common, csv_path);
    else if (*grad) result = cmd_gradcheck(common);
    else result = cmd_scaling(common);
  } catch (const ConfigError& e) {
    err << "invdec: configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "invdec: usage error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "invdec: error: " << e.what() << "\n";
    return kExitRuntime;
  }
  out << result.summary << "\n";
  return result.exit_code;
}

}  // namespace invdec::cli
