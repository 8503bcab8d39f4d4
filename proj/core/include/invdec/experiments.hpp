#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "invdec/dataio.hpp"
#include "invdec/report.hpp"
#include "invdec/run_config.hpp"
#include "invdec/trainer.hpp"

namespace invdec::exp {

/// Loads the CSV named by data.path or generates the [synth] series.
/// Throws ConfigError naming data.path when it is required and empty.
data::RawSeries load_dataset(const config::RunConfig& cfg);

/// Normalized segments and their window streams.
struct PreparedData {
  data::Segments segments;  ///< z-scored with training statistics
  data::NormStats stats;
  data::WindowStream train;
  data::WindowStream val;
  data::WindowStream test;
};

/// Split, fit statistics on the training rows (or use `stats`), normalize,
/// window.
PreparedData prepare(const config::RunConfig& cfg, const data::RawSeries& raw,
                     const data::NormStats* stats = nullptr);

struct CellResult {
  bool ok = false;
  std::string error;
  train::MetricsReport val;
  train::MetricsReport test;
  train::RunRecord record;
  double wall_s = 0.0;
  model::ModelParams params;  ///< best parameters when requested
};

/// One full training run: resolve C and λ, prepare, init from cfg.seed,
/// train, evaluate the best parameters on val and test. Errors are caught
/// and reported in the result.
CellResult run_cell(config::RunConfig cfg, const data::RawSeries& raw, bool keep_params = false);

/// Cells are independent; up to `threads` run concurrently and results keep
/// input order.
std::vector<CellResult> run_cells(const std::vector<config::RunConfig>& cells,
                                  const data::RawSeries& raw, std::size_t threads);

struct AblationSpec {
  std::string axis = "lambda";  ///< lambda, dec_layers or heads
  std::vector<double> values;
  std::vector<std::size_t> horizons;
  std::vector<std::uint64_t> seeds;

  /// Throws ConfigError on an unknown axis, empty lists or non-integral
  /// layer/head values.
  void validate() const;
  static AblationSpec from(const config::AblationConfig& cfg);
};

/// Values published for the Weather ablation, for labelling only.
struct Annotation {
  std::string label;
  double value = 0.0;
};

struct AblationResult {
  report::Table table;  ///< test metrics; one row per (value, horizon, seed)
  std::vector<config::RunConfig> configs;
  std::vector<CellResult> cells;
  std::vector<Annotation> annotations;
};

/// The cell config for one grid point: `base` with the swept field, the
/// horizon and the seed replaced.
config::RunConfig ablation_cell(const config::RunConfig& base, const std::string& axis,
                                double value, std::size_t horizon, std::uint64_t seed);

/// Rows with λ = 0 are flagged "backbone"; failed cells carry "error: ...".
/// `dataset_name` "weather" attaches the published reference values.
AblationResult run_ablation(const AblationSpec& spec, const config::RunConfig& base,
                            const data::RawSeries& dataset, const std::string& dataset_name = "",
                            std::size_t threads = 1);

/// (baseline − candidate) / baseline; positive means the candidate is better.
double relative_improvement(double baseline, double candidate);

struct HorizonRow {
  std::size_t horizon = 0;  ///< 0 on the average row
  double baseline_mse = 0.0;
  double candidate_mse = 0.0;
  double baseline_mae = 0.0;
  double candidate_mae = 0.0;
  double improvement = 0.0;
  std::string error;
};

struct HorizonTable {
  std::vector<HorizonRow> rows;  ///< one per feasible or failed horizon
  HorizonRow average;            ///< over the rows without error
};

/// Averages over `rows` that carry no error; improvement of the averages.
HorizonRow average_row(const std::vector<HorizonRow>& rows);

/// λ = configured arm against the λ = 0 arm for each horizon, metric means
/// over seeds.
HorizonTable run_horizon_table(const config::RunConfig& base, const data::RawSeries& dataset,
                               const std::vector<std::size_t>& horizons = {96, 192, 336, 720},
                               const std::vector<std::uint64_t>& seeds = {1},
                               std::size_t threads = 1);

struct DimensionalityRow {
  std::size_t variates = 0;
  double coupled_val_mse = 0.0;   ///< λ = 1 arm, seed mean
  double backbone_val_mse = 0.0;  ///< λ = 0 arm, seed mean
  double improvement = 0.0;
  std::vector<double> coupled_per_seed;
  std::vector<double> backbone_per_seed;
  std::string error;
};

/// For each C, synth_coupled data with `generator` (variates replaced) and
/// λ ∈ {1, 0} arms over `seeds`. Throws ConfigError unless C_values is
/// ascending with every C ≥ 2.
std::vector<DimensionalityRow> run_dimensionality_study(const std::vector<std::size_t>& c_values,
                                                        const data::SynthParams& generator,
                                                        const std::vector<std::uint64_t>& seeds,
                                                        const config::RunConfig& base,
                                                        std::size_t threads = 1);

struct ScalingRow {
  std::size_t variates = 0;
  double decoder_s = 0.0;  ///< median forward time of decode_variates
  double encoder_s = 0.0;  ///< median forward time of encode_temporal
};

struct ScalingReport {
  std::vector<ScalingRow> rows;
  double decoder_slope = 0.0;
  double encoder_slope = 0.0;
};

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Eval-mode forward timings at fixed D and P with random parameters;
/// median of `repetitions` (≥ 5) runs after one warm-up.
ScalingReport run_scaling_check(const config::ScalingConfig& cfg, std::uint64_t seed = 1);

}  // namespace invdec::exp
