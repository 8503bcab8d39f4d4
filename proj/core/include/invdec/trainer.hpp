#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "invdec/autodiff.hpp"
#include "invdec/dataio.hpp"
#include "invdec/model.hpp"

namespace invdec::train {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments per parameter, in store order.
struct AdamState {
  AdamState() = default;
  AdamState(const ParameterStore& params, AdamConfig config = {});

  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update from each parameter's `grad`:
///   m ← β₁m + (1−β₁)g,  v ← β₂v + (1−β₂)g²,
///   θ ← θ − lr·m̂/(√v̂ + ε),  m̂ = m/(1−β₁ᵗ),  v̂ = v/(1−β₂ᵗ).
/// Throws DimensionError when the state does not mirror the store.
void adam_step(ParameterStore& params, AdamState& state);

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  std::uint64_t seed = 1;
  bool shuffle = true;
  AdamConfig adam;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double val_mse = 0.0;
  double val_mae = 0.0;
  double seconds = 0.0;
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  ///< 1-based; 0 when no epoch ran
  bool stopped_early = false;

  double best_val_mse() const;
  /// One JSON object per line: an "epoch" line per epoch, then a "summary"
  /// line. Timings are omitted when `include_timings` is false.
  std::string to_jsonl(bool include_timings = true) const;
  static RunRecord from_jsonl(const std::string& text);
  void save(const std::filesystem::path& path) const;
};

struct MetricsReport {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t samples = 0;
};

struct EvalOptions {
  std::size_t batch_size = 64;
  /// Batches may be spread over threads; the reduction order is fixed, so
  /// the result does not depend on this value.
  std::size_t threads = 1;
};

/// MSE and MAE over every sample, horizon step and variable, in the
/// normalized space of `windows`. Throws ConfigError on an empty stream.
MetricsReport evaluate(model::ModelParams& params, const model::ModelConfig& cfg,
                       const data::WindowStream& windows, const EvalOptions& options = {});

/// Same reduction from explicit predictions and targets of equal shape.
MetricsReport metrics_from(const Tensor& pred, const Tensor& target);

struct TrainResult {
  model::ModelParams best;
  RunRecord record;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam on the MSE loss over shuffled training windows, one validation pass
/// per epoch, early stop after `patience` epochs without a strict decrease
/// in validation MSE. Returns the best-epoch parameters. Throws ConfigError
/// on an empty split and NumericError naming the first non-finite tensor
/// when the loss diverges.
TrainResult train(const model::ModelParams& initial, const model::ModelConfig& cfg,
                  const data::WindowStream& train_windows, const data::WindowStream& val_windows,
                  const TrainConfig& tcfg, const EpochCallback& on_epoch = {});

}  // namespace invdec::train
