#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "invdec/dataio.hpp"
#include "invdec/kv_config.hpp"
#include "invdec/model.hpp"
#include "invdec/trainer.hpp"

namespace invdec::config {

enum class DataSource { kCsv, kSynth };

struct DataConfig {
  DataSource source = DataSource::kCsv;
  std::string path;
  data::TimestampMode timestamp = data::TimestampMode::kAuto;
  data::SplitSpec split;
};

struct AblationConfig {
  std::string axis = "lambda";  ///< lambda, dec_layers or heads
  std::vector<double> values{0.0, 0.5, 1.0};
  std::vector<std::size_t> horizons{96, 192, 336, 720};
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct ScalingConfig {
  std::vector<std::size_t> variates{64, 128, 256, 512};
  std::size_t d_model = 8;
  std::size_t heads = 1;
  std::size_t lookback = 96;
  std::size_t patch_len = 8;
  std::size_t repetitions = 5;
};

/// Every setting a command needs, merged from sections [run], [model],
/// [train], [data], [ablation], [synth] and [scaling].
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  DataConfig data;
  AblationConfig ablation;
  data::SynthParams synth;
  ScalingConfig scaling;
  std::uint64_t seed = 1;
  std::string out = "runs";
  std::size_t threads = 1;

  /// `model.variates = auto` until resolve() sees the data.
  bool variates_auto = true;
  /// `model.lambda = auto` until resolve() picks it from C.
  bool lambda_auto = true;

  /// Parses every key; unknown keys and malformed values throw ConfigError
  /// naming the key.
  static RunConfig from_kv(const KvConfig& kv);
  /// Full canonical key set, including defaults.
  KvConfig to_kv() const;
  std::string to_text() const { return to_kv().to_text(); }

  /// Fixes C from the data and the automatic λ, then validates. Throws
  /// ConfigError when an explicit C disagrees with the data or λ = auto
  /// falls in the 21 < C < 100 gap.
  void resolve(std::size_t data_variates);
  bool resolved() const { return !variates_auto && !lambda_auto; }

  /// 16 hex digits over the canonical text, ignoring run.out and run.threads.
  std::string fingerprint() const;
};

/// λ = 0.3 for C ≤ 21, 1.0 for C ≥ 100; ConfigError in between.
double auto_lambda(std::size_t variates);

/// Keys whose values differ between the canonical forms of a and b.
std::vector<std::string> diff(const RunConfig& a, const RunConfig& b);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace invdec::config
