#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iterator>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "invdec/tensor.hpp"

namespace invdec::data {

/// A multivariate series: values[T×C] with one name per column.
struct RawSeries {
  Tensor values;
  std::vector<std::string> variable_names;
  std::optional<std::string> frequency_label;

  std::size_t length() const { return values.dim(0); }
  std::size_t variates() const { return values.dim(1); }
};

enum class TimestampMode {
  kAuto,  ///< drop the first column if its first data cell is non-numeric
  kDrop,  ///< always drop the first column
  kData,  ///< treat the first column as data
};

struct CsvOptions {
  TimestampMode timestamp = TimestampMode::kAuto;
  /// Reject files with fewer rows (e.g. L + H). 0 disables the check.
  std::size_t min_rows = 0;
  std::optional<std::string> frequency_label;
};

/// Reads a comma-delimited file with a header row.
/// Throws ParseError (non-numeric cell), FormatError (ragged rows, missing
/// values, no data rows) or IoError.
RawSeries load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

/// Writes header + rows with 17 significant digits.
void save_csv(const std::filesystem::path& path, const RawSeries& series);

struct SplitSpec {
  double train_frac = 0.70;
  double val_frac = 0.10;
  double test_frac = 0.20;

  void validate() const;
};

struct SplitBounds {
  std::size_t train_end = 0;  ///< exclusive
  std::size_t val_end = 0;    ///< exclusive; test runs to T
  std::size_t total = 0;
};

/// Train length ⌊train_frac·T⌋, val ⌊val_frac·T⌋, remainder to test.
SplitBounds split_bounds(std::size_t total, const SplitSpec& split);

struct Segments {
  RawSeries train;
  RawSeries val;
  RawSeries test;
  SplitBounds bounds;
};

/// Chronological split. Requires T ≥ 10; throws ConfigError naming the
/// segment if any segment is shorter than `min_segment_len` (pass L + H).
Segments chronological_split(const RawSeries& series, const SplitSpec& split = {},
                             std::size_t min_segment_len = 0);

inline constexpr double kStdFloor = 1e-8;

/// Per-variable z-score statistics.
struct NormStats {
  Tensor mean;
  Tensor std;

  std::size_t variates() const { return mean.numel(); }
};

/// Mean and population std per column over the training segment only;
/// std is floored at kStdFloor.
NormStats fit_norm(const RawSeries& series, const SplitSpec& split = {});
/// Same, over every row of `segment`.
NormStats fit_norm_rows(const Tensor& segment);

RawSeries apply_norm(const RawSeries& series, const NormStats& stats);
Tensor apply_norm(const Tensor& values, const NormStats& stats);
/// x·std + mean per column for a [rows×C] tensor.
Tensor invert_norm(const Tensor& pred, const NormStats& stats);

/// Text format, one line per variable: `name=mean,std` (17 significant
/// digits), preceded by a `# invdec-norm v1` header line.
void save_norm_stats(const std::filesystem::path& path, const NormStats& stats,
                     const std::vector<std::string>& names);
NormStats load_norm_stats(const std::filesystem::path& path,
                          std::vector<std::string>* names = nullptr);

/// One supervised pair.
struct WindowSample {
  Tensor x;  ///< [L×C]
  Tensor y;  ///< [H×C]
  std::size_t origin_index = 0;
};

/// Stride-1 sliding windows over one segment: len − L − H + 1 samples in
/// ascending origin order. Cheap to copy (shares the segment).
class WindowStream {
 public:
  WindowStream(const Tensor& segment, std::size_t lookback, std::size_t horizon);

  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }
  std::size_t lookback() const noexcept { return lookback_; }
  std::size_t horizon() const noexcept { return horizon_; }
  std::size_t variates() const noexcept { return segment_->dim(1); }

  WindowSample at(std::size_t i) const;

  /// Writes the windows at `indices` into x[B×L×C] and y[B×H×C].
  void gather(const std::vector<std::size_t>& indices, Tensor& x, Tensor& y) const;

  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = WindowSample;
    using difference_type = std::ptrdiff_t;

    iterator(const WindowStream* stream, std::size_t i) : stream_(stream), i_(i) {}
    WindowSample operator*() const { return stream_->at(i_); }
    iterator& operator++() {
      ++i_;
      return *this;
    }
    bool operator==(const iterator& other) const { return i_ == other.i_; }

   private:
    const WindowStream* stream_;
    std::size_t i_;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, count_}; }

 private:
  std::shared_ptr<const Tensor> segment_;
  std::size_t lookback_;
  std::size_t horizon_;
  std::size_t count_;
};

/// Throws ConfigError when the segment is shorter than L + H.
WindowStream windows(const RawSeries& segment, std::size_t lookback, std::size_t horizon);

/// Parameters of the planted cross-variate generator.
struct SynthParams {
  std::size_t variates = 8;
  std::size_t length = 4000;
  double coupling = 0.8;  ///< κ ∈ [0, 1]
  std::size_t lag = 4;    ///< ℓ ≥ 1
  double noise = 0.01;    ///< σ of variable 0's additive noise
  std::uint64_t seed = 1;
  double ar_coef = 0.5;          ///< AR(1) coefficient of every process
  double sin_amplitude = 3.0;    ///< relative to the AR component's stationary std
  double period_min = 24.0;      ///< sinusoid period drawn per variable from
  double period_max = 24.0;      ///< [period_min, period_max]
};

/// Variables 1..C−1 are independent AR(1)+sinusoid processes. Variable 0 is
///   κ·mean(x_1..x_{C−1} at t−ℓ) + (1−κ)·a_0(t) + σ·ε(t)
/// with a_0 its own AR(1) process. Deterministic in `seed`.
RawSeries synth_coupled(const SynthParams& params);

}  // namespace invdec::data
