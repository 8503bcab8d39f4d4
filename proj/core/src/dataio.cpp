#include "invdec/dataio.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "invdec/error.hpp"
#include "invdec/log.hpp"

namespace invdec::data {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  s = s.substr(b, e - b);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "null" ||
         cell == "NULL";
}

std::optional<double> parse_number(const std::string& cell) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RawSeries load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV file '" + path.string() + "'");

  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw FormatError("'" + path.string() + "': empty file (no header row)");

  std::vector<std::string> header = split_fields(lines[0]);
  if (lines.size() == 1) throw FormatError("'" + path.string() + "': no data rows");

  const std::vector<std::string> first_row = split_fields(lines[1]);
  bool drop_first = false;
  switch (options.timestamp) {
    case TimestampMode::kDrop:
      drop_first = true;
      break;
    case TimestampMode::kData:
      drop_first = false;
      break;
    case TimestampMode::kAuto:
      drop_first = !first_row.empty() && !is_missing(first_row[0]) &&
                   !parse_number(first_row[0]).has_value();
      if (drop_first) {
        log::warn("'" + path.string() + "': dropping non-numeric first column '" + header[0] +
                  "' as timestamp");
      }
      break;
  }

  const std::size_t fields = header.size();
  const std::size_t first_col = drop_first ? 1 : 0;
  if (fields <= first_col) throw FormatError("'" + path.string() + "': no value columns");
  const std::size_t cols = fields - first_col;
  const std::size_t rows = lines.size() - 1;

  std::vector<double> data;
  data.reserve(rows * cols);
  std::vector<std::string> missing;
  std::size_t missing_count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t line_no = r + 2;
    const std::vector<std::string> cells = split_fields(lines[r + 1]);
    if (cells.size() != fields) {
      throw FormatError("'" + path.string() + "': ragged row at line " + std::to_string(line_no) +
                        ": expected " + std::to_string(fields) + " fields, got " +
                        std::to_string(cells.size()));
    }
    for (std::size_t c = first_col; c < fields; ++c) {
      const std::string& cell = cells[c];
      if (is_missing(cell)) {
        ++missing_count;
        if (missing.size() < 10) {
          missing.push_back("line " + std::to_string(line_no) + " column '" + header[c] + "'");
        }
        data.push_back(0.0);
        continue;
      }
      const auto value = parse_number(cell);
      if (!value) {
        throw ParseError("'" + path.string() + "': line " + std::to_string(line_no) + ", column " +
                         std::to_string(c + 1) + " ('" + header[c] + "'): cannot parse '" + cell +
                         "' as a number");
      }
      data.push_back(*value);
    }
  }
  if (missing_count != 0) {
    std::string msg = "'" + path.string() + "': " + std::to_string(missing_count) +
                      " missing value(s), imputation is not supported: ";
    for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? "; " : "") + missing[i];
    if (missing_count > missing.size()) msg += "; ...";
    throw FormatError(msg);
  }
  if (options.min_rows != 0 && rows < options.min_rows) {
    throw ConfigError("'" + path.string() + "': " + std::to_string(rows) +
                      " rows is fewer than the required " + std::to_string(options.min_rows) +
                      " (L + H)");
  }

  RawSeries series;
  series.values = Tensor({rows, cols}, std::move(data));
  series.variable_names.assign(header.begin() + static_cast<std::ptrdiff_t>(first_col),
                               header.end());
  series.frequency_label = options.frequency_label;
  return series;
}

void save_csv(const std::filesystem::path& path, const RawSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write CSV file '" + path.string() + "'");
  const std::size_t rows = series.length(), cols = series.variates();
  for (std::size_t c = 0; c < cols; ++c) out << (c ? "," : "") << series.variable_names[c];
  out << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out << (c ? "," : "") << format17(series.values.at(r, c));
    out << '\n';
  }
  if (!out) throw IoError("failed writing CSV file '" + path.string() + "'");
}

void SplitSpec::validate() const {
  const bool in_range = train_frac > 0.0 && val_frac >= 0.0 && test_frac >= 0.0;
  if (!in_range || std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-12) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
}

SplitBounds split_bounds(std::size_t total, const SplitSpec& split) {
  split.validate();
  // Small epsilon so 0.7·100 = 70 despite binary rounding.
  const auto floor_frac = [total](double frac) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(total) + 1e-9));
  };
  SplitBounds b;
  b.total = total;
  b.train_end = floor_frac(split.train_frac);
  b.val_end = b.train_end + floor_frac(split.val_frac);
  return b;
}

namespace {

RawSeries slice_rows(const RawSeries& series, std::size_t begin, std::size_t end) {
  const std::size_t cols = series.variates();
  RawSeries out;
  out.variable_names = series.variable_names;
  out.frequency_label = series.frequency_label;
  const auto first = series.values.values().begin() + static_cast<std::ptrdiff_t>(begin * cols);
  const auto last = series.values.values().begin() + static_cast<std::ptrdiff_t>(end * cols);
  out.values = Tensor({end - begin, cols}, std::vector<double>(first, last));
  return out;
}

}  // namespace

Segments chronological_split(const RawSeries& series, const SplitSpec& split,
                             std::size_t min_segment_len) {
  const std::size_t total = series.length();
  if (total < 10) {
    throw ConfigError("series has " + std::to_string(total) + " rows; at least 10 are required to split");
  }
  const SplitBounds b = split_bounds(total, split);
  const std::size_t lens[3] = {b.train_end, b.val_end - b.train_end, total - b.val_end};
  const char* names[3] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i) {
    if (lens[i] == 0 || lens[i] < min_segment_len) {
      throw ConfigError(std::string(names[i]) + " segment too short: " + std::to_string(lens[i]) +
                        " rows, need at least " + std::to_string(min_segment_len) + " (L + H)");
    }
  }
  Segments seg;
  seg.bounds = b;
  seg.train = slice_rows(series, 0, b.train_end);
  seg.val = slice_rows(series, b.train_end, b.val_end);
  seg.test = slice_rows(series, b.val_end, total);
  return seg;
}

NormStats fit_norm_rows(const Tensor& segment) {
  const std::size_t rows = segment.dim(0), cols = segment.dim(1);
  NormStats stats{Tensor({cols}), Tensor({cols})};
  for (std::size_t c = 0; c < cols; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mu += segment.at(r, c);
    mu /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = segment.at(r, c) - mu;
      var += d * d;
    }
    var /= static_cast<double>(rows);
    stats.mean[c] = mu;
    stats.std[c] = std::max(std::sqrt(var), kStdFloor);
  }
  return stats;
}

NormStats fit_norm(const RawSeries& series, const SplitSpec& split) {
  const SplitBounds b = split_bounds(series.length(), split);
  if (b.train_end == 0) throw ConfigError("fit_norm: training segment is empty");
  const std::size_t cols = series.variates();
  const auto first = series.values.values().begin();
  Tensor train({b.train_end, cols},
               std::vector<double>(first, first + static_cast<std::ptrdiff_t>(b.train_end * cols)));
  return fit_norm_rows(train);
}

Tensor apply_norm(const Tensor& values, const NormStats& stats) {
  const std::size_t cols = values.shape().back();
  if (cols != stats.variates()) {
    throw ConfigError("normalization stats cover " + std::to_string(stats.variates()) +
                      " variables but data has " + std::to_string(cols));
  }
  Tensor out = values;
  const std::size_t rows = values.numel() / cols;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out[r * cols + c] = (out[r * cols + c] - stats.mean[c]) / stats.std[c];
  return out;
}

RawSeries apply_norm(const RawSeries& series, const NormStats& stats) {
  RawSeries out = series;
  out.values = apply_norm(series.values, stats);
  return out;
}

Tensor invert_norm(const Tensor& pred, const NormStats& stats) {
  const std::size_t cols = pred.shape().back();
  if (cols != stats.variates()) {
    throw ConfigError("normalization stats cover " + std::to_string(stats.variates()) +
                      " variables but prediction has " + std::to_string(cols));
  }
  Tensor out = pred;
  const std::size_t rows = pred.numel() / cols;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out[r * cols + c] = out[r * cols + c] * stats.std[c] + stats.mean[c];
  return out;
}

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats,
                     const std::vector<std::string>& names) {
  if (names.size() != stats.variates()) {
    throw ConfigError("save_norm_stats: " + std::to_string(names.size()) + " names for " +
                      std::to_string(stats.variates()) + " variables");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write normalization stats '" + path.string() + "'");
  out << "# invdec-norm v1\n";
  for (std::size_t c = 0; c < names.size(); ++c) {
    out << names[c] << '=' << format17(stats.mean[c]) << ',' << format17(stats.std[c]) << '\n';
  }
  if (!out) throw IoError("failed writing normalization stats '" + path.string() + "'");
}

NormStats load_norm_stats(const std::filesystem::path& path, std::vector<std::string>* names) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open normalization stats '" + path.string() + "'");
  std::vector<double> means, stds;
  std::vector<std::string> keys;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.rfind('=');
    const std::size_t comma = line.rfind(',');
    if (eq == std::string::npos || comma == std::string::npos || comma < eq) {
      throw FormatError("'" + path.string() + "' line " + std::to_string(line_no) +
                        ": expected name=mean,std");
    }
    const auto mu = parse_number(trim(line.substr(eq + 1, comma - eq - 1)));
    const auto sd = parse_number(trim(line.substr(comma + 1)));
    if (!mu || !sd || *sd <= 0.0) {
      throw ParseError("'" + path.string() + "' line " + std::to_string(line_no) +
                       ": invalid mean/std values");
    }
    keys.push_back(line.substr(0, eq));
    means.push_back(*mu);
    stds.push_back(*sd);
  }
  if (keys.empty()) throw FormatError("'" + path.string() + "': no variables");
  if (names) *names = keys;
  const std::size_t n = keys.size();
  return NormStats{Tensor({n}, std::move(means)), Tensor({n}, std::move(stds))};
}

WindowStream::WindowStream(const Tensor& segment, std::size_t lookback, std::size_t horizon)
    : segment_(std::make_shared<const Tensor>(segment)),
      lookback_(lookback),
      horizon_(horizon),
      count_(0) {
  if (segment.rank() != 2) throw DimensionError("windows: segment must be [T×C]");
  if (lookback == 0 || horizon == 0) throw ConfigError("windows: L and H must be positive");
  const std::size_t len = segment.dim(0);
  if (len < lookback + horizon) {
    throw ConfigError("windows: segment of " + std::to_string(len) +
                      " rows is shorter than L + H = " + std::to_string(lookback + horizon));
  }
  count_ = len - lookback - horizon + 1;
}

WindowSample WindowStream::at(std::size_t i) const {
  if (i >= count_) throw UsageError("window index out of range");
  const std::size_t cols = segment_->dim(1);
  const auto base = segment_->values().begin();
  const auto xb = base + static_cast<std::ptrdiff_t>(i * cols);
  const auto yb = base + static_cast<std::ptrdiff_t>((i + lookback_) * cols);
  WindowSample s;
  s.x = Tensor({lookback_, cols}, std::vector<double>(xb, xb + static_cast<std::ptrdiff_t>(lookback_ * cols)));
  s.y = Tensor({horizon_, cols}, std::vector<double>(yb, yb + static_cast<std::ptrdiff_t>(horizon_ * cols)));
  s.origin_index = i;
  return s;
}

void WindowStream::gather(const std::vector<std::size_t>& indices, Tensor& x, Tensor& y) const {
  const std::size_t cols = segment_->dim(1);
  const std::size_t b = indices.size();
  const std::size_t xn = lookback_ * cols, yn = horizon_ * cols;
  if (x.shape() != Shape{b, lookback_, cols}) x = Tensor({b, lookback_, cols});
  if (y.shape() != Shape{b, horizon_, cols}) y = Tensor({b, horizon_, cols});
  const double* src = segment_->data().data();
  for (std::size_t k = 0; k < b; ++k) {
    const std::size_t i = indices[k];
    if (i >= count_) throw UsageError("window index out of range");
    std::copy_n(src + i * cols, xn, x.data().data() + k * xn);
    std::copy_n(src + (i + lookback_) * cols, yn, y.data().data() + k * yn);
  }
}

WindowStream windows(const RawSeries& segment, std::size_t lookback, std::size_t horizon) {
  return WindowStream(segment.values, lookback, horizon);
}

RawSeries synth_coupled(const SynthParams& p) {
  if (p.variates < 2) throw ConfigError("synth_coupled: C must be at least 2");
  if (p.lag < 1) throw ConfigError("synth_coupled: lag must be at least 1");
  if (!(p.coupling >= 0.0 && p.coupling <= 1.0)) {
    throw ConfigError("synth_coupled: coupling kappa must lie in [0, 1], got " +
                      std::to_string(p.coupling));
  }
  if (!(std::abs(p.ar_coef) < 1.0)) throw ConfigError("synth_coupled: |ar_coef| must be < 1");
  if (p.length == 0) throw ConfigError("synth_coupled: T must be positive");
  if (!(p.period_min > 0.0) || p.period_max < p.period_min) {
    throw ConfigError("synth_coupled: invalid period range");
  }

  constexpr std::size_t kBurnIn = 200;
  const std::size_t C = p.variates;
  const std::size_t total = kBurnIn + p.lag + p.length;
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double ar_std = 1.0 / std::sqrt(1.0 - p.ar_coef * p.ar_coef);
  const double amp = p.sin_amplitude * ar_std;

  std::vector<double> period(C), phase(C);
  for (std::size_t c = 0; c < C; ++c) {
    period[c] = p.period_min + (p.period_max - p.period_min) * unit(rng);
    phase[c] = 2.0 * std::numbers::pi * unit(rng);
  }

  // raw[c][t] for c ≥ 1 is the full AR+sinusoid process; raw[0] is a_0.
  std::vector<std::vector<double>> raw(C, std::vector<double>(total));
  for (std::size_t c = 0; c < C; ++c) {
    double a = ar_std * normal(rng);
    for (std::size_t t = 0; t < total; ++t) {
      a = p.ar_coef * a + normal(rng);
      raw[c][t] = a;
      if (c != 0) {
        raw[c][t] += amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period[c] +
                                    phase[c]);
      }
    }
  }

  RawSeries out;
  out.values = Tensor({p.length, C});
  for (std::size_t c = 0; c < C; ++c) out.variable_names.push_back("v" + std::to_string(c));
  const std::size_t offset = kBurnIn + p.lag;
  const double inv_others = 1.0 / static_cast<double>(C - 1);
  for (std::size_t t = 0; t < p.length; ++t) {
    const std::size_t tau = offset + t;
    double lagged = 0.0;
    for (std::size_t c = 1; c < C; ++c) lagged += raw[c][tau - p.lag];
    lagged *= inv_others;
    const double eps = normal(rng);
    out.values.at(t, 0) = p.coupling * lagged + (1.0 - p.coupling) * raw[0][tau] + p.noise * eps;
    for (std::size_t c = 1; c < C; ++c) out.values.at(t, c) = raw[c][tau];
  }
  return out;
}

}  // namespace invdec::data
