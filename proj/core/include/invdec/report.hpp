#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace invdec::report {

/// One result row; columns in this order.
struct Row {
  std::string run_id;
  std::string axis;
  std::string value;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double mae = 0.0;
  double wall_s = 0.0;
  std::string flag;

  friend bool operator==(const Row&, const Row&) = default;
};

struct Table {
  std::vector<Row> rows;
};

const std::vector<std::string>& columns();

/// Header plus rows; text cells are quoted when they contain a comma,
/// quote or newline; numbers use 17 significant digits.
std::string to_csv(const Table& table);
/// Inverse of to_csv. Throws FormatError on a wrong header or cell count.
Table parse_csv(const std::string& text);

using Annotations = std::vector<std::pair<std::string, double>>;

/// {"columns": [...], "rows": [{...}], "annotations": [...]}; annotation
/// labels are prefixed "published: ".
std::string to_json(const Table& table, const Annotations& annotations = {});

enum class Format { kCsv, kJson, kBoth };

/// Writes `<stem>.csv` and/or `<stem>.json`; returns the paths written.
/// Throws UsageError "nothing to emit" on an empty table and IoError when a
/// file cannot be written.
std::vector<std::filesystem::path> emit_report(const Table& table, const std::filesystem::path& stem,
                                               Format format = Format::kBoth,
                                               const Annotations& annotations = {});

/// Two-column numeric text: optional `# x y` style comment, then one
/// `x y` pair per line.
void write_series(const std::filesystem::path& path, const std::vector<double>& x,
                  const std::vector<double>& y, const std::string& comment = "");
std::pair<std::vector<double>, std::vector<double>> read_series(const std::filesystem::path& path);

}  // namespace invdec::report
