#include "invdec/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "invdec/error.hpp"
#include "json.hpp"

namespace invdec::report {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Splits one CSV record starting at `pos`; advances past its line break.
std::vector<std::string> read_record(const std::string& text, std::size_t& pos) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  while (pos < text.size()) {
    const char c = text[pos++];
    if (quoted) {
      if (c == '"') {
        if (pos < text.size() && text[pos] == '"') {
          cell += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      cell += c;
    }
  }
  if (quoted) throw FormatError("report CSV: unterminated quoted cell");
  cells.push_back(std::move(cell));
  return cells;
}

double parse_num(const std::string& s, const char* column, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw FormatError("report CSV line " + std::to_string(line) + ": bad " + column + " '" + s + "'");
}

}  // namespace

const std::vector<std::string>& columns() {
  static const std::vector<std::string> cols = {"run_id", "axis", "value", "horizon", "seed",
                                                "mse",    "mae",  "wall_s", "flag"};
  return cols;
}

std::string to_csv(const Table& table) {
  std::ostringstream out;
  const auto& cols = columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const auto& r : table.rows) {
    out << quote(r.run_id) << ',' << quote(r.axis) << ',' << quote(r.value) << ',' << r.horizon
        << ',' << r.seed << ',' << num(r.mse) << ',' << num(r.mae) << ',' << num(r.wall_s) << ','
        << quote(r.flag) << "\n";
  }
  return out.str();
}

Table parse_csv(const std::string& text) {
  std::size_t pos = 0;
  if (read_record(text, pos) != columns()) throw FormatError("report CSV: unexpected header");
  Table table;
  std::size_t line = 1;
  while (pos < text.size()) {
    ++line;
    const auto cells = read_record(text, pos);
    if (cells.size() == 1 && cells[0].empty()) continue;
    if (cells.size() != columns().size()) {
      throw FormatError("report CSV line " + std::to_string(line) + ": expected " +
                        std::to_string(columns().size()) + " cells, got " +
                        std::to_string(cells.size()));
    }
    Row r;
    r.run_id = cells[0];
    r.axis = cells[1];
    r.value = cells[2];
    r.horizon = static_cast<std::size_t>(parse_num(cells[3], "horizon", line));
    r.seed = static_cast<std::uint64_t>(std::stoull(cells[4]));
    r.mse = parse_num(cells[5], "mse", line);
    r.mae = parse_num(cells[6], "mae", line);
    r.wall_s = parse_num(cells[7], "wall_s", line);
    r.flag = cells[8];
    table.rows.push_back(std::move(r));
  }
  return table;
}

std::string to_json(const Table& table, const Annotations& annotations) {
  nlohmann::ordered_json j;
  j["columns"] = columns();
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) {
    nlohmann::ordered_json row;
    row["run_id"] = r.run_id;
    row["axis"] = r.axis;
    row["value"] = r.value;
    row["horizon"] = r.horizon;
    row["seed"] = r.seed;
    row["mse"] = r.mse;
    row["mae"] = r.mae;
    row["wall_s"] = r.wall_s;
    row["flag"] = r.flag;
    j["rows"].push_back(std::move(row));
  }
  j["annotations"] = nlohmann::ordered_json::array();
  for (const auto& [label, value] : annotations) {
    j["annotations"].push_back({{"label", "published: " + label}, {"value", value}});
  }
  return j.dump(2) + "\n";
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::vector<std::filesystem::path> emit_report(const Table& table, const std::filesystem::path& stem,
                                               Format format, const Annotations& annotations) {
  if (table.rows.empty()) throw UsageError("nothing to emit");
  std::vector<std::filesystem::path> written;
  if (format != Format::kJson) {
    auto p = stem;
    p += ".csv";
    write_file(p, to_csv(table));
    written.push_back(p);
  }
  if (format != Format::kCsv) {
    auto p = stem;
    p += ".json";
    write_file(p, to_json(table, annotations));
    written.push_back(p);
  }
  return written;
}

void write_series(const std::filesystem::path& path, const std::vector<double>& x,
                  const std::vector<double>& y, const std::string& comment) {
  if (x.size() != y.size()) throw DimensionError("write_series: x and y lengths differ");
  std::ostringstream out;
  if (!comment.empty()) out << "# " << comment << "\n";
  for (std::size_t i = 0; i < x.size(); ++i) out << num(x[i]) << ' ' << num(y[i]) << "\n";
  write_file(path, out.str());
}

std::pair<std::vector<double>, std::vector<double>> read_series(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::pair<std::vector<double>, std::vector<double>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    double x = 0.0, y = 0.0;
    if (!(fields >> x >> y)) throw FormatError("bad series line in " + path.string() + ": " + line);
    out.first.push_back(x);
    out.second.push_back(y);
  }
  return out;
}

}  // namespace invdec::report
