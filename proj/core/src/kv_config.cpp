#include "invdec/kv_config.hpp"

#include <fstream>
#include <sstream>

#include "invdec/error.hpp"

namespace invdec::config {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

KvConfig KvConfig::parse(std::string_view text, const std::string& source) {
  KvConfig cfg;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto where = [&] { return source + ":" + std::to_string(line_no) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(where() + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) throw ParseError(where() + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where() + "expected key = value, got '" + line + "'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ParseError(where() + "missing key before '='");
    const std::string qualified = section.empty() ? key : section + "." + key;
    if (cfg.has(qualified)) throw ParseError(where() + "duplicate key '" + qualified + "'");
    cfg.entries_[qualified] = trim(std::string_view(line).substr(eq + 1));
  }
  return cfg;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void KvConfig::set(const std::string& key, std::string value) { entries_[key] = std::move(value); }

void KvConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw UsageError("override '" + std::string(assignment) + "' must have the form key=value");
  }
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw UsageError("override '" + std::string(assignment) + "' has an empty key");
  entries_[key] = trim(assignment.substr(eq + 1));
}

bool KvConfig::erase(const std::string& key) { return entries_.erase(key) != 0; }

std::optional<std::string> KvConfig::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> KvConfig::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

std::string KvConfig::to_text() const {
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::ostringstream out;
  for (const auto& [k, v] : entries_) {
    const auto dot = k.find('.');
    if (dot == std::string::npos) {
      out << k << " = " << v << "\n";
    } else {
      sections[k.substr(0, dot)][k.substr(dot + 1)] = v;
    }
  }
  bool first = out.tellp() == 0;
  for (const auto& [name, kv] : sections) {
    if (!first) out << "\n";
    first = false;
    out << "[" << name << "]\n";
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  }
  return out.str();
}

void KvConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config file " + path.string());
  out << to_text();
  if (!out) throw IoError("failed writing config file " + path.string());
}

}  // namespace invdec::config
