#include "gpsysid/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gpsysid/error.hpp"

namespace gpsysid {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

}  // namespace

std::optional<double> parse_double(std::string_view token) {
  token = trim(token);
  if (token.empty()) return std::nullopt;
  if (token.front() == '+') token.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) return std::nullopt;
  return v;
}

bool CsvTable::has(std::string_view name) const {
  for (const auto& h : header) {
    if (h == name) return true;
  }
  return false;
}

const std::vector<double>& CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return columns[i];
  }
  throw Error(ErrorCode::ParseError, "missing column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::string_view text, std::string_view source) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  const auto lines = lines_of(text);
  const std::string where(source);
  if (lines.empty() || trim(lines[0]).empty()) {
    throw Error(ErrorCode::ParseError, where + ": missing header line");
  }
  CsvTable table;
  for (auto name : split(lines[0], ',')) {
    const auto t = trim(name);
    if (t.empty()) throw Error(ErrorCode::ParseError, where + ": empty column name in header");
    if (table.has(t)) {
      throw Error(ErrorCode::ParseError, where + ": duplicate column '" + std::string(t) + "'");
    }
    table.header.emplace_back(t);
  }
  table.columns.resize(table.header.size());
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto fields = split(lines[li], ',');
    if (fields.size() != table.header.size()) {
      throw Error(ErrorCode::ParseError, where + ":" + std::to_string(li + 1) + ": expected " +
                                             std::to_string(table.header.size()) +
                                             " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto v = parse_double(fields[c]);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::ParseError, where + ":" + std::to_string(li + 1) + ": column '" +
                                               table.header[c] + "': invalid number '" +
                                               std::string(trim(fields[c])) + "'");
      }
      table.columns[c].push_back(*v);
    }
  }
  return table;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(read_file(path), path.string());
}

std::string format_double(double v) {
  if (v == 0.0) return "0";  // also folds -0
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

std::string to_csv(const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size()) {
    throw Error(ErrorCode::DimensionMismatch, "CSV header/column count mismatch");
  }
  const std::size_t rows = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns) {
    if (c.size() != rows) throw Error(ErrorCode::DimensionMismatch, "CSV columns differ in length");
  }
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out += ',';
      out += format_double(columns[c][r]);
    }
    out += '\n';
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::InvalidArgument, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::InvalidArgument, "cannot move output into place: '" + path.string() + "'");
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------- Config

Config Config::parse(std::string_view text, const ConfigSchema& schema, std::string_view source) {
  Config cfg;
  const std::string where(source);
  std::string section;
  const auto lines = split(text, '\n');
  for (std::size_t li = 0; li < lines.size(); ++li) {
    auto line = lines[li];
    const auto hash = line.find_first_of("#;");
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string at = where + ":" + std::to_string(li + 1) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorCode::ParseError, at + "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!schema.contains(section)) {
        throw Error(ErrorCode::ParseError, at + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::ParseError, at + "expected key = value");
    if (section.empty()) throw Error(ErrorCode::ParseError, at + "key outside of any [section]");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    const auto& allowed = schema.find(section)->second;
    if (!allowed.contains(key)) {
      throw Error(ErrorCode::ParseError, at + "unknown key '" + key + "' in [" + section + "]");
    }
    if (cfg.has(section, key)) {
      throw Error(ErrorCode::ParseError, at + "duplicate key '" + key + "' in [" + section + "]");
    }
    cfg.values_[section][key] = value;
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path, const ConfigSchema& schema) {
  return parse(read_file(path), schema, path.string());
}

bool Config::has(std::string_view section, std::string_view key) const {
  return get(section, key).has_value();
}

std::optional<std::string> Config::get(std::string_view section, std::string_view key) const {
  const auto s = values_.find(section);
  if (s == values_.end()) return std::nullopt;
  const auto k = s->second.find(std::string(key));
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

std::string Config::get_string(std::string_view section, std::string_view key,
                               std::string_view fallback) const {
  return get(section, key).value_or(std::string(fallback));
}

namespace {

std::string field_name(std::string_view section, std::string_view key) {
  return "[" + std::string(section) + "] " + std::string(key);
}

}  // namespace

std::optional<double> Config::get_double(std::string_view section, std::string_view key) const {
  const auto raw = get(section, key);
  if (!raw) return std::nullopt;
  const auto v = parse_double(*raw);
  if (!v || !std::isfinite(*v)) {
    throw Error(ErrorCode::ParseError,
                field_name(section, key) + ": expected a number, got '" + *raw + "'");
  }
  return v;
}

double Config::get_double(std::string_view section, std::string_view key, double fallback) const {
  return get_double(section, key).value_or(fallback);
}

std::optional<long long> Config::get_int(std::string_view section, std::string_view key) const {
  const auto raw = get(section, key);
  if (!raw) return std::nullopt;
  long long v = 0;
  const auto t = trim(*raw);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw Error(ErrorCode::ParseError,
                field_name(section, key) + ": expected an integer, got '" + *raw + "'");
  }
  return v;
}

long long Config::get_int(std::string_view section, std::string_view key, long long fallback) const {
  return get_int(section, key).value_or(fallback);
}

bool Config::get_bool(std::string_view section, std::string_view key, bool fallback) const {
  const auto raw = get(section, key);
  if (!raw) return fallback;
  if (*raw == "true" || *raw == "1" || *raw == "yes" || *raw == "on") return true;
  if (*raw == "false" || *raw == "0" || *raw == "no" || *raw == "off") return false;
  throw Error(ErrorCode::ParseError,
              field_name(section, key) + ": expected true/false, got '" + *raw + "'");
}

std::optional<std::vector<double>> Config::get_list(std::string_view section,
                                                    std::string_view key) const {
  const auto raw = get(section, key);
  if (!raw) return std::nullopt;
  std::vector<double> out;
  for (auto tok : split(*raw, ',')) {
    const auto v = parse_double(tok);
    if (!v || !std::isfinite(*v)) {
      throw Error(ErrorCode::ParseError, field_name(section, key) +
                                             ": expected comma-separated numbers, got '" + *raw +
                                             "'");
    }
    out.push_back(*v);
  }
  return out;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  values_[section][key] = value;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [section, kv] : values_) {
    for (const auto& [k, v] : kv) out += section + "." + k + "=" + v + "\n";
  }
  return out;
}

}  // namespace gpsysid
