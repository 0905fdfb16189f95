#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace gpsysid {

/// Numeric CSV with a mandatory header, stored column-major.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  bool has(std::string_view name) const;
  /// Throws ParseError naming the missing column.
  const std::vector<double>& column(std::string_view name) const;
};

/// Comma-separated, '.' decimal, no locale. Blank trailing lines are
/// ignored; anything else malformed throws ParseError with line and column.
CsvTable parse_csv(std::string_view text, std::string_view source = "csv");
CsvTable read_csv(const std::filesystem::path& path);

/// Shortest form that still carries 17 significant digits (round-trips).
std::string format_double(double v);

/// Columns must have equal length.
std::string to_csv(const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& columns);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);

/// Allowed keys per section.
using ConfigSchema = std::map<std::string, std::set<std::string>, std::less<>>;

/// Flat `key = value` text with `[section]` headers; '#' and ';' start
/// comments. Unknown sections/keys and duplicates are ParseErrors.
class Config {
 public:
  static Config parse(std::string_view text, const ConfigSchema& schema,
                      std::string_view source = "config");
  static Config load(const std::filesystem::path& path, const ConfigSchema& schema);

  bool has(std::string_view section, std::string_view key) const;
  std::optional<std::string> get(std::string_view section, std::string_view key) const;
  std::string get_string(std::string_view section, std::string_view key,
                         std::string_view fallback) const;
  std::optional<double> get_double(std::string_view section, std::string_view key) const;
  double get_double(std::string_view section, std::string_view key, double fallback) const;
  std::optional<long long> get_int(std::string_view section, std::string_view key) const;
  long long get_int(std::string_view section, std::string_view key, long long fallback) const;
  bool get_bool(std::string_view section, std::string_view key, bool fallback) const;
  /// Comma-separated numbers.
  std::optional<std::vector<double>> get_list(std::string_view section, std::string_view key) const;

  void set(const std::string& section, const std::string& key, const std::string& value);
  /// "section.key=value" lines in sorted order; stable input for hashing.
  std::string canonical() const;

 private:
  std::map<std::string, std::map<std::string, std::string>, std::less<>> values_;
};

/// Locale-independent number parsing of a whole token (surrounding blanks allowed).
std::optional<double> parse_double(std::string_view token);

}  // namespace gpsysid
