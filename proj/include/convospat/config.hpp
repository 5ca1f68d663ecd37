#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace convospat {

/// Flat `key = value` text: one pair per line, `#` starts a comment,
/// list values are comma separated. Used for run configurations and for
/// the key-value records the tools write (truth, fit metadata, reports).
class FlatConfig {
 public:
  static FlatConfig parse(std::istream& in, const std::string& source = "config");
  static FlatConfig load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  /// Throws InputError naming the first key outside `known`.
  void require_known(const std::set<std::string>& known) const;

  /// Writes `key=value` lines in key order.
  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace convospat
