#include "convospat/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "convospat/error.hpp"
#include "convospat/io.hpp"

namespace convospat {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

FlatConfig FlatConfig::parse(std::istream& in, const std::string& source) {
  FlatConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(source + " line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw InputError(source + " line " + std::to_string(lineno) + ": empty key");
    if (cfg.has(key)) {
      throw InputError(source + " line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

FlatConfig FlatConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse(in, path.string());
}

void FlatConfig::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

std::string FlatConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw InputError("missing required key '" + key + "'");
  return it->second;
}

std::string FlatConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

long long FlatConfig::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw InputError("key '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

long long FlatConfig::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double FlatConfig::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  try {
    return parse_double(v);
  } catch (const InputError&) {
    throw InputError("key '" + key + "' expects a number, got '" + v + "'");
  }
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InputError("key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> FlatConfig::get_strings(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get_string(key));
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::vector<double> FlatConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_strings(key)) {
    try {
      out.push_back(parse_double(s));
    } catch (const InputError&) {
      throw InputError("key '" + key + "' expects a list of numbers, got '" + s + "'");
    }
  }
  return out;
}

void FlatConfig::require_known(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (!known.count(key)) throw InputError("unknown configuration key '" + key + "'");
  }
}

void FlatConfig::write(std::ostream& out) const {
  for (const auto& [key, value] : values_) out << key << '=' << value << '\n';
}

void FlatConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write(out);
}

}  // namespace convospat
