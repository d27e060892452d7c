#pragma once
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmlab/checkpoint.hpp"  // format_double

namespace mlmlab {

inline constexpr const char* kEnvPrefix = "MLMLAB_";
inline constexpr const char* kVersion = "0.1.0";

// key=value settings with '#' comments; environment variables named
// MLMLAB_<UPPERCASE_KEY> override file values.
class Config {
public:
  Config() = default;

  static Config from_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open config file: " + path.string());
    Config cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": expected key=value");
      std::string key = trim(line.substr(0, eq));
      if (key.empty())
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": empty key");
      cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return lookup(key) != nullptr; }

  std::string get(const std::string& key, const std::string& fallback) const {
    const std::string* v = lookup(key);
    return v ? *v : fallback;
  }

  std::string require(const std::string& key) const {
    const std::string* v = lookup(key);
    if (!v) throw std::runtime_error("missing required setting: " + key);
    return *v;
  }

  long long get_int(const std::string& key, long long fallback) const {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      long long out = std::stoll(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("trailing text");
      return out;
    } catch (const std::exception&) {
      throw std::runtime_error("setting " + key + " must be an integer, got '" + *v + "'");
    }
  }

  double get_double(const std::string& key, double fallback) const {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      double out = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("trailing text");
      return out;
    } catch (const std::exception&) {
      throw std::runtime_error("setting " + key + " must be a number, got '" + *v + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const std::string* v = lookup(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw std::runtime_error("setting " + key + " must be true|false, got '" + *v + "'");
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  static std::string env_name(const std::string& key) {
    std::string name = kEnvPrefix;
    for (char c : key) name.push_back(c == '.' || c == '-' ? '_' : to_upper(c));
    return name;
  }

private:
  // env override wins over the file value; cached so repeated reads agree
  const std::string* lookup(const std::string& key) const {
    auto envn = env_name(key);
    if (const char* env = std::getenv(envn.c_str())) {
      env_cache_[key] = env;
      return &env_cache_[key];
    }
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
  }

  static char to_upper(char c) { return c >= 'a' && c <= 'z' ? static_cast<char>(c - 32) : c; }

  static std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> env_cache_;
};

// Reproducibility record written next to each run's outputs: every resolved
// setting plus the seed and library version, sorted by key.
inline void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command,
                               const std::map<std::string, std::string>& settings) {
  std::filesystem::create_directories(out_dir);
  auto path = out_dir / "run_manifest.txt";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write manifest: " + path.string());
  f << "command=" << command << "\n";
  f << "version=" << kVersion << "\n";
  for (const auto& [k, v] : settings) f << k << "=" << v << "\n";
}

}  // namespace mlmlab
