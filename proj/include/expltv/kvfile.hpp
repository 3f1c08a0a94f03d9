#pragma once

// Flat `key = value` text files used for configs, cohort specs and reports.
// '#' starts a comment; blank lines are ignored; keys are unique.

#include <map>
#include <string>
#include <vector>

namespace expltv {

class KvFile {
 public:
  static KvFile parse(const std::string& text);
  static KvFile load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  /// Throws ConfigError naming any key not in `known`.
  void require_known(const std::vector<std::string>& known) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

 private:
  std::map<std::string, std::string> values_;
};

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Strict full-string parse; throws DataError on trailing junk or non-numbers.
double parse_double(const std::string& s);
long long parse_int(const std::string& s);

}  // namespace expltv
