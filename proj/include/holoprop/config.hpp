#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace holoprop {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key/value document with [section] headers. Every key a run reads is
// recorded (with the value actually used, defaults included) so the fully
// resolved config can be written next to the outputs; keys nobody consumed
// are rejected.
class RunConfig {
 public:
  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_string(const std::string& text, const std::string& origin = "<string>");

  // HOLOPROP_<SECTION>_<KEY>=value (section names contain no underscores).
  void apply_env_overrides();
  void set(const std::string& section, const std::string& key, const std::string& value);

  bool has(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback);
  double get_double(const std::string& section, const std::string& key, double fallback);
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback);
  bool get_bool(const std::string& section, const std::string& key, bool fallback);
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback);
  std::vector<std::uint64_t> get_u64s(const std::string& section, const std::string& key,
                                      const std::vector<std::uint64_t>& fallback);
  std::vector<std::string> get_strings(const std::string& section, const std::string& key,
                                       const std::vector<std::string>& fallback);

  // Throws listing every key that was set but never read.
  void require_all_consumed() const;

  // Canonical text of everything consumed, with the values actually used.
  std::string resolved_text() const;

 private:
  std::string raw_get(const std::string& section, const std::string& key, bool& found);
  void record(const std::string& section, const std::string& key, const std::string& value);

  std::map<std::pair<std::string, std::string>, std::string> values_;
  std::map<std::pair<std::string, std::string>, bool> consumed_;
  std::map<std::pair<std::string, std::string>, std::string> resolved_;
};

}  // namespace holoprop
