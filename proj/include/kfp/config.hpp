#pragma once

// Flat `key = value` run configuration. Keys before any section header apply
// to every command; keys under `[command]` apply only when that command runs.
// Command-line overrides take precedence over both. Every key has a default
// and unknown keys are rejected.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace kfp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& known_commands() {
  static const std::vector<std::string> c{"solve", "evolve", "poincare", "hormander", "decay", "oracle", "caccioppoli"};
  return c;
}

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// The full key table, in manifest order.
const std::vector<ConfigKey>& config_keys();
bool is_config_key(const std::string& key);

class RunConfig {
 public:
  /// All keys at their defaults.
  RunConfig();

  /// Parses config text for `command` (empty: taken from the `command` key).
  static RunConfig parse(const std::string& text, const std::string& command = "",
                         const std::string& origin = "<config>");
  static RunConfig load(const std::string& path, const std::string& command = "");

  /// Throws ConfigError naming the key when it is unknown.
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  long long get_int64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  /// One of `choices`, else ConfigError.
  const std::string& get_choice(const std::string& key, const std::vector<std::string>& choices) const;
  /// Comma-separated reals.
  std::vector<double> get_doubles(const std::string& key) const;

  const std::string& command() const { return get("command"); }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace kfp
