#include "kfp/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace kfp {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"command", "solve", "solve | evolve | poincare | hormander | decay | oracle | caccioppoli"},
      // Domain and discretization.
      {"domain", "interval", "torus | interval"},
      {"length", "1", "side length L of U"},
      {"n_x", "64", "spatial nodes per axis"},
      {"d_x", "1", "spatial dimension (Torus: 1 or 2)"},
      {"d_v", "1", "velocity dimension"},
      {"cutoff", "16", "Hermite cutoff N"},
      {"scheme", "default", "default | spectral | upwind | centered"},
      {"velocity_scheme", "spectral", "spectral | monotone"},
      // Model.
      {"drift", "zero", "zero | cos | sin | tabulated"},
      {"drift_amplitude", "0.3", "a in H = a cos(2 pi x / L) or a sin(2 pi x / L)"},
      {"drift_table", "", "CSV file of x,b rows for drift = tabulated"},
      {"source", "zero", "zero | manufactured | bump | random"},
      {"source_amplitude", "1", "scale of the bump or random source"},
      {"boundary", "zero", "zero | one | right_exit | manufactured"},
      // Stationary solver.
      {"method", "direct", "direct | variational | fixed_point"},
      {"residual_tol", "1e-9", "residual acceptance threshold"},
      {"tol_j", "1e-22", "variational stopping level for J relative to ||f*||_m^2"},
      {"tol_g", "1e-13", "variational relative gradient tolerance"},
      {"max_iter", "200", "fixed-point iteration cap"},
      {"fixed_point_tol", "1e-8", "fixed-point relative step tolerance"},
      // Time evolution.
      {"initial", "h1", "h1 | bump | manufactured | zero"},
      {"final_time", "10", "final time T"},
      {"dt", "0", "time step; 0 selects T/400"},
      {"time_scheme", "implicit_euler", "implicit_euler | crank_nicolson"},
      {"window_start", "-1", "fit window start; negative selects T/2"},
      {"window_end", "-1", "fit window end; negative selects T"},
      // Inequalities.
      {"poincare_kind", "hyp_mean", "velocity | hyp_mean | hyp_zero | kinetic"},
      {"refine", "", "resolutions n_x:N separated by commas, e.g. 64:16,128:24"},
      {"n_t", "16", "time slices for kinetic problems"},
      {"period", "6.283185307179586", "time period for kinetic problems"},
      {"alpha", "0.3", "fractional order"},
      {"v0", "3", "velocity cutoff radius"},
      {"samples", "100", "ensemble size"},
      {"max_wavenumber", "6", "largest wavenumber in random fields"},
      {"max_degree", "6", "largest Hermite degree in random fields"},
      {"max_frequency", "3", "largest temporal frequency in kinetic ensembles"},
      {"kinetic", "false", "hormander: use the space-time ensemble"},
      {"radius", "0.3", "caccioppoli ball radius"},
      {"center", "0.5", "caccioppoli ball center (comma-separated)"},
      // Langevin oracle.
      {"oracle_mode", "dirichlet", "dirichlet | equilibrium"},
      {"n_paths", "100000", "Monte Carlo paths"},
      {"dt_sde", "0", "SDE step; 0 selects 1e-3 L / 6"},
      {"time_cap", "10000", "path time cap"},
      {"probes", "0.25:0.5,0.5:0,0.75:-0.5", "probe points x:v separated by commas"},
      {"horizon", "10", "equilibrium run length"},
      {"initial_variance", "0", "equilibrium initial velocity variance"},
      // Run control.
      {"output_dir", "", "output directory; empty selects $KFP_OUTPUT_ROOT/<command> or kfp_runs/<command>"},
      {"seed", "2024", "random seed"},
      {"threads", "0", "worker threads; 0 uses all cores"},
  };
  return keys;
}

bool is_config_key(const std::string& key) {
  const auto& keys = config_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == key; });
}

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_command(const std::string& s) {
  const auto& c = known_commands();
  return std::find(c.begin(), c.end(), s) != c.end();
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::string& command, const std::string& origin) {
  struct Entry {
    std::string section, key, value;
    int line;
  };
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!is_command(section)) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!is_config_key(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!section.empty() && key == "command") throw ConfigError(where + ": 'command' must be set outside sections");
    entries.push_back({section, key, value, line_no});
  }

  RunConfig cfg;
  for (const auto& e : entries) {
    if (e.section.empty()) cfg.values_[e.key] = e.value;
  }
  if (!command.empty()) cfg.values_["command"] = command;
  if (!is_command(cfg.command())) throw ConfigError("unknown command '" + cfg.command() + "'");
  for (const auto& e : entries) {
    if (e.section == cfg.command()) cfg.values_[e.key] = e.value;
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path, const std::string& command) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), command, path);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!is_config_key(key)) throw ConfigError("unknown key '" + key + "'");
  if (key == "command" && !is_command(value)) throw ConfigError("unknown command '" + value + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
    throw ConfigError("key '" + key + "': expected a real number, got '" + s + "'");
  }
  return v;
}

long long RunConfig::get_int64(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0' || errno == ERANGE) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + s + "'");
  }
  return v;
}

int RunConfig::get_int(const std::string& key) const {
  const long long v = get_int64(key);
  if (v < -2147483647LL || v > 2147483647LL) throw ConfigError("key '" + key + "': integer out of range");
  return static_cast<int>(v);
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + s + "'");
}

const std::string& RunConfig::get_choice(const std::string& key, const std::vector<std::string>& choices) const {
  const std::string& s = get(key);
  if (std::find(choices.begin(), choices.end(), s) == choices.end()) {
    std::string list;
    for (const auto& c : choices) list += (list.empty() ? "" : ", ") + c;
    throw ConfigError("key '" + key + "': '" + s + "' is not one of " + list);
  }
  return s;
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0' || !std::isfinite(v)) {
      throw ConfigError("key '" + key + "': bad list entry '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace kfp
