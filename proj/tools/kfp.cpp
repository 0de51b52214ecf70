// Command-line front end: kfp [command] [config-file] [--key value ...]

#include "kfp/config.hpp"
#include "kfp/run.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <map>

int main(int argc, char** argv) {
  CLI::App app{"Kinetic Fokker-Planck solver and inequality lab"};
  app.set_version_flag("--version", std::string(kfp::kVersion));
  std::vector<std::string> positional;
  app.add_option("args", positional, "command and/or config file")->expected(0, 2);
  std::string config_path;
  app.add_option("--config", config_path, "configuration file");

  std::map<std::string, std::string> overrides;
  for (const auto& key : kfp::config_keys()) {
    app.add_option_function<std::string>(
        "--" + key.name, [&overrides, name = key.name](const std::string& v) { overrides[name] = v; },
        key.help + " (default: " + (key.default_value.empty() ? "\"\"" : key.default_value) + ")");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "kfp: " << e.what() << '\n';
    return kfp::kExitValidation;
  }

  std::string command;
  for (const auto& p : positional) {
    const auto& cmds = kfp::known_commands();
    if (command.empty() && std::find(cmds.begin(), cmds.end(), p) != cmds.end()) {
      command = p;
    } else if (config_path.empty()) {
      config_path = p;
    } else {
      std::cerr << "kfp: unexpected argument '" << p << "'\n";
      return kfp::kExitValidation;
    }
  }
  if (const auto it = overrides.find("command"); it != overrides.end()) command = it->second;

  try {
    kfp::RunConfig cfg = config_path.empty() ? kfp::RunConfig() : kfp::RunConfig::load(config_path, command);
    if (!command.empty()) cfg.set("command", command);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    const kfp::RunResult r = kfp::run(cfg, std::cout, std::cerr);
    std::cout << "artifacts in " << r.output_dir << '\n';
    return r.exit_code;
  } catch (const kfp::ConfigError& e) {
    std::cerr << "kfp: " << e.what() << '\n';
    return kfp::kExitValidation;
  }
}
