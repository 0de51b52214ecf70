#include "kfp/config.hpp"
#include "kfp/run.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace kfp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "kfp_unit" / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult quiet_run(const RunConfig& cfg) {
  std::ostringstream out, err;
  return run(cfg, out, err);
}

}  // namespace

TEST_SUITE("config_run") {
  TEST_CASE("defaults cover every key") {
    const RunConfig cfg;
    for (const auto& k : config_keys()) CHECK(cfg.values().count(k.name) == 1);
    CHECK(cfg.get_int("n_x") == 64);
    CHECK(cfg.get("domain") == "interval");
    CHECK(is_config_key("cutoff"));
    CHECK(!is_config_key("n_y"));
  }

  TEST_CASE("sections refine the global keys for their command only") {
    const std::string text =
        "# comment\n"
        "n_x = 32\n"
        "cutoff = 8   # trailing comment\n"
        "[evolve]\n"
        "n_x = 16\n"
        "[solve]\n"
        "method = variational\n";
    const RunConfig solve = RunConfig::parse(text, "solve");
    CHECK(solve.command() == "solve");
    CHECK(solve.get_int("n_x") == 32);
    CHECK(solve.get_int("cutoff") == 8);
    CHECK(solve.get("method") == "variational");
    const RunConfig evolve = RunConfig::parse(text, "evolve");
    CHECK(evolve.get_int("n_x") == 16);
    CHECK(evolve.get("method") != "variational");
  }

  TEST_CASE("bad input is a ConfigError") {
    CHECK_THROWS_AS(RunConfig::parse("n_y = 3\n", "solve"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("[nonsense]\n", "solve"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("just words\n", "solve"), ConfigError);
    CHECK_THROWS_AS(RunConfig::load("/nonexistent/kfp.cfg", "solve"), ConfigError);
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("n_y", "3"), ConfigError);
    cfg.set("n_x", "many");
    CHECK_THROWS_AS(cfg.get_int("n_x"), ConfigError);
    cfg.set("domain", "sphere");
    CHECK_THROWS_AS(cfg.get_choice("domain", {"torus", "interval"}), ConfigError);
    cfg.set("center", "0.25,0.5");
    CHECK(cfg.get_doubles("center") == std::vector<double>{0.25, 0.5});
  }

  TEST_CASE("resolution ladders") {
    RunConfig cfg;
    cfg.set("n_x", "12");
    cfg.set("cutoff", "5");
    CHECK(resolutions(cfg) == std::vector<std::pair<int, int>>{{12, 5}});
    cfg.set("refine", "16:4,32:8");
    CHECK(resolutions(cfg) == std::vector<std::pair<int, int>>{{16, 4}, {32, 8}});
    cfg.set("refine", "16x4");
    CHECK_THROWS_AS(resolutions(cfg), ConfigError);
  }

  TEST_CASE("output directory resolution") {
    RunConfig cfg;
    cfg.set("command", "decay");
    cfg.set("output_dir", "/tmp/explicit");
    CHECK(resolve_output_dir(cfg) == "/tmp/explicit");
    cfg.set("output_dir", "");
    ::setenv("KFP_OUTPUT_ROOT", "/tmp/kfp_root", 1);
    CHECK(resolve_output_dir(cfg) == "/tmp/kfp_root/decay");
    ::unsetenv("KFP_OUTPUT_ROOT");
    CHECK(resolve_output_dir(cfg) == "kfp_runs/decay");
  }

  TEST_CASE("manufactured case satisfies its own equation") {
    // Finite differences of the closed form against the stated source, b = 0.
    const ManufacturedCase m{1.0};
    const DriftField b = DriftField::zero();
    const double h = 1e-4;
    for (double x0 : {0.1, 0.4}) {
      for (double v0 : {-1.0, 0.7}) {
        const double x[1] = {x0}, v[1] = {v0};
        const double xp[1] = {x0 + h}, xm[1] = {x0 - h}, vp[1] = {v0 + h}, vm[1] = {v0 - h};
        const double f = m.value(x, v);
        const double fvv = (m.value(x, vp) - 2 * f + m.value(x, vm)) / (h * h);
        const double fv = (m.value(x, vp) - m.value(x, vm)) / (2 * h);
        const double fx = (m.value(xp, v) - m.value(xm, v)) / (2 * h);
        CHECK(m.source(x, v, b) == doctest::Approx(-fvv + v0 * fv - v0 * fx).epsilon(1e-5));
      }
    }
  }

  TEST_CASE("solve runs and writes its artifacts") {
    RunConfig cfg;
    cfg.set("command", "solve");
    cfg.set("n_x", "16");
    cfg.set("cutoff", "8");
    cfg.set("drift", "cos");
    cfg.set("source", "manufactured");
    cfg.set("boundary", "manufactured");
    const fs::path dir = scratch("solve");
    cfg.set("output_dir", dir.string());
    const RunResult r = quiet_run(cfg);
    REQUIRE(r.exit_code == kExitOk);
    CHECK(fs::exists(dir / "result.csv"));
    CHECK(fs::exists(dir / "solution.kfpsnap"));
    CHECK(fs::exists(dir / "manifest.json"));
    const std::string csv = slurp(dir / "result.csv");
    CHECK(csv.rfind("method,n_x,N,iterations,residual,j_value,j_infinite,converged,manufactured_error\n", 0) == 0);
    const std::string manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"exit_code\": 0") != std::string::npos);
    CHECK(manifest.find("\"versions\"") != std::string::npos);
    const std::string trace = slurp(dir / "outflow.csv");
    CHECK(trace.rfind("x,v,value\n", 0) == 0);
    // Cutoff 8 becomes 9, so 10 velocity nodes; half leave through each end.
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 1 + 10);
  }

  TEST_CASE("repeat runs produce byte-identical CSVs") {
    RunConfig cfg;
    cfg.set("command", "hormander");
    cfg.set("domain", "torus");
    cfg.set("length", "6.283185307179586");
    cfg.set("n_x", "16");
    cfg.set("cutoff", "6");
    cfg.set("samples", "5");
    const fs::path a = scratch("repeat_a");
    const fs::path b = scratch("repeat_b");
    cfg.set("output_dir", a.string());
    REQUIRE(quiet_run(cfg).exit_code == kExitOk);
    cfg.set("output_dir", b.string());
    REQUIRE(quiet_run(cfg).exit_code == kExitOk);
    CHECK(slurp(a / "ratios.csv") == slurp(b / "ratios.csv"));
    CHECK(!slurp(a / "ratios.csv").empty());
  }

  TEST_CASE("exit codes") {
    SUBCASE("validation") {
      RunConfig cfg;
      cfg.set("command", "hormander");
      cfg.set("domain", "interval");
      cfg.set("output_dir", scratch("bad_domain").string());
      const RunResult r = quiet_run(cfg);
      CHECK(r.exit_code == kExitValidation);
      CHECK(!r.message.empty());
    }
    SUBCASE("oracle estimates need enough paths") {
      RunConfig cfg;
      cfg.set("command", "oracle");
      cfg.set("oracle_mode", "dirichlet");
      cfg.set("n_paths", "999");
      cfg.set("output_dir", scratch("few_paths").string());
      const RunResult r = quiet_run(cfg);
      CHECK(r.exit_code == kExitValidation);
      CHECK(r.message.find("n_paths") != std::string::npos);
    }
    SUBCASE("solver failure") {
      // Five time steps are too few for the decay fit.
      RunConfig cfg;
      cfg.set("command", "decay");
      cfg.set("domain", "torus");
      cfg.set("n_x", "4");
      cfg.set("cutoff", "4");
      cfg.set("drift", "zero");
      cfg.set("source", "zero");
      cfg.set("boundary", "zero");
      cfg.set("initial", "h1");
      cfg.set("final_time", "1");
      cfg.set("dt", "0.2");
      const fs::path dir = scratch("decay_fail");
      cfg.set("output_dir", dir.string());
      const RunResult r = quiet_run(cfg);
      CHECK(r.exit_code == kExitSolver);
      CHECK(slurp(dir / "manifest.json").find("\"exit_code\": 3") != std::string::npos);
    }
  }

  TEST_CASE("tabulated drift from a CSV file") {
    const fs::path dir = scratch("tabulated");
    fs::create_directories(dir);
    {
      std::ofstream t(dir / "drift.csv");
      t << "x,b\n";
      for (int k = 0; k <= 20; ++k) t << 0.05 * k << ',' << 0.3 * std::sin(6.283185307179586 * 0.05 * k) << '\n';
    }
    RunConfig cfg;
    cfg.set("command", "solve");
    cfg.set("n_x", "16");
    cfg.set("cutoff", "6");
    cfg.set("drift", "tabulated");
    cfg.set("drift_table", (dir / "drift.csv").string());
    cfg.set("source", "bump");
    cfg.set("boundary", "zero");
    cfg.set("output_dir", (dir / "out").string());
    CHECK(quiet_run(cfg).exit_code == kExitOk);
    const ModelSetup m = build_model(cfg);
    REQUIRE(m.drift.potential() != nullptr);
    double g[1];
    const double x[1] = {0.125};
    m.drift.potential()->gradient(x, g);
    CHECK(g[0] == doctest::Approx(0.3 * 0.5 * (std::sin(6.283185307179586 * 0.1) + std::sin(6.283185307179586 * 0.15))));
    cfg.set("drift_table", (dir / "missing.csv").string());
    CHECK_THROWS_AS(build_model(cfg), ConfigError);
  }
}
