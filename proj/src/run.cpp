#include "kfp/run.hpp"

#include "kfp/inequality_lab.hpp"
#include "kfp/kinetic_evolution.hpp"
#include "kfp/snapshot.hpp"
#include "kfp/variational_solver.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <fftw3.h>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

namespace kfp {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

double wave(double length) { return 2.0 * std::numbers::pi / length; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Piecewise-linear b(x) from a two-column CSV with its running integral H.
Potential tabulated_potential(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("drift_table: cannot read '" + path + "'");
  std::vector<double> xs, bs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double x, b;
    if (!(ss >> x >> b)) {
      if (xs.empty()) continue;  // header row
      throw ConfigError("drift_table: malformed row '" + line + "'");
    }
    if (!xs.empty() && x <= xs.back()) throw ConfigError("drift_table: x must be strictly increasing");
    xs.push_back(x);
    bs.push_back(b);
  }
  if (xs.size() < 2) throw ConfigError("drift_table: need at least two rows");
  std::vector<double> hs(xs.size(), 0.0);
  for (std::size_t k = 1; k < xs.size(); ++k) hs[k] = hs[k - 1] + 0.5 * (bs[k] + bs[k - 1]) * (xs[k] - xs[k - 1]);

  auto locate = [xs](double x) {
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    std::size_t k = it == xs.begin() ? 0 : static_cast<std::size_t>(it - xs.begin()) - 1;
    return std::min(k, xs.size() - 2);
  };
  auto drift_at = [xs, bs, locate](double x) {
    const std::size_t k = locate(x);
    const double t = std::clamp((x - xs[k]) / (xs[k + 1] - xs[k]), 0.0, 1.0);
    return (1.0 - t) * bs[k] + t * bs[k + 1];
  };
  Potential p;
  p.name = "tabulated";
  p.value = [xs, bs, hs, locate](std::span<const double> x) {
    const std::size_t k = locate(x[0]);
    const double s = std::clamp(x[0], xs.front(), xs.back()) - xs[k];
    const double h = xs[k + 1] - xs[k];
    const double slope = (bs[k + 1] - bs[k]) / h;
    return hs[k] + bs[k] * s + 0.5 * slope * s * s;
  };
  p.gradient = [drift_at](std::span<const double> x, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = drift_at(x[0]);
  };
  return p;
}

std::optional<Potential> make_potential(const RunConfig& cfg, double length) {
  const std::string& kind = cfg.get_choice("drift", {"zero", "cos", "sin", "tabulated"});
  const double a = cfg.get_double("drift_amplitude");
  const double k = wave(length);
  if (kind == "zero") return std::nullopt;
  if (kind == "tabulated") return tabulated_potential(cfg.get("drift_table"));
  Potential p;
  p.name = kind;
  if (kind == "cos") {
    p.value = [a, k](std::span<const double> x) { return a * std::cos(k * x[0]); };
    p.gradient = [a, k](std::span<const double> x, std::span<double> g) {
      std::fill(g.begin(), g.end(), 0.0);
      g[0] = -a * k * std::sin(k * x[0]);
    };
  } else {
    p.value = [a, k](std::span<const double> x) { return a * std::sin(k * x[0]); };
    p.gradient = [a, k](std::span<const double> x, std::span<double> g) {
      std::fill(g.begin(), g.end(), 0.0);
      g[0] = a * k * std::cos(k * x[0]);
    };
  }
  return p;
}

double bump(std::span<const double> x, const DomainSpec& dom) {
  double r2 = 0.0;
  for (int j = 0; j < dom.d_x; ++j) {
    const double d = (x[j] - 0.5 * dom.extents[j]) / (0.15 * dom.extents[j]);
    r2 += d * d;
  }
  return std::exp(-r2);
}

}  // namespace

double ManufacturedCase::value(std::span<const double> x, std::span<const double> v) const {
  const double k = wave(length);
  return std::cos(k * x[0]) * (1.0 + 0.5 * v[0]) + 0.3 * std::sin(k * x[0]) * v[0] * v[0];
}

double ManufacturedCase::source(std::span<const double> x, std::span<const double> v, const DriftField& b) const {
  const double k = wave(length);
  const double c = std::cos(k * x[0]);
  const double s = std::sin(k * x[0]);
  const double w = v[0];
  const double f_v = 0.5 * c + 0.6 * s * w;
  const double f_vv = 0.6 * s;
  const double f_x = -k * s * (1.0 + 0.5 * w) + 0.3 * k * c * w * w;
  std::vector<double> drift(v.size());
  b.evaluate(x, v, drift);
  return -f_vv + w * f_v - w * f_x + drift[0] * f_v;
}

ModelSetup build_model(const RunConfig& cfg) { return build_model(cfg, cfg.get_int("n_x"), cfg.get_int("cutoff")); }

ModelSetup build_model(const RunConfig& cfg, int n_x, int cutoff) {
  ModelSetup m;
  const std::string& kind = cfg.get_choice("domain", {"torus", "interval"});
  const double length = cfg.get_double("length");
  const int d_x = cfg.get_int("d_x");
  const int d_v = cfg.get_int("d_v");
  if (!(length > 0.0)) throw ConfigError("key 'length': must be positive");
  if (d_v < 1 || d_v > 3) throw ConfigError("key 'd_v': must be 1, 2 or 3");
  if (cutoff < 1) throw ConfigError("key 'cutoff': must be at least 1");
  if (n_x < 4) throw ConfigError("key 'n_x': must be at least 4");

  m.domain = kind == "torus" ? DomainSpec::torus(length, n_x, d_x) : DomainSpec::interval(length, n_x);
  if (kind == "interval" && d_x != 1) throw ConfigError("key 'd_x': Interval domains have d_x = 1");
  if (d_x > d_v) throw ConfigError("key 'd_v': must be at least d_x");

  const std::optional<Potential> h = make_potential(cfg, length);
  m.domain.potential = h;
  m.drift = h ? DriftField::conservative(*h) : DriftField::zero();

  const std::string& src = cfg.get_choice("source", {"zero", "manufactured", "bump", "random"});
  const std::string& bnd = cfg.get_choice("boundary", {"zero", "one", "right_exit", "manufactured"});
  const std::string& ini = cfg.get_choice("initial", {"h1", "bump", "manufactured", "zero"});
  if (src == "manufactured" || bnd == "manufactured" || ini == "manufactured") {
    m.manufactured = ManufacturedCase{length};
  }

  if (kind == "interval") {
    if (bnd == "one") {
      m.domain.boundary_data = [](std::span<const double>, std::span<const double>) { return 1.0; };
    } else if (bnd == "right_exit") {
      m.domain.boundary_data = [length](std::span<const double> x, std::span<const double>) {
        return x[0] >= 0.5 * length ? 1.0 : 0.0;
      };
    } else if (bnd == "manufactured") {
      const ManufacturedCase mc = *m.manufactured;
      m.domain.boundary_data = [mc](std::span<const double> x, std::span<const double> v) { return mc.value(x, v); };
    } else {
      m.domain.boundary_data = [](std::span<const double>, std::span<const double>) { return 0.0; };
    }
  }

  const std::string& scheme = cfg.get_choice("scheme", {"default", "spectral", "upwind", "centered"});
  const DomainKind dk = m.domain.kind;
  if (scheme == "default") m.scheme = default_scheme(dk);
  else if (scheme == "spectral") m.scheme = TransportScheme::Spectral;
  else if (scheme == "upwind") m.scheme = TransportScheme::Upwind;
  else m.scheme = TransportScheme::Centered;
  m.velocity = cfg.get_choice("velocity_scheme", {"spectral", "monotone"}) == "monotone" ? VelocityScheme::Monotone
                                                                                      : VelocityScheme::Spectral;

  try {
    m.disc = Discretization::make(m.domain, d_v, cutoff);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const double amp = cfg.get_double("source_amplitude");
  if (src == "zero") {
    m.source = [](std::span<const double>, std::span<const double>) { return 0.0; };
  } else if (src == "manufactured") {
    const ManufacturedCase mc = *m.manufactured;
    const DriftField b = m.drift;
    m.source = [mc, b](std::span<const double> x, std::span<const double> v) { return mc.source(x, v, b); };
  } else if (src == "bump") {
    const DomainSpec dom = m.domain;
    m.source = [dom, amp](std::span<const double> x, std::span<const double> v) {
      double v2 = 0.0;
      for (double c : v) v2 += c * c;
      return -amp * bump(x, dom) * std::exp(-0.25 * v2);
    };
  } else {
    // Nodal samples of one random field; only consumed on the grid.
    m.source = nullptr;
  }
  return m;
}

std::vector<std::pair<int, int>> resolutions(const RunConfig& cfg) {
  std::vector<std::pair<int, int>> out;
  const std::string& spec = cfg.get("refine");
  if (spec.empty()) {
    out.emplace_back(cfg.get_int("n_x"), cfg.get_int("cutoff"));
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    int n = 0, c = 0;
    char tail = 0;
    if (colon == std::string::npos || std::sscanf(item.c_str(), " %d:%d %c", &n, &c, &tail) != 2 || n < 4 || c < 1) {
      throw ConfigError("key 'refine': bad entry '" + item + "' (expected n_x:N)");
    }
    out.emplace_back(n, c);
  }
  if (out.empty()) throw ConfigError("key 'refine': no resolutions");
  return out;
}

std::string resolve_output_dir(const RunConfig& cfg) {
  const std::string& dir = cfg.get("output_dir");
  if (!dir.empty()) return dir;
  const char* root = std::getenv("KFP_OUTPUT_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("kfp_runs");
  return (base / cfg.command()).string();
}

namespace {

struct Context {
  Context(const RunConfig& c, std::ostream& o, fs::path d) : cfg(c), out(o), dir(std::move(d)) {}
  const RunConfig& cfg;
  std::ostream& out;
  fs::path dir;
  std::vector<std::string> artifacts;
  json summary = json::object();
  json schemas = json::object();
  bool solver_failed = false;
  std::string failure;

  void write_text(const std::string& name, const std::string& schema, const std::string& body) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + (dir / name).string() + "'");
    f << body;
    artifacts.push_back(name);
    if (!schema.empty()) schemas[name] = schema;
  }
  void fail(const std::string& why) {
    solver_failed = true;
    if (!failure.empty()) failure += "; ";
    failure += why;
  }
};

PhaseField sample_source(const ModelSetup& m, const RunConfig& cfg) {
  if (m.source) return PhaseField::from_function(m.disc, m.source, m.disc->default_representation());
  EnsembleSpec spec;
  spec.count = 1;
  spec.seed = static_cast<std::uint64_t>(cfg.get_int64("seed"));
  spec.max_wavenumber = cfg.get_int("max_wavenumber");
  spec.max_degree = cfg.get_int("max_degree");
  spec.v0 = cfg.get_double("v0");
  PhaseField f = random_cutoff_ensemble(m.disc, spec).front();
  f *= cfg.get_double("source_amplitude");
  return f;
}

PhaseField initial_field(const ModelSetup& m, const RunConfig& cfg) {
  const std::string& ini = cfg.get("initial");
  const Representation rep = m.disc->default_representation();
  if (ini == "zero") return PhaseField(m.disc, rep);
  if (ini == "h1") {
    std::vector<int> entries(m.disc->d_v(), 0);
    entries[0] = 1;
    const MultiIndex e1(entries);
    return PhaseField::mode(m.disc, [](std::span<const double>) { return 1.0; }, e1, rep);
  }
  if (ini == "bump") {
    const DomainSpec dom = m.domain;
    return PhaseField::from_function(
        m.disc, [dom](std::span<const double> x, std::span<const double> v) { return bump(x, dom) * (1.0 + v[0]); },
        rep);
  }
  const ManufacturedCase mc = *m.manufactured;
  return PhaseField::from_function(
      m.disc, [mc](std::span<const double> x, std::span<const double> v) { return mc.value(x, v); }, rep);
}

OperatorSet operators(const ModelSetup& m) {
  try {
    return assemble(m.disc, m.drift, m.scheme, m.velocity);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

SolveOptions solve_options(const RunConfig& cfg) {
  SolveOptions o;
  o.residual_tol = cfg.get_double("residual_tol");
  o.tol_j = cfg.get_double("tol_j");
  o.tol_g = cfg.get_double("tol_g");
  o.max_iter = cfg.get_int("max_iter");
  o.fixed_point_tol = cfg.get_double("fixed_point_tol");
  return o;
}

double manufactured_error(const ModelSetup& m, const PhaseField& f) {
  if (!m.manufactured) return std::nan("");
  const ManufacturedCase mc = *m.manufactured;
  const PhaseField ex = PhaseField::from_function(
      m.disc, [mc](std::span<const double> x, std::span<const double> v) { return mc.value(x, v); },
      f.representation());
  return l2_norm(f - ex) / l2_norm(ex);
}

void cmd_solve(Context& ctx) {
  const ModelSetup m = build_model(ctx.cfg);
  const OperatorSet ops = operators(m);
  const PhaseField fstar = sample_source(m, ctx.cfg);
  const std::string& method = ctx.cfg.get_choice("method", {"direct", "variational", "fixed_point"});
  const SolveOptions opts = solve_options(ctx.cfg);
  SolveReport r;
  if (method == "direct") {
    r = solve_direct(ops, fstar, opts);
  } else if (method == "variational") {
    if (!ops.conservative) throw ConfigError("method = variational needs a conservative drift");
    r = solve_variational(ops, fstar, opts);
  } else {
    r = solve_general_b(ops, fstar, opts);
  }
  const double err = manufactured_error(m, r.solution);
  std::ostringstream csv;
  csv << "method,n_x,N,iterations,residual,j_value,j_infinite,converged,manufactured_error\n";
  csv << to_string(r.method) << ',' << m.domain.n_x << ',' << m.disc->cutoff() << ',' << r.iterations << ','
      << fmt(r.residual) << ',' << fmt(r.j_value.value) << ',' << (r.j_value.infinite ? 1 : 0) << ','
      << (r.converged ? 1 : 0) << ',' << fmt(err) << '\n';
  ctx.write_text("result.csv", "solve-result-v1", csv.str());
  std::ostringstream snap;
  write_snapshot(snap, r.solution);
  ctx.write_text("solution.kfpsnap", "", snap.str());
  const std::vector<TracePoint> trace = outflow_trace(ops, r.solution);
  if (!trace.empty()) {
    std::ostringstream tc;
    tc << "x,v,value\n";
    for (const auto& t : trace) {
      tc << fmt(t.x) << ',';
      for (std::size_t j = 0; j < t.v.size(); ++j) tc << (j ? ";" : "") << fmt(t.v[j]);
      tc << ',' << fmt(t.value) << '\n';
    }
    ctx.write_text("outflow.csv", "solve-outflow-v1", tc.str());
  }

  ctx.summary = {{"method", to_string(r.method)}, {"iterations", r.iterations},  {"residual", r.residual},
                 {"j_value", r.j_value.value},    {"j_infinite", r.j_value.infinite}, {"converged", r.converged}};
  if (m.manufactured) ctx.summary["manufactured_error"] = err;
  ctx.out << "solve(" << to_string(r.method) << "): residual " << fmt_short(r.residual) << ", J "
          << (r.j_value.infinite ? std::string("inf") : fmt_short(r.j_value.value)) << ", iterations " << r.iterations
          << (m.manufactured ? ", error vs exact " + fmt_short(err) : std::string()) << '\n';
  if (!r.converged) ctx.fail("solver did not converge: " + r.message);
}

EvolveOptions evolve_options(const RunConfig& cfg) {
  EvolveOptions o;
  o.final_time = cfg.get_double("final_time");
  o.dt = cfg.get_double("dt");
  if (!(o.final_time > 0.0)) throw ConfigError("key 'final_time': must be positive");
  if (o.dt < 0.0) throw ConfigError("key 'dt': must be positive (or 0 for the default)");
  o.scheme = cfg.get_choice("time_scheme", {"implicit_euler", "crank_nicolson"}) == "crank_nicolson"
                 ? TimeScheme::CrankNicolson
                 : TimeScheme::ImplicitEuler;
  o.window_start = cfg.get_double("window_start");
  o.window_end = cfg.get_double("window_end");
  return o;
}

EvolveResult run_evolution(Context& ctx, const ModelSetup& m, const OperatorSet& ops) {
  const PhaseField fstar = sample_source(m, ctx.cfg);
  const PhaseField f0 = initial_field(m, ctx.cfg);
  EvolveResult r = evolve(ops, fstar, f0, evolve_options(ctx.cfg));
  std::ostringstream csv;
  write_decay_csv(csv, r.trace);
  ctx.write_text("trace.csv", "decay-trace-v1", csv.str());
  std::ostringstream snap;
  write_snapshot(snap, r.final_field);
  ctx.write_text("final.kfpsnap", "", snap.str());
  if (!r.ok) ctx.fail(r.message);
  return r;
}

void cmd_evolve(Context& ctx) {
  const ModelSetup m = build_model(ctx.cfg);
  const OperatorSet ops = operators(m);
  const EvolveResult r = run_evolution(ctx, m, ops);
  ctx.summary = {{"steps", r.steps},
                 {"final_norm", r.trace.norms.back()},
                 {"lambda_fit", r.trace.lambda_fit},
                 {"prefactor_fit", r.trace.prefactor_fit}};
  ctx.out << "evolve: " << r.steps << " steps, final distance " << fmt_short(r.trace.norms.back()) << ", fitted rate "
          << fmt_short(r.trace.lambda_fit) << '\n';
}

void cmd_decay(Context& ctx) {
  const ModelSetup m = build_model(ctx.cfg);
  const OperatorSet ops = operators(m);
  const EvolveResult r = run_evolution(ctx, m, ops);
  const DecayTrace& t = r.trace;
  if (t.fit_samples == 0) {
    ctx.fail("decay fit failed: " + r.message);
    return;
  }
  SpectralGap gap;
  try {
    gap = spectral_gap(ops);
  } catch (const std::runtime_error& e) {
    ctx.fail(e.what());
    return;
  }
  const double rel = std::abs(t.lambda_fit - gap.gap) / std::abs(gap.gap);
  std::ostringstream csv;
  csv << "lambda_fit,prefactor,window_start,window_end,samples,spectral_gap,gap_imag,relative_difference\n";
  csv << fmt(t.lambda_fit) << ',' << fmt(t.prefactor_fit) << ',' << fmt(t.window_start) << ',' << fmt(t.window_end)
      << ',' << t.fit_samples << ',' << fmt(gap.gap) << ',' << fmt(gap.imag) << ',' << fmt(rel) << '\n';
  ctx.write_text("decay.csv", "decay-fit-v1", csv.str());
  ctx.summary = {{"lambda_fit", t.lambda_fit},   {"prefactor_fit", t.prefactor_fit}, {"spectral_gap", gap.gap},
                 {"gap_method", gap.method},     {"relative_difference", rel},       {"samples", t.fit_samples}};
  ctx.out << "decay: fitted rate " << fmt_short(t.lambda_fit) << " (prefactor " << fmt_short(t.prefactor_fit)
          << "), spectral gap " << fmt_short(gap.gap) << ", relative difference " << fmt_short(rel) << '\n';
}

PoincareKind poincare_kind(const RunConfig& cfg) {
  const std::string& k = cfg.get_choice("poincare_kind", {"velocity", "hyp_mean", "hyp_zero", "kinetic"});
  if (k == "velocity") return PoincareKind::Velocity;
  if (k == "hyp_mean") return PoincareKind::HypMean;
  if (k == "hyp_zero") return PoincareKind::HypZero;
  return PoincareKind::Kinetic;
}

void cmd_poincare(Context& ctx) {
  const ModelSetup m = build_model(ctx.cfg);
  PoincareSetup setup;
  setup.kind = poincare_kind(ctx.cfg);
  setup.domain = m.domain;
  setup.domain.potential.reset();
  setup.domain.boundary_data = nullptr;
  setup.d_v = m.disc->d_v();
  setup.n_t = ctx.cfg.get_int("n_t");
  setup.period = ctx.cfg.get_double("period");
  PencilOptions popts;
  popts.seed = static_cast<std::uint64_t>(ctx.cfg.get_int64("seed"));
  InequalityReport rep;
  try {
    rep = poincare_refinement(setup, resolutions(ctx.cfg), popts);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  std::ostringstream csv;
  write_refinement_csv(csv, rep);
  ctx.write_text("refinement.csv", "poincare-refinement-v1", csv.str());
  json rows = json::array();
  for (const auto& row : rep.refinement_table) {
    rows.push_back({{"n_x", row.n_x}, {"N", row.cutoff}, {"constant", row.constant}});
    ctx.out << "poincare(" << to_string(setup.kind) << "): n_x " << row.n_x << ", N " << row.cutoff << ", C "
            << fmt(row.constant) << '\n';
  }
  const double bound = poincare_trial_mode_bound(setup.domain.extents[0]);
  ctx.summary = {{"kind", to_string(setup.kind)}, {"table", rows}, {"method", rep.method}, {"trial_bound", bound}};
  if (!rep.converged) ctx.fail("pencil eigensolver did not converge");
}

EnsembleSpec ensemble_spec(const RunConfig& cfg) {
  EnsembleSpec s;
  s.count = cfg.get_int("samples");
  s.max_wavenumber = cfg.get_int("max_wavenumber");
  s.max_degree = cfg.get_int("max_degree");
  s.v0 = cfg.get_double("v0");
  s.seed = static_cast<std::uint64_t>(cfg.get_int64("seed"));
  s.max_frequency = cfg.get_int("max_frequency");
  if (s.count < 1) throw ConfigError("key 'samples': must be positive");
  return s;
}

void cmd_hormander(Context& ctx) {
  if (ctx.cfg.get("domain") != "torus") throw ConfigError("hormander needs domain = torus");
  const double alpha = ctx.cfg.get_double("alpha");
  const bool kinetic = ctx.cfg.get_bool("kinetic");
  const EnsembleSpec spec = ensemble_spec(ctx.cfg);
  std::ostringstream csv;
  json rows = json::array();
  bool first = true;
  for (const auto& [n_x, cutoff] : resolutions(ctx.cfg)) {
    const ModelSetup m = build_model(ctx.cfg, n_x, cutoff);
    InequalityReport rep;
    try {
      if (kinetic) {
        const auto ens = random_cutoff_time_ensemble(m.disc, ctx.cfg.get_int("n_t"), ctx.cfg.get_double("period"), spec);
        rep = kinetic_hormander_ratio(ens, alpha, spec.v0);
      } else {
        rep = hormander_ratio(random_cutoff_ensemble(m.disc, spec), alpha, spec.v0);
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    write_ratio_csv(csv, n_x, m.disc->cutoff(), rep, first);
    first = false;
    rows.push_back({{"n_x", n_x}, {"N", m.disc->cutoff()}, {"max_ratio", rep.max_ratio},
                    {"max_ratio_theta_half", rep.max_ratio_half}});
    ctx.out << "hormander(alpha " << fmt_short(alpha) << "): n_x " << n_x << ", N " << m.disc->cutoff()
            << ", max ratio " << fmt(rep.max_ratio) << '\n';
  }
  ctx.write_text("ratios.csv", "hormander-ratios-v1", csv.str());
  ctx.summary = {{"alpha", alpha}, {"v0", spec.v0}, {"kinetic", kinetic}, {"table", rows},
                 {"mask_version", kVelocityMaskVersion}};
}

std::vector<Probe> parse_probes(const RunConfig& cfg, int d_v) {
  std::vector<Probe> out;
  std::stringstream ss(cfg.get("probes"));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("key 'probes': bad entry '" + item + "' (expected x:v)");
    Probe p;
    char* end = nullptr;
    p.x = std::strtod(item.c_str(), &end);
    if (end != item.c_str() + colon) throw ConfigError("key 'probes': bad x in '" + item + "'");
    const std::string vpart = item.substr(colon + 1);
    const double v = std::strtod(vpart.c_str(), &end);
    if (vpart.empty() || *end != '\0') throw ConfigError("key 'probes': bad v in '" + item + "'");
    p.v.assign(d_v, 0.0);
    p.v[0] = v;
    out.push_back(p);
  }
  if (out.empty()) throw ConfigError("key 'probes': no probes");
  return out;
}

void cmd_oracle(Context& ctx) {
  const std::string& mode = ctx.cfg.get_choice("oracle_mode", {"dirichlet", "equilibrium"});
  const int threads = ctx.cfg.get_int("threads");
  const auto seed = static_cast<std::uint64_t>(ctx.cfg.get_int64("seed"));
  if (mode == "equilibrium") {
    EquilibriumOptions o;
    o.horizon = ctx.cfg.get_double("horizon");
    o.n_paths = ctx.cfg.get_int("n_paths");
    o.dt_sde = ctx.cfg.get_double("dt_sde") > 0.0 ? ctx.cfg.get_double("dt_sde") : 1e-3;
    o.seed = seed;
    o.threads = threads;
    o.initial_variance = ctx.cfg.get_double("initial_variance");
    MomentTable t;
    try {
      t = equilibrium_check(ctx.cfg.get_int("d_v"), o);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    std::ostringstream csv;
    write_moment_csv(csv, t);
    ctx.write_text("moments.csv", "oracle-moments-v1", csv.str());
    json rows = json::array();
    for (const auto& r : t.rows) {
      rows.push_back({{"moment", r.name}, {"estimate", r.estimate}, {"stderr", r.stderr_}, {"pass", r.pass}});
      ctx.out << "equilibrium " << r.name << ": " << fmt_short(r.estimate) << " +- " << fmt_short(r.stderr_)
              << " (target " << fmt_short(r.target) << ")" << (r.pass ? "" : " OUT OF RANGE") << '\n';
    }
    ctx.summary = {{"mode", mode}, {"moments", rows}, {"pass", t.pass}};
    return;
  }

  const ModelSetup m = build_model(ctx.cfg);
  if (m.domain.kind != DomainKind::Interval) throw ConfigError("oracle_mode = dirichlet needs domain = interval");
  if (!m.source) throw ConfigError("oracle_mode = dirichlet needs a pointwise source (not 'random')");
  const OperatorSet ops = operators(m);
  const PhaseField fstar = sample_source(m, ctx.cfg);
  const SolveReport pde = solve_direct(ops, fstar, solve_options(ctx.cfg));
  if (!pde.converged) ctx.fail("direct solve failed: " + pde.message);

  OracleOptions o;
  o.n_paths = ctx.cfg.get_int("n_paths");
  if (o.n_paths < 1000) throw ConfigError("key 'n_paths': reported estimates need at least 1000 paths");
  o.dt_sde = ctx.cfg.get_double("dt_sde");
  o.time_cap = ctx.cfg.get_double("time_cap");
  o.seed = seed;
  o.threads = threads;
  std::vector<PathEstimate> rows;
  std::ostringstream cmp;
  cmp << "probe_x,probe_v,estimate,stderr,pde_value,z\n";
  json js = json::array();
  bool flagged = false;
  for (const Probe& p : parse_probes(ctx.cfg, m.disc->d_v())) {
    PathEstimate e;
    try {
      e = sample_solution(m.domain, m.disc->d_v(), m.drift, m.source, m.domain.boundary_data, p, o);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(ex.what());
    }
    const double xs[1] = {p.x};
    const double value = field_value_at(pde.solution, xs, p.v);
    const double z = e.stderr_ > 0.0 ? (e.estimate - value) / e.stderr_ : std::nan("");
    cmp << fmt(p.x) << ',' << fmt(p.v[0]) << ',' << fmt(e.estimate) << ',' << fmt(e.stderr_) << ',' << fmt(value)
        << ',' << fmt(z) << '\n';
    js.push_back({{"x", p.x},          {"v", p.v[0]},       {"estimate", e.estimate}, {"stderr", e.stderr_},
                  {"pde_value", value}, {"capped", e.capped}, {"wrong_side_exits", e.wrong_side_exits},
                  {"mean_exit_time", e.mean_exit_time}});
    ctx.out << "oracle (" << fmt_short(p.x) << ", " << fmt_short(p.v[0]) << "): " << fmt_short(e.estimate) << " +- "
            << fmt_short(e.stderr_) << ", PDE " << fmt_short(value) << '\n';
    flagged = flagged || e.flagged;
    rows.push_back(std::move(e));
  }
  std::ostringstream csv;
  write_estimate_csv(csv, rows);
  ctx.write_text("estimates.csv", "oracle-estimates-v1", csv.str());
  ctx.write_text("comparison.csv", "oracle-comparison-v1", cmp.str());
  ctx.summary = {{"mode", mode}, {"probes", js}, {"dt_sde", rows.front().dt_sde}, {"flagged", flagged}};
  if (flagged) ctx.fail("more than 0.1% of paths hit the time cap");
}

void cmd_caccioppoli(Context& ctx) {
  if (ctx.cfg.get("domain") != "interval") throw ConfigError("caccioppoli needs domain = interval");
  CaccioppoliSetup setup;
  setup.d_v = ctx.cfg.get_int("d_v");
  setup.samples = ctx.cfg.get_int("samples");
  setup.radius = ctx.cfg.get_double("radius");
  setup.center = ctx.cfg.get_doubles("center");
  setup.drift_amplitude = ctx.cfg.get_double("drift_amplitude");
  EnsembleSpec spec = ensemble_spec(ctx.cfg);
  spec.max_frequency = 0;
  setup.sources = spec;
  std::ostringstream csv;
  json rows = json::array();
  bool first = true;
  for (const auto& [n_x, cutoff] : resolutions(ctx.cfg)) {
    setup.domain = DomainSpec::interval(ctx.cfg.get_double("length"), n_x);
    setup.cutoff = cutoff;
    CaccioppoliStudy st;
    try {
      st = caccioppoli_ensemble(setup);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    const int n_eff = Discretization::effective_cutoff(DomainKind::Interval, cutoff);
    write_caccioppoli_csv(csv, n_x, n_eff, st, first);
    first = false;
    rows.push_back({{"n_x", n_x}, {"N", n_eff}, {"max_ratio", st.max_ratio}, {"all_finite", st.all_finite}});
    ctx.out << "caccioppoli: n_x " << n_x << ", N " << n_eff << ", max ratio " << fmt(st.max_ratio) << '\n';
    if (!st.all_finite) ctx.fail("non-finite Caccioppoli ratio");
  }
  ctx.write_text("ratios.csv", "caccioppoli-ratios-v1", csv.str());
  ctx.summary = {{"table", rows}, {"radius", setup.radius}};
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json versions() {
  return {{"kfp", std::string(kVersion)},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"fftw", std::string(fftw_version)},
          {"boost", BOOST_LIB_VERSION},
          {"compiler", std::string(__VERSION__)}};
}

}  // namespace

RunResult run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  RunResult result;
  const auto start = std::chrono::steady_clock::now();
  result.output_dir = resolve_output_dir(cfg);
  Context ctx(cfg, out, fs::path(result.output_dir));
  try {
    std::error_code ec;
    fs::create_directories(ctx.dir, ec);
    if (ec || !fs::is_directory(ctx.dir)) throw ConfigError("output directory '" + result.output_dir + "' is not writable");
    const std::string& c = cfg.command();
    if (c == "solve") cmd_solve(ctx);
    else if (c == "evolve") cmd_evolve(ctx);
    else if (c == "decay") cmd_decay(ctx);
    else if (c == "poincare") cmd_poincare(ctx);
    else if (c == "hormander") cmd_hormander(ctx);
    else if (c == "oracle") cmd_oracle(ctx);
    else if (c == "caccioppoli") cmd_caccioppoli(ctx);
    else throw ConfigError("unknown command '" + c + "'");
    if (ctx.solver_failed) {
      result.exit_code = kExitSolver;
      result.message = ctx.failure;
    }
  } catch (const ConfigError& e) {
    result.exit_code = kExitValidation;
    result.message = e.what();
  } catch (const std::invalid_argument& e) {
    result.exit_code = kExitValidation;
    result.message = e.what();
  } catch (const std::exception& e) {
    result.exit_code = kExitSolver;
    result.message = e.what();
  }
  if (!result.message.empty()) err << "kfp: " << result.message << '\n';

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (fs::is_directory(ctx.dir)) {
    json config = json::object();
    for (const auto& [k, v] : cfg.values()) config[k] = v;
    json manifest = {{"command", cfg.command()},
                     {"config", config},
                     {"versions", versions()},
                     {"schemas", ctx.schemas},
                     {"artifacts", ctx.artifacts},
                     {"summary", ctx.summary},
                     {"exit_code", result.exit_code},
                     {"message", result.message},
                     {"wall_time_s", wall},
                     {"timestamp", utc_timestamp()}};
    std::ofstream mf(ctx.dir / "manifest.json");
    if (mf) {
      mf << std::setw(2) << manifest << '\n';
      ctx.artifacts.push_back("manifest.json");
    }
  }
  result.artifacts = ctx.artifacts;
  return result;
}

}  // namespace kfp
