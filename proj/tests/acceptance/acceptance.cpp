// Acceptance gate: one pass/fail line per criterion, tolerances pinned below.
//
// usage: kfp_acceptance <path-to-kfp> <configs-dir> [criterion ...]

#include "kfp/gauss_hermite.hpp"
#include "kfp/inequality_lab.hpp"
#include "kfp/kinetic_evolution.hpp"
#include "kfp/langevin_oracle.hpp"
#include "kfp/phase_field.hpp"
#include "kfp/variational_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace kfp;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * kPi;

// Pinned tolerances.
constexpr double kCalculusTol = 1e-12;
constexpr double kNullJTol = 1e-9;
constexpr double kNullMatchTol = 1e-6;
constexpr double kMaxPrincipleBase = 1e-6;
constexpr double kMaxPrincipleSlope = 2.0;
constexpr double kVelocityPoincareTol = 1e-8;
constexpr double kPoincareRefineTol = 0.10;
constexpr double kHormanderRefineTol = 0.25;
constexpr double kRouteFactor = 4.0;
constexpr double kMonotoneTol = 1e-12;
constexpr double kOuRateTol = 0.02;
constexpr double kGapMatchTol = 0.05;
constexpr double kSdeBars = 3.0;
constexpr double kCaccioppoliRefineTol = 0.20;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;
  std::function<Outcome()> body;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Potential two_mode_potential(double a, double c, double length) {
  const double k = kTwoPi / length;
  return Potential{[a, c, k](std::span<const double> x) { return a * std::cos(k * x[0]) + c * std::sin(2 * k * x[0]); },
                   [a, c, k](std::span<const double> x, std::span<double> g) {
                     std::fill(g.begin(), g.end(), 0.0);
                     g[0] = -a * k * std::sin(k * x[0]) + 2 * c * k * std::cos(2 * k * x[0]);
                   },
                   "two-mode"};
}

double relative_l2(const PhaseField& a, const PhaseField& b) {
  const PhaseField d = a - b.in(a.representation());
  return l2_norm(d) / l2_norm(b);
}

// 1. Hermite calculus identities.
Outcome spectral_calculus() {
  const int n = 32;
  double worst_adj = 0.0;
  double worst_ou = 0.0;
  std::mt19937_64 rng(101);
  std::normal_distribution<double> normal;
  for (int d = 1; d <= 2; ++d) {
    const HermiteBasis basis(d, n);
    for (int trial = 0; trial < 3; ++trial) {
      Eigen::VectorXd c(basis.size());
      for (auto& x : c) x = normal(rng);
      const HermiteRep f(basis, c);
      std::vector<HermiteRep> g;
      for (int j = 0; j < d; ++j) {
        Eigen::VectorXd cj(basis.size());
        for (auto& x : cj) x = normal(rng);
        g.emplace_back(basis, cj);
      }
      const auto grad = grad_v(f);
      double lhs = 0.0;
      for (int j = 0; j < d; ++j) lhs += inner(grad[j], g[j]);
      const double rhs = inner(f, grad_v_star(g));
      worst_adj = std::max(worst_adj, std::abs(lhs - rhs) / std::abs(rhs));
    }
    for (int a = 0; a < basis.size(); ++a) {
      const int deg = basis.degree(a);
      if (deg > n - 1) continue;
      const HermiteRep h = HermiteRep::basis_function(basis, basis.multi_index(a));
      const HermiteRep ou = grad_v_star(grad_v(h));
      Eigen::VectorXd expected = Eigen::VectorXd::Zero(basis.size());
      expected[a] = deg;
      const double scale = std::max(1.0, static_cast<double>(deg));
      worst_ou = std::max(worst_ou, (ou.coeffs() - expected).norm() / scale);
    }
  }
  return {worst_adj <= kCalculusTol && worst_ou <= kCalculusTol,
          "adjointness rel err " + fmt("%.2e", worst_adj) + ", |alpha| identity rel err " + fmt("%.2e", worst_ou)};
}

// Smooth test fields for the manufactured cases.
using Field = std::function<double(std::span<const double>, std::span<const double>)>;

std::vector<Field> interval_fields() {
  return {
      [](auto x, auto v) { return std::cos(1.3 * x[0]) * (1.0 + 0.5 * v[0]); },
      [](auto x, auto v) { return x[0] * x[0] * v[0] + std::exp(-x[0]) * (v[0] * v[0] - 1.0); },
      [](auto x, auto v) { return std::sin(kPi * x[0]) * std::cos(v[0]); },
      [](auto x, auto v) { return 1.0 + x[0] * v[0] * v[0] * v[0] / 6.0; },
      [](auto x, auto v) { return std::exp(-0.5 * v[0] * v[0]) * (2.0 + std::sin(3.0 * x[0])); },
  };
}

std::vector<Field> torus_fields() {
  return {
      [](auto x, auto v) { return std::sin(kTwoPi * x[0]) * (1.0 + 0.5 * v[0]); },
      [](auto x, auto v) { return std::cos(kTwoPi * x[0]) * v[0] * v[0] + 0.3 * std::sin(2 * kTwoPi * x[0]) * v[0]; },
      [](auto x, auto v) { return std::exp(std::sin(kTwoPi * x[0])) * std::cos(v[0]); },
      [](auto x, auto v) { return std::cos(3 * kTwoPi * x[0]) * (v[0] * v[0] * v[0] - 3 * v[0]); },
      [](auto x, auto v) { return 1.0 + std::sin(kTwoPi * x[0]) * std::exp(-0.5 * v[0] * v[0]); },
  };
}

// 2. Direct solution is a null minimizer; variational minimizer agrees.
Outcome null_minimizer() {
  const double amps[5][2] = {{0.0, 0.0}, {0.05, 0.0}, {0.1, 0.02}, {0.0, 0.06}, {0.12, -0.04}};
  double worst_j = 0.0;
  double worst_match = 0.0;
  int failures = 0;
  for (int kind = 0; kind < 2; ++kind) {
    const auto fields = kind == 0 ? interval_fields() : torus_fields();
    for (int c = 0; c < 5; ++c) {
      const Potential h = two_mode_potential(amps[c][0], amps[c][1], 1.0);
      DomainSpec dom = kind == 0 ? DomainSpec::interval(1.0, 64, fields[c]) : DomainSpec::torus(1.0, 64);
      dom.potential = h;
      const auto disc = Discretization::make(dom, 1, 16);
      const OperatorSet ops = assemble(disc, DriftField::conservative(h));
      const PhaseField exact = PhaseField::from_function(disc, fields[c], ops.rep);
      Eigen::VectorXd rhs = ops.system * exact.data();
      const PhaseField fstar = ops.make_field(rhs);
      const SolveReport direct = solve_direct(ops, fstar);
      const SolveReport var = solve_variational(ops, fstar);
      const double fs2 = std::pow(ops.norm_m(fstar.data()), 2);
      const double jrel = direct.j_value.infinite ? INFINITY : direct.j_value.value / fs2;
      const double match = relative_l2(var.solution, direct.solution);
      worst_j = std::max(worst_j, jrel);
      worst_match = std::max(worst_match, match);
      if (!(jrel <= kNullJTol) || !(match <= kNullMatchTol) || !direct.converged) ++failures;
    }
  }
  return {failures == 0, "10 cases, max J/||f*||_m^2 " + fmt("%.2e", worst_j) + ", max variational vs direct " +
                             fmt("%.2e", worst_match) + ", failures " + std::to_string(failures)};
}

// 3. Compatibility violations give J = +inf.
Outcome compatibility_rejection() {
  int flagged = 0;
  std::string control;
  const double magnitudes[5] = {1.0, 1e-2, 1e-4, 0.3, 5.0};
  for (int c = 0; c < 5; ++c) {
    const bool torus = c % 2 == 1;
    DomainSpec dom = torus ? DomainSpec::torus(1.0, 32) : DomainSpec::interval(1.0, 32, torus_fields()[0]);
    const Potential h = two_mode_potential(0.1, 0.0, 1.0);
    dom.potential = h;
    const auto disc = Discretization::make(dom, 1, 12);
    const OperatorSet ops = assemble(disc, DriftField::conservative(h));
    const PhaseField f = PhaseField::from_function(disc, torus_fields()[c], ops.rep);
    PhaseField fstar = ops.make_field(ops.system * f.data());
    const JValue ok = j_functional(ops, f, fstar);
    if (c == 0) control = ok.infinite ? "control infinite" : "control J " + fmt("%.1e", ok.value);
    if (ok.infinite) return {false, "consistent source flagged as violation in case " + std::to_string(c)};
    // Shift the velocity mean of the source at one interior node.
    const int node = 3 + 5 * c;
    PhaseField shifted = fstar.to_coefficient();
    shifted.at(node, 0) += magnitudes[c];
    const JValue bad = j_functional(ops, f, shifted.in(ops.rep));
    if (bad.infinite) ++flagged;
  }
  return {flagged == 5, std::to_string(flagged) + "/5 violations flagged, " + control};
}

// 4. Weak maximum principle on random sign-definite problems.
Outcome maximum_principle(double* spectral_overshoot) {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  double worst_excess = -INFINITY;
  double worst_spectral = 0.0;
  double worst_bulk = 0.0;
  int failures = 0;
  const int n_x = 128;
  for (int c = 0; c < 20; ++c) {
    // ||b||_inf <= 2 pi |a| + 4 pi |c| <= 1.
    const double a = 0.6 * u(rng) / kTwoPi;
    const double cc = 0.4 * u(rng) / (2 * kTwoPi);
    const Potential h = two_mode_potential(a, cc, 1.0);
    DomainSpec dom = DomainSpec::interval(1.0, n_x);
    dom.potential = h;
    const double x0 = pos(rng), v0 = 2.0 * u(rng), amp = 0.5 + pos(rng), width = 0.05 + 0.2 * pos(rng);
    const double floor_level = 0.2 * pos(rng);
    const Field source = [=](auto x, auto v) {
      return -floor_level - amp * std::exp(-std::pow((x[0] - x0) / width, 2) - 0.5 * std::pow(v[0] - v0, 2));
    };
    const auto disc = Discretization::make(dom, 1, 16);
    const OperatorSet ops =
        assemble(disc, DriftField::conservative(h), TransportScheme::Upwind, VelocityScheme::Monotone);
    const SolveReport rep = solve_direct(ops, PhaseField::from_function(disc, source, ops.rep));
    const MaxPrincipleResult mp = check_max_principle(ops, rep, kMaxPrincipleSlope, kMaxPrincipleBase);
    const double limit = kMaxPrincipleBase + kMaxPrincipleSlope * disc->spacing();
    worst_excess = std::max(worst_excess, mp.violation);
    if (!mp.certified || !(mp.violation <= limit)) ++failures;

    const OperatorSet spectral = assemble(disc, DriftField::conservative(h));
    const SolveReport srep = solve_direct(spectral, PhaseField::from_function(disc, source, spectral.rep));
    const PhaseField nodal = srep.solution.to_nodal();
    worst_spectral = std::max(worst_spectral, std::max(0.0, nodal.data().maxCoeff()));
    for (int i = 0; i < disc->n_spatial(); ++i) {
      for (int k = 0; k < disc->n_velocity(); ++k) {
        if (std::abs(disc->velocity_node(k)[0]) <= 4.0) worst_bulk = std::max(worst_bulk, nodal.at(i, k));
      }
    }
  }
  *spectral_overshoot = worst_spectral;
  return {failures == 0, "20 cases (monotone closure), max sup f " + fmt("%.2e", worst_excess) + " vs limit " +
                             fmt("%.3e", kMaxPrincipleBase + kMaxPrincipleSlope / (n_x - 1)) +
                             "; spectral-velocity closure overshoot " + fmt("%.2e", worst_spectral) + ", " +
                             fmt("%.2e", worst_bulk) + " on |v| <= 4 (info)"};
}

// 5. Poincare constants.
Outcome poincare_certification() {
  double worst_velocity = 0.0;
  double worst_mode = 0.0;
  for (int d = 1; d <= 2; ++d) {
    PoincareSetup s;
    s.kind = PoincareKind::Velocity;
    s.d_v = d;
    s.cutoff = 16;
    const InequalityReport r = poincare_constant(s);
    worst_velocity = std::max(worst_velocity, std::abs(r.constant - 1.0));
    // The extremal eigenvector lives in the degree-one modes.
    const PoincarePencil p = poincare_pencil(s);
    const PencilResult e = smallest_pencil_eigenvalue(p.q, p.w, p.kernel);
    const HermiteBasis basis(d, 16);
    double outside = 0.0;
    for (int a = 0; a < basis.size(); ++a) {
      if (basis.degree(a) != 1) outside += e.eigenvector[a] * e.eigenvector[a];
    }
    worst_mode = std::max(worst_mode, std::sqrt(outside) / e.eigenvector.norm());
  }
  PoincareSetup hyp;
  hyp.kind = PoincareKind::HypMean;
  hyp.domain = DomainSpec::torus(kTwoPi, 64);
  const InequalityReport ref = poincare_refinement(hyp, {{64, 16}, {128, 24}});
  const double c0 = ref.refinement_table[0].constant;
  const double c1 = ref.refinement_table[1].constant;
  const double change = std::abs(c1 - c0) / c0;
  const double bound = poincare_trial_mode_bound(kTwoPi);
  const bool pass = worst_velocity <= kVelocityPoincareTol && worst_mode <= kVelocityPoincareTol &&
                    change <= kPoincareRefineTol && c0 >= bound && c1 >= bound && ref.converged;
  return {pass, "velocity |C-1| " + fmt("%.1e", worst_velocity) + ", off-h1 mass " + fmt("%.1e", worst_mode) +
                    "; hyp C " + fmt("%.5f", c0) + " -> " + fmt("%.5f", c1) + " (change " + fmt("%.2f%%", 100 * change) +
                    "), trial bound " + fmt("%.5f", bound)};
}

// 6. Hormander ratio under refinement and the two fractional-norm routes.
Outcome hormander_embedding() {
  const double alpha = 0.30;
  EnsembleSpec spec;
  spec.count = 100;
  spec.v0 = 3.0;
  double max_ratio[2];
  double route_lo = INFINITY, route_hi = 0.0;
  const std::pair<int, int> res[2] = {{64, 16}, {128, 24}};
  for (int r = 0; r < 2; ++r) {
    const auto disc = Discretization::make(DomainSpec::torus(kTwoPi, res[r].first), 1, res[r].second);
    const auto ensemble = random_cutoff_ensemble(disc, spec);
    max_ratio[r] = hormander_ratio(ensemble, alpha, spec.v0).max_ratio;
    for (const auto& f : ensemble) {
      const double q = heatkernel_fractional_norm(f, alpha).value / fractional_multiplier_norm(f, alpha);
      route_lo = std::min(route_lo, q);
      route_hi = std::max(route_hi, q);
    }
  }
  const double change = std::abs(max_ratio[1] - max_ratio[0]) / max_ratio[0];
  const bool routes = route_hi <= kRouteFactor && route_lo >= 1.0 / kRouteFactor;
  return {change < kHormanderRefineTol && routes && std::isfinite(max_ratio[1]),
          "max ratio " + fmt("%.5f", max_ratio[0]) + " -> " + fmt("%.5f", max_ratio[1]) + " (change " +
              fmt("%.2f%%", 100 * change) + "); heat-kernel/multiplier in [" + fmt("%.3f", route_lo) + ", " +
              fmt("%.3f", route_hi) + "]"};
}

// 7. Dissipation and decay rates.
Outcome dissipation_decay() {
  // Interval, potential drift, zero data.
  DomainSpec dom = DomainSpec::interval(1.0, 64);
  const Potential h = two_mode_potential(0.1, 0.0, 1.0);
  dom.potential = h;
  const auto disc = Discretization::make(dom, 1, 16);
  const OperatorSet ops = assemble(disc, DriftField::conservative(h));
  const PhaseField init = PhaseField::from_function(
      disc, [](auto x, auto v) { return std::exp(-std::pow((x[0] - 0.5) / 0.15, 2)) * (1.0 + v[0]); }, ops.rep);
  EvolveOptions opt;
  opt.final_time = 20.0;
  opt.dt = 0.005;
  const EvolveResult ev = evolve(ops, PhaseField(disc, ops.rep), init, opt);
  double worst_rise = 0.0;
  double worst_rise_m = 0.0;
  for (std::size_t k = 1; k < ev.trace.norms.size(); ++k) {
    worst_rise = std::max(worst_rise, (ev.trace.norms[k] - ev.trace.norms[k - 1]) / ev.trace.norms[k - 1]);
    worst_rise_m = std::max(worst_rise_m, (ev.trace.norms_m[k] - ev.trace.norms_m[k - 1]) / ev.trace.norms_m[k - 1]);
  }
  const SpectralGap gap = spectral_gap(ops);
  const double gap_err = std::abs(ev.trace.lambda_fit - gap.gap) / gap.gap;

  // Velocity-only Ornstein-Uhlenbeck relaxation.
  const auto vdisc = Discretization::make(DomainSpec::torus(kTwoPi, 4), 1, 8);
  const OperatorSet vops = assemble(vdisc, DriftField::zero());
  EvolveOptions vopt;
  vopt.final_time = 5.0;
  vopt.dt = 1e-3;
  const EvolveResult ou = evolve(
      vops, PhaseField(vdisc, vops.rep),
      PhaseField::mode(vdisc, [](auto) { return 1.0; }, MultiIndex{1}, vops.rep), vopt);
  const double ou_err = std::abs(ou.trace.lambda_fit - 1.0);

  const bool pass = ev.ok && ou.ok && worst_rise <= kMonotoneTol && worst_rise_m <= kMonotoneTol &&
                    ev.trace.lambda_fit > 0.0 && ou_err <= kOuRateTol && gap.converged && gap_err <= kGapMatchTol;
  return {pass, "max step growth " + fmt("%.1e", worst_rise) + " (m-norm " + fmt("%.1e", worst_rise_m) + "); OU rate " +
                    fmt("%.5f", ou.trace.lambda_fit) + "; Interval fit " + fmt("%.5f", ev.trace.lambda_fit) +
                    " vs gap " + fmt("%.5f", gap.gap) + " (" + fmt("%.2f%%", 100 * gap_err) + ")"};
}

// 8. Langevin oracle against the PDE at interior probes.
Outcome sde_crosscheck() {
  const auto exact = [](std::span<const double> x, std::span<const double> v) {
    return std::cos(x[0]) * (1.0 + 0.5 * v[0]) + 0.3 * x[0] * v[0] * v[0];
  };
  const auto drift = [](double x) { return 0.3 * kPi * std::cos(kTwoPi * x); };
  // -f_vv + v f_v - v f_x + b f_v for the field above.
  const SourceFunction source = [drift](std::span<const double> xs, std::span<const double> vs) {
    const double x = xs[0], v = vs[0];
    const double fv = 0.5 * std::cos(x) + 0.6 * x * v;
    const double fx = -std::sin(x) * (1.0 + 0.5 * v) + 0.3 * v * v;
    return -0.6 * x + v * fv - v * fx + drift(x) * fv;
  };
  const Potential h{[](std::span<const double> x) { return 0.15 * std::sin(kTwoPi * x[0]); },
                    [drift](std::span<const double> x, std::span<double> g) {
                      std::fill(g.begin(), g.end(), 0.0);
                      g[0] = drift(x[0]);
                    },
                    "sin"};
  PhaseField pde[2];
  const int grids[2] = {128, 256};
  for (int k = 0; k < 2; ++k) {
    DomainSpec dom = DomainSpec::interval(1.0, grids[k], exact);
    dom.potential = h;
    const auto disc = Discretization::make(dom, 1, 24);
    const OperatorSet ops = assemble(disc, DriftField::conservative(h));
    const SolveReport rep = solve_direct(ops, PhaseField::from_function(disc, source, ops.rep));
    if (!rep.converged) return {false, "direct solve failed at n_x " + std::to_string(grids[k])};
    pde[k] = rep.solution;
  }
  DomainSpec dom = DomainSpec::interval(1.0, 256, exact);
  dom.potential = h;
  const double probes[5][2] = {{0.2, 0.5}, {0.35, -0.8}, {0.5, 0.0}, {0.65, 1.0}, {0.8, -0.4}};
  double worst_z = 0.0;
  bool flagged = false;
  std::string zs;
  for (const auto& p : probes) {
    const double xs[1] = {p[0]}, vs[1] = {p[1]};
    const double fine = field_value_at(pde[1], xs, vs);
    const double coarse = field_value_at(pde[0], xs, vs);
    OracleOptions o;
    o.n_paths = 100000;
    o.dt_sde = 1e-3;
    o.seed = 11;
    const PathEstimate e = sample_solution(dom, 1, DriftField::conservative(h), source, exact, Probe{p[0], {p[1]}}, o);
    flagged = flagged || e.flagged;
    // Combined bar: Monte Carlo standard error plus the PDE refinement difference.
    const double bar = e.stderr_ + std::abs(fine - coarse);
    const double z = std::abs(e.estimate - fine) / bar;
    worst_z = std::max(worst_z, z);
    zs += (zs.empty() ? "" : " ") + fmt("%.2f", z);
  }
  return {worst_z <= kSdeBars && !flagged, "5 probes, |SDE - PDE| / bar = " + zs};
}

// 9. Caccioppoli ratio over a solve ensemble.
Outcome caccioppoli() {
  CaccioppoliSetup s;
  s.samples = 50;
  s.sources.count = 50;
  double max_ratio[2];
  bool finite = true;
  const std::pair<int, int> res[2] = {{64, 16}, {128, 24}};
  for (int r = 0; r < 2; ++r) {
    s.domain = DomainSpec::interval(1.0, res[r].first);
    s.cutoff = res[r].second;
    const CaccioppoliStudy st = caccioppoli_ensemble(s);
    finite = finite && st.all_finite && st.results.size() == 50;
    max_ratio[r] = st.max_ratio;
  }
  const double change = std::abs(max_ratio[1] - max_ratio[0]) / max_ratio[0];
  return {finite && change < kCaccioppoliRefineTol,
          "50 solves per grid, max ratio " + fmt("%.5f", max_ratio[0]) + " -> " + fmt("%.5f", max_ratio[1]) +
              " (change " + fmt("%.2f%%", 100 * change) + "), all finite " + (finite ? "yes" : "no")};
}

// 10. Repeated CLI runs write identical CSV bytes.
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli_determinism(const std::string& kfp, const std::string& configs) {
  const fs::path root = fs::temp_directory_path() / "kfp_acceptance_determinism";
  fs::remove_all(root);
  const std::vector<std::string> runs = {
      configs + "/hormander.cfg --samples 10 --refine 32:8",
      configs + "/sde_crosscheck.cfg --n_paths 2000 --n_x 32 --cutoff 8",
      configs + "/default.cfg",
  };
  int files = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    fs::path dirs[2];
    for (int k = 0; k < 2; ++k) {
      dirs[k] = root / ("run" + std::to_string(r) + "_" + std::to_string(k));
      const std::string cmd = "\"" + kfp + "\" " + runs[r] + " --output_dir \"" + dirs[k].string() + "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
    }
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(dirs[0])) {
      if (e.path().extension() == ".csv") names.insert(e.path().filename().string());
    }
    if (names.empty()) return {false, "no CSV written by: " + runs[r]};
    for (const auto& n : names) {
      if (!fs::exists(dirs[1] / n) || slurp(dirs[0] / n) != slurp(dirs[1] / n)) {
        return {false, "CSV differs between runs: " + n};
      }
      ++files;
    }
  }
  fs::remove_all(root);
  return {true, std::to_string(runs.size()) + " configs run twice, " + std::to_string(files) + " CSV files identical"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s <kfp> <configs-dir> [criterion ...]\n", argv[0]);
    return 2;
  }
  const std::string kfp = argv[1];
  const std::string configs = argv[2];
  std::set<int> only;
  for (int i = 3; i < argc; ++i) only.insert(std::atoi(argv[i]));

  double spectral_overshoot = 0.0;
  const std::vector<Criterion> criteria = {
      {1, "spectral calculus", 1.0, spectral_calculus},
      {2, "null minimizer", 30.0, null_minimizer},
      {3, "compatibility rejection", 10.0, compatibility_rejection},
      {4, "weak maximum principle", 60.0, [&] { return maximum_principle(&spectral_overshoot); }},
      {5, "Poincare certification", 120.0, poincare_certification},
      {6, "Hormander embedding", 300.0, hormander_embedding},
      {7, "dissipation and decay", 120.0, dissipation_decay},
      {8, "SDE cross-validation", 600.0, sde_crosscheck},
      {9, "Caccioppoli ratio", 180.0, caccioppoli},
      {10, "end-to-end determinism", 300.0, [&] { return cli_determinism(kfp, configs); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.time_limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::printf("[%s] %2d %s: %s; %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                o.detail.c_str(), secs, c.time_limit_s, in_time ? "" : " over time");
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
