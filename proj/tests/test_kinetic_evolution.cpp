#include "kfp/kinetic_evolution.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

using namespace kfp;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Potential cosine_potential(double a, double length) {
  const double k = kTwoPi / length;
  return Potential{[a, k](std::span<const double> x) { return a * std::cos(k * x[0]); },
                   [a, k](std::span<const double> x, std::span<double> g) {
                     std::fill(g.begin(), g.end(), 0.0);
                     g[0] = -a * k * std::sin(k * x[0]);
                   },
                   "cos"};
}

}  // namespace

TEST_SUITE("kinetic_evolution") {
  TEST_CASE("fit recovers a synthetic exponential") {
    std::vector<double> t;
    std::vector<double> y;
    for (int k = 0; k <= 100; ++k) {
      t.push_back(0.05 * k);
      y.push_back(3.0 * std::exp(-0.7 * t.back()));
    }
    const DecayFit fit = decay_rate(t, y, 1.0, 5.0);
    CHECK(fit.lambda == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(fit.prefactor == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(fit.samples == 81);
    CHECK(!fit.truncated);
    CHECK_THROWS_AS(decay_rate(t, y, 1.0, 1.3), std::invalid_argument);
  }

  TEST_CASE("fit stops where the norm reaches numerical zero") {
    std::vector<double> t;
    std::vector<double> y;
    for (int k = 0; k <= 100; ++k) {
      t.push_back(0.1 * k);
      y.push_back(k < 60 ? std::exp(-2.0 * t.back()) : 0.0);
    }
    const DecayFit fit = decay_rate(t, y, 0.0, 10.0);
    CHECK(fit.truncated);
    CHECK(fit.samples == 60);
    CHECK(fit.lambda == doctest::Approx(2.0).epsilon(1e-10));
  }

  TEST_CASE("a pure h_1 mode decays at the discrete Ornstein-Uhlenbeck rate") {
    const auto disc = Discretization::make(DomainSpec::torus(1.0, 4), 1, 8);
    const OperatorSet ops = assemble(disc, DriftField::zero());
    const PhaseField init = PhaseField::mode(disc, [](std::span<const double>) { return 1.0; }, MultiIndex{1}, ops.rep);
    const PhaseField zero(disc, ops.rep);
    EvolveOptions opt;
    opt.final_time = 4.0;
    opt.dt = 0.01;
    const EvolveResult ie = evolve(ops, zero, init, opt);
    REQUIRE(ie.ok);
    CHECK(ie.steps == 400);
    CHECK(ie.trace.lambda_fit == doctest::Approx(std::log(1.0 + opt.dt) / opt.dt).epsilon(1e-9));
    opt.scheme = TimeScheme::CrankNicolson;
    const EvolveResult cn = evolve(ops, zero, init, opt);
    const double cn_rate = -std::log((1.0 - 0.5 * opt.dt) / (1.0 + 0.5 * opt.dt)) / opt.dt;
    CHECK(cn.trace.lambda_fit == doctest::Approx(cn_rate).epsilon(1e-9));
    // Crank-Nicolson is the closer of the two to the continuum rate 1.
    CHECK(std::abs(cn.trace.lambda_fit - 1.0) < std::abs(ie.trace.lambda_fit - 1.0));
  }

  TEST_CASE("fitted rate approaches the spectral gap") {
    DomainSpec dom = DomainSpec::torus(kTwoPi, 8);
    dom.potential = cosine_potential(0.3, kTwoPi);
    const auto disc = Discretization::make(dom, 1, 8);
    const OperatorSet ops = assemble(disc, DriftField::conservative(*dom.potential));
    const SpectralGap gap = spectral_gap(ops);
    REQUIRE(gap.converged);
    CHECK(gap.imag == doctest::Approx(0.0).scale(1.0));
    const PhaseField init = PhaseField::from_function(
        disc, [](std::span<const double> x, std::span<const double> v) { return std::sin(x[0]) + v[0] * std::cos(x[0]); },
        ops.rep);
    EvolveOptions opt;
    opt.final_time = 30.0;
    opt.dt = 0.01;
    const EvolveResult r = evolve(ops, PhaseField(disc, ops.rep), init, opt);
    REQUIRE(r.ok);
    CHECK(r.trace.window_start == doctest::Approx(15.0));
    CHECK(r.trace.lambda_fit == doctest::Approx(gap.gap).epsilon(0.02));
  }

  TEST_CASE("starting at equilibrium stays there") {
    DomainSpec dom = DomainSpec::interval(
        1.0, 16, [](std::span<const double> x, std::span<const double>) { return 1.0 + x[0]; });
    const auto disc = Discretization::make(dom, 1, 7);
    const OperatorSet ops = assemble(disc, DriftField::zero());
    const PhaseField fstar = PhaseField::from_function(
        disc, [](std::span<const double>, std::span<const double> v) { return v[0]; }, ops.rep);
    const SolveReport stationary = solve_direct(ops, fstar);
    EvolveOptions opt;
    opt.final_time = 1.0;
    opt.dt = 0.05;
    const EvolveResult r = evolve(ops, fstar, stationary.solution, opt);
    REQUIRE(r.ok);
    for (double n : r.trace.norms) CHECK(n < 1e-10);
    CHECK((r.final_field.data() - r.equilibrium.data()).norm() < 1e-10);
  }

  TEST_CASE("the m-weighted distance never increases under implicit Euler") {
    DomainSpec dom = DomainSpec::interval(1.0, 20);
    dom.potential = cosine_potential(0.2, 1.0);
    const auto disc = Discretization::make(dom, 1, 9);
    const OperatorSet ops = assemble(disc, DriftField::conservative(*dom.potential));
    const PhaseField init = PhaseField::from_function(
        disc, [](std::span<const double> x, std::span<const double> v) { return std::sin(3 * x[0]) * (1 + v[0] * v[0]); },
        ops.rep);
    EvolveOptions opt;
    opt.final_time = 2.0;
    opt.dt = 0.02;
    const EvolveResult r = evolve(ops, PhaseField(disc, ops.rep), init, opt);
    REQUIRE(r.ok);
    for (std::size_t k = 1; k < r.trace.norms_m.size(); ++k)
      CHECK(r.trace.norms_m[k] <= r.trace.norms_m[k - 1] * (1.0 + 1e-12));
    // The Torus keeps the kernel component of the initial field.
    const auto tdisc = Discretization::make(DomainSpec::torus(1.0, 8), 1, 4);
    const OperatorSet tops = assemble(tdisc, DriftField::zero());
    const PhaseField t_init = PhaseField::from_function(
        tdisc, [](std::span<const double> x, std::span<const double> v) { return 2.0 + std::cos(kTwoPi * x[0]) * v[0]; },
        tops.rep);
    const EvolveResult tr = evolve(tops, PhaseField(tdisc, tops.rep), t_init, opt);
    CHECK(mean_U(tr.equilibrium) == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(tr.trace.norms.back() < 0.05 * tr.trace.norms.front());
  }

  TEST_CASE("norms stay under the fitted envelope with prefactor two") {
    DomainSpec dom = DomainSpec::torus(kTwoPi, 8);
    dom.potential = cosine_potential(0.3, kTwoPi);
    const auto disc = Discretization::make(dom, 1, 8);
    const OperatorSet ops = assemble(disc, DriftField::conservative(*dom.potential));
    const PhaseField init = PhaseField::from_function(
        disc, [](std::span<const double> x, std::span<const double> v) { return std::cos(x[0]) * (1.0 + v[0]); }, ops.rep);
    EvolveOptions opt;
    opt.final_time = 20.0;
    opt.dt = 0.02;
    const EvolveResult r = evolve(ops, PhaseField(disc, ops.rep), init, opt);
    REQUIRE(r.ok);
    REQUIRE(r.trace.lambda_fit > 0.0);
    const auto& t = r.trace.times;
    const auto& n = r.trace.norms;
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (t[k] < r.trace.window_start) continue;
      CHECK(n[k] <= 2.0 * std::exp(-r.trace.lambda_fit * t[k]) * n.front());
    }
  }

  TEST_CASE("implicit Euler and Crank-Nicolson approach each other at first order") {
    DomainSpec dom = DomainSpec::interval(1.0, 12);
    dom.potential = cosine_potential(0.2, 1.0);
    const auto disc = Discretization::make(dom, 1, 7);
    const OperatorSet ops = assemble(disc, DriftField::conservative(*dom.potential));
    const PhaseField init = PhaseField::from_function(
        disc, [](std::span<const double> x, std::span<const double> v) { return std::sin(kTwoPi * x[0]) * (1.0 + v[0]); },
        ops.rep);
    auto gap = [&](double dt) {
      EvolveOptions opt;
      opt.final_time = 1.0;
      opt.dt = dt;
      const EvolveResult ie = evolve(ops, PhaseField(disc, ops.rep), init, opt);
      opt.scheme = TimeScheme::CrankNicolson;
      const EvolveResult cn = evolve(ops, PhaseField(disc, ops.rep), init, opt);
      return l2_norm(ie.final_field - cn.final_field);
    };
    const double coarse = gap(0.02);
    const double fine = gap(0.01);
    CHECK(coarse / fine == doctest::Approx(2.0).epsilon(0.1));
  }

  TEST_CASE("Arnoldi and dense gap agree") {
    DomainSpec dom = DomainSpec::interval(1.0, 12);
    dom.potential = cosine_potential(0.15, 1.0);
    const auto disc = Discretization::make(dom, 1, 9);
    const OperatorSet ops = assemble(disc, DriftField::conservative(*dom.potential));
    const SpectralGap dense = spectral_gap(ops);
    SpectralGapOptions opt;
    opt.dense_limit = 0;
    const SpectralGap arnoldi = spectral_gap(ops, opt);
    CHECK(dense.method != arnoldi.method);
    REQUIRE(arnoldi.converged);
    CHECK(arnoldi.gap == doctest::Approx(dense.gap).epsilon(1e-7));
    CHECK(dense.gap > 0.0);
  }

  TEST_CASE("Ornstein-Uhlenbeck gap on a small Torus") {
    const auto disc = Discretization::make(DomainSpec::torus(kTwoPi, 8), 1, 10);
    const SpectralGap g = spectral_gap(assemble(disc, DriftField::zero()));
    REQUIRE(g.converged);
    // The continuum gap is min over modes of the k = 1 branch; truncation lowers it slightly.
    CHECK(g.gap > 0.5);
    CHECK(g.gap <= 1.0 + 1e-9);
  }

  TEST_CASE("invalid steps are reported") {
    const auto disc = Discretization::make(DomainSpec::torus(1.0, 4), 1, 4);
    const OperatorSet ops = assemble(disc, DriftField::zero());
    const PhaseField init = PhaseField::mode(disc, [](std::span<const double>) { return 1.0; }, MultiIndex{1}, ops.rep);
    EvolveOptions opt;
    opt.final_time = 1.0;
    opt.dt = 0.2;
    const EvolveResult r = evolve(ops, PhaseField(disc, ops.rep), init, opt);
    CHECK(r.steps == 5);
    CHECK(std::isnan(r.trace.lambda_fit));
    CHECK(r.trace.fit_samples == 0);
  }

  TEST_CASE("decay CSV layout") {
    DecayTrace trace;
    trace.times = {0.0, 1.0};
    trace.norms = {1.0, 0.5};
    trace.norms_m = {1.0, 0.5};
    std::ostringstream out;
    write_decay_csv(out, trace);
    CHECK(out.str().rfind("t,norm,log_norm\n", 0) == 0);
  }
}
