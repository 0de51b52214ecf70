#include "kfp/inequality_lab.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/gamma.hpp>
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace kfp;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Smallest pencil eigenvalue off the kernel, by a dense generalized solve.
double dense_pencil_minimum(const PoincarePencil& p) {
  const Eigen::MatrixXd q = Eigen::MatrixXd(p.q);
  const Eigen::MatrixXd qs = 0.5 * (q + q.transpose());
  const Eigen::MatrixXd w = p.w.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(qs, w);
  REQUIRE(es.info() == Eigen::Success);
  // The first kernel-size eigenvalues are the zero modes.
  return es.eigenvalues()[static_cast<Eigen::Index>(p.kernel.size())];
}

}  // namespace

TEST_SUITE("inequality_lab") {
  TEST_CASE("velocity Poincare constant is one") {
    PoincareSetup s;
    s.kind = PoincareKind::Velocity;
    s.cutoff = 10;
    for (int d : {1, 2}) {
      s.d_v = d;
      const InequalityReport r = poincare_constant(s);
      CHECK(r.converged);
      CHECK(r.constant == doctest::Approx(1.0).epsilon(1e-10));
    }
  }

  TEST_CASE("Lanczos pencil minimum matches a dense generalized eigensolve") {
    SUBCASE("Torus, mean zero") {
      PoincareSetup s;
      s.kind = PoincareKind::HypMean;
      s.domain = DomainSpec::torus(kTwoPi, 9);
      s.cutoff = 5;
      const PoincarePencil p = poincare_pencil(s);
      const PencilResult r = smallest_pencil_eigenvalue(p.q, p.w, p.kernel);
      CHECK(r.converged);
      CHECK(r.lambda_min == doctest::Approx(dense_pencil_minimum(p)).epsilon(1e-8));
    }
    SUBCASE("Interval, zero inflow data") {
      PoincareSetup s;
      s.kind = PoincareKind::HypZero;
      s.domain = DomainSpec::interval(1.0, 8);
      s.cutoff = 5;
      const PoincarePencil p = poincare_pencil(s);
      const PencilResult r = smallest_pencil_eigenvalue(p.q, p.w, p.kernel);
      CHECK(r.converged);
      CHECK(r.lambda_min == doctest::Approx(dense_pencil_minimum(p)).epsilon(1e-8));
    }
  }

  TEST_CASE("hypoelliptic Poincare constant exceeds the trial-mode bound") {
    PoincareSetup s;
    s.kind = PoincareKind::HypMean;
    s.domain = DomainSpec::torus(kTwoPi, 16);
    s.cutoff = 8;
    const InequalityReport r = poincare_constant(s);
    CHECK(r.converged);
    CHECK(std::isfinite(r.constant));
    CHECK(r.constant >= poincare_trial_mode_bound(kTwoPi) * (1.0 - 1e-9));
    CHECK(poincare_trial_mode_bound(kTwoPi) == doctest::Approx(std::sqrt(2.0)));
  }

  TEST_CASE("refinement table lists every resolution") {
    PoincareSetup s;
    s.kind = PoincareKind::HypMean;
    s.domain = DomainSpec::torus(kTwoPi, 8);
    const InequalityReport r = poincare_refinement(s, {{8, 4}, {12, 6}});
    REQUIRE(r.refinement_table.size() == 2);
    CHECK(r.refinement_table[1].n_x == 12);
    CHECK(r.refinement_table[1].cutoff == 6);
    std::ostringstream out;
    write_refinement_csv(out, r);
    CHECK(out.str().rfind("n_x,N,constant", 0) == 0);
  }

  TEST_CASE("kinetic space-time pencil gives a finite constant") {
    PoincareSetup s;
    s.kind = PoincareKind::Kinetic;
    s.domain = DomainSpec::torus(kTwoPi, 8);
    s.cutoff = 4;
    s.n_t = 8;
    const InequalityReport r = poincare_constant(s);
    CHECK(r.converged);
    CHECK(std::isfinite(r.constant));
    CHECK(r.constant > 0.0);
  }

  TEST_CASE("Fourier multiplier norm of cos(x) h_0") {
    const auto disc = Discretization::make(DomainSpec::torus(kTwoPi, 16), 1, 4);
    const PhaseField f = PhaseField::mode(disc, [](std::span<const double> x) { return std::cos(x[0]); }, MultiIndex{0},
                                          Representation::Coefficient);
    for (double s : {0.0, 0.3, 1.0}) {
      CHECK(fractional_multiplier_norm(f, s) == doctest::Approx(std::sqrt(std::pow(2.0, s) * std::numbers::pi)).epsilon(1e-12));
    }
  }

  TEST_CASE("heat-kernel norm matches the incomplete gamma closed form") {
    // For cos(x) h_0 the time integral is pi * int_0^1 t^-alpha exp(-2t) dt.
    const auto disc = Discretization::make(DomainSpec::torus(kTwoPi, 16), 1, 4);
    const PhaseField f = PhaseField::mode(disc, [](std::span<const double> x) { return std::cos(x[0]); }, MultiIndex{0},
                                          Representation::Coefficient);
    for (double alpha : {0.1, 0.3, 0.6, 0.9}) {
      const double integral = std::pow(2.0, alpha - 1.0) * boost::math::tgamma_lower(1.0 - alpha, 2.0);
      const double exact = std::sqrt(std::numbers::pi * (1.0 + integral));
      const HeatKernelNorm h = heatkernel_fractional_norm(f, alpha);
      CHECK(h.value == doctest::Approx(exact).epsilon(1e-9));
      CHECK(h.tail >= 0.0);
    }
  }

  TEST_CASE("velocity mask is a C2 smoothstep") {
    const double v0 = 3.0;
    CHECK(velocity_mask(0.0, v0) == 1.0);
    CHECK(velocity_mask(1.5, v0) == 1.0);
    CHECK(velocity_mask(3.0, v0) == 0.0);
    CHECK(velocity_mask(-4.0, v0) == 0.0);
    CHECK(velocity_mask(2.25, v0) == doctest::Approx(0.5));
    const double h = 1e-4;
    for (double edge : {1.5, 3.0}) {
      const double left = (velocity_mask(edge - h, v0) - velocity_mask(edge - 2 * h, v0)) / h;
      const double right = (velocity_mask(edge + 2 * h, v0) - velocity_mask(edge + h, v0)) / h;
      CHECK(std::abs(left) < 1e-6);
      CHECK(std::abs(right) < 1e-6);
      const double second = (velocity_mask(edge + h, v0) - 2 * velocity_mask(edge, v0) + velocity_mask(edge - h, v0)) / (h * h);
      CHECK(std::abs(second) < 1e-2);
    }
    for (double s = 1.5; s < 3.0; s += 0.01) CHECK(velocity_mask(s + 0.01, v0) <= velocity_mask(s, v0));
  }

  TEST_CASE("random ensemble is a continuum field shared across grids") {
    EnsembleSpec spec;
    spec.count = 5;
    const auto coarse = Discretization::make(DomainSpec::torus(kTwoPi, 8), 1, 6);
    const auto fine = Discretization::make(DomainSpec::torus(kTwoPi, 16), 1, 6);
    const auto a = random_cutoff_ensemble(coarse, spec);
    const auto b = random_cutoff_ensemble(fine, spec);
    REQUIRE(a.size() == 5);
    REQUIRE(b.size() == 5);
    for (int s = 0; s < 5; ++s) {
      for (int i = 0; i < coarse->n_spatial(); ++i) {
        for (int k = 0; k < coarse->n_velocity(); ++k)
          CHECK(a[s].at(i, k) == doctest::Approx(b[s].at(2 * i, k)).epsilon(1e-12).scale(1.0));
      }
    }
    // The mask makes every field vanish at nodes with |v| >= v0.
    const auto nodal = a[0].to_nodal();
    for (int k = 0; k < coarse->n_velocity(); ++k) {
      if (std::abs(coarse->velocity_node(k)[0]) >= spec.v0) CHECK(nodal.at(0, k) == doctest::Approx(0.0).scale(1.0));
    }
    const auto interval = random_cutoff_ensemble(Discretization::make(DomainSpec::interval(1.0, 8), 1, 6), spec);
    CHECK(interval[0].representation() == Representation::Nodal);
  }

  TEST_CASE("Hormander ratios are finite and bounded across resolutions") {
    EnsembleSpec spec;
    spec.count = 20;
    double previous = 0.0;
    for (auto [n, N] : {std::pair{16, 8}, std::pair{32, 12}}) {
      const auto disc = Discretization::make(DomainSpec::torus(kTwoPi, n), 1, N);
      const InequalityReport r = hormander_ratio(random_cutoff_ensemble(disc, spec), 0.3, spec.v0);
      REQUIRE(r.ratios.size() == 20);
      for (double q : r.ratios) CHECK((std::isfinite(q) && q > 0.0));
      CHECK(r.max_ratio == doctest::Approx(*std::max_element(r.ratios.begin(), r.ratios.end())));
      if (previous > 0.0) CHECK(std::abs(r.max_ratio - previous) < 0.1 * previous);
      previous = r.max_ratio;
    }
  }

  TEST_CASE("kinetic Hormander ratios are finite") {
    EnsembleSpec spec;
    spec.count = 4;
    const auto disc = Discretization::make(DomainSpec::torus(kTwoPi, 8), 1, 6);
    const auto ens = random_cutoff_time_ensemble(disc, 8, kTwoPi, spec);
    const InequalityReport r = kinetic_hormander_ratio(ens, 0.3, spec.v0);
    REQUIRE(r.ratios.size() == 4);
    for (double q : r.ratios) CHECK((std::isfinite(q) && q > 0.0));
  }

  TEST_CASE("Caccioppoli ensemble on a small Interval") {
    CaccioppoliSetup s;
    s.domain = DomainSpec::interval(1.0, 24);
    s.cutoff = 7;
    s.samples = 6;
    s.sources.count = 6;
    const CaccioppoliStudy study = caccioppoli_ensemble(s);
    REQUIRE(study.results.size() == 6);
    CHECK(study.all_finite);
    CHECK(study.max_residual < 1e-8);
    std::ostringstream out;
    write_caccioppoli_csv(out, 24, 7, study);
    CHECK(out.str().rfind("n_x,N,sample,lhs,rhs,ratio\n", 0) == 0);
  }

  TEST_CASE("Rayleigh quotients of random trial fields stay above the pencil minimum") {
    PoincareSetup s;
    s.kind = PoincareKind::HypMean;
    s.domain = DomainSpec::torus(kTwoPi, 8);
    s.cutoff = 5;
    const PoincarePencil p = poincare_pencil(s);
    const PencilResult r = smallest_pencil_eigenvalue(p.q, p.w, p.kernel);
    REQUIRE(r.converged);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd u(p.w.size());
      for (int k = 0; k < u.size(); ++k) u[k] = normal(rng);
      for (const auto& z : p.kernel) {
        const double c = (z.array() * p.w.array() * u.array()).sum() / (z.array() * p.w.array() * z.array()).sum();
        u -= c * z;
      }
      const double quotient = u.dot(p.q * u) / (u.array() * p.w.array() * u.array()).sum();
      CHECK(quotient >= r.lambda_min * (1.0 - 1e-8));
    }
  }

  TEST_CASE("fractional multiplier norm grows with the order") {
    EnsembleSpec spec;
    spec.count = 3;
    const auto disc = Discretization::make(DomainSpec::torus(kTwoPi, 16), 1, 6);
    for (const PhaseField& f : random_cutoff_ensemble(disc, spec)) {
      double previous = 0.0;
      for (double a : {0.0, 0.2, 0.5, 0.9}) {
        const double n = fractional_multiplier_norm(f, a);
        CHECK(n >= previous);
        previous = n;
      }
    }
  }

  TEST_CASE("Hormander ratio of a field constant in x is at most one") {
    const auto disc = Discretization::make(DomainSpec::torus(kTwoPi, 16), 1, 6);
    std::vector<PhaseField> ens;
    for (int deg : {1, 2, 4}) {
      ens.push_back(PhaseField::mode(disc, [](std::span<const double>) { return 1.0; }, MultiIndex{deg},
                                     Representation::Coefficient));
    }
    const InequalityReport r = hormander_ratio(ens, 0.3, 3.0);
    for (double q : r.ratios) CHECK(q <= 1.0 + 1e-12);
  }

  TEST_CASE("time-independent kinetic fields reproduce the stationary ratio") {
    EnsembleSpec spec;
    spec.count = 3;
    const auto disc = Discretization::make(DomainSpec::torus(kTwoPi, 8), 1, 6);
    const auto fields = random_cutoff_ensemble(disc, spec);
    std::vector<TimeSeriesField> series;
    for (const PhaseField& f : fields) {
      TimeSeriesField ts;
      ts.periodic = true;
      ts.dt = kTwoPi / 8;
      ts.slices.assign(8, f);
      series.push_back(ts);
    }
    const InequalityReport stationary = hormander_ratio(fields, 0.3, spec.v0);
    const InequalityReport kinetic = kinetic_hormander_ratio(series, 0.3, spec.v0);
    REQUIRE(kinetic.ratios.size() == stationary.ratios.size());
    for (std::size_t k = 0; k < kinetic.ratios.size(); ++k)
      CHECK(kinetic.ratios[k] == doctest::Approx(stationary.ratios[k]).epsilon(1e-10));
  }

  TEST_CASE("kind names") {
    CHECK(to_string(PoincareKind::Velocity) == "velocity");
    CHECK(to_string(PoincareKind::Kinetic) == "kin");
  }
}
