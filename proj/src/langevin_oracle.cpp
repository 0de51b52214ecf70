#include "kfp/langevin_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

namespace kfp {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Independent stream for path `index`, a pure function of (seed, index).
std::mt19937_64 path_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(seed)), static_cast<std::uint32_t>(splitmix64(seed) >> 32),
                    static_cast<std::uint32_t>(splitmix64(index ^ 0xD1B54A32D192ED03ULL)),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

int worker_count(int requested, int work) {
  int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  return std::clamp(n, 1, std::max(1, work));
}

/// Runs body(p) for p in [0, count); each index is written by exactly one worker.
template <class Body>
void parallel_paths(int count, int threads, const Body& body) {
  const int workers = worker_count(threads, count);
  if (workers == 1) {
    for (int p = 0; p < count; ++p) body(p);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int begin = static_cast<int>(static_cast<long long>(count) * w / workers);
    const int end = static_cast<int>(static_cast<long long>(count) * (w + 1) / workers);
    pool.emplace_back([begin, end, &body] {
      for (int p = begin; p < end; ++p) body(p);
    });
  }
  for (auto& t : pool) t.join();
}

struct PathOutcome {
  double payoff = 0.0;
  double exit_time = 0.0;
  bool capped = false;
  bool wrong_side = false;
};

}  // namespace

double default_sde_step(double length) { return 1e-3 * length / 6.0; }

PathEstimate sample_solution(const DomainSpec& domain, int d_v, const DriftField& b, const SourceFunction& fstar,
                             const BoundaryData& f0, const Probe& probe, const OracleOptions& options) {
  if (domain.kind != DomainKind::Interval) throw std::invalid_argument("sample_solution: Interval domains only");
  if (d_v < 1) throw std::invalid_argument("sample_solution: d_v must be positive");
  if (static_cast<int>(probe.v.size()) != d_v) throw std::invalid_argument("sample_solution: probe velocity has wrong dimension");
  const double length = domain.extents.at(0);
  if (!(probe.x > 0.0 && probe.x < length)) throw std::invalid_argument("sample_solution: probe must be strictly interior");
  if (options.n_paths < 1) throw std::invalid_argument("sample_solution: n_paths must be positive");
  if (!f0) throw std::invalid_argument("sample_solution: boundary data required");
  const double dt = options.dt_sde > 0.0 ? options.dt_sde : default_sde_step(length);
  const double noise = std::sqrt(2.0 * dt);
  const long long max_steps = static_cast<long long>(std::ceil(options.time_cap / dt));

  std::vector<PathOutcome> outcomes(static_cast<std::size_t>(options.n_paths));
  parallel_paths(options.n_paths, options.threads, [&](int p) {
    std::mt19937_64 rng = path_stream(options.seed, static_cast<std::uint64_t>(p));
    std::normal_distribution<double> normal;
    double x = probe.x;
    std::vector<double> v = probe.v, v_next(d_v), drift(d_v);
    double accumulated = 0.0;
    PathOutcome out;
    for (long long step = 0;; ++step) {
      if (step >= max_steps) {
        out.capped = true;
        out.exit_time = step * dt;
        out.payoff = accumulated;
        break;
      }
      const double xs[1] = {x};
      b.evaluate(xs, v, drift);
      for (int j = 0; j < d_v; ++j) v_next[j] = v[j] + (-drift[j] - v[j]) * dt + noise * normal(rng);
      const double x_next = x + v[0] * dt;
      const double source = fstar ? fstar(xs, v) : 0.0;
      if (x_next <= 0.0 || x_next >= length) {
        const double wall = x_next >= length ? length : 0.0;
        const double theta = (wall - x) / (x_next - x);
        std::vector<double> v_exit(d_v);
        for (int j = 0; j < d_v; ++j) v_exit[j] = v[j] + theta * (v_next[j] - v[j]);
        const double xe[1] = {wall};
        out.wrong_side = wall > 0.0 ? v_exit[0] <= 0.0 : v_exit[0] >= 0.0;
        out.payoff = accumulated + theta * dt * source + f0(xe, v_exit);
        out.exit_time = (step + theta) * dt;
        break;
      }
      accumulated += dt * source;
      x = x_next;
      v.swap(v_next);
    }
    outcomes[static_cast<std::size_t>(p)] = out;
  });

  PathEstimate est;
  est.probe_x = probe.x;
  est.probe_v = probe.v;
  est.n_paths = options.n_paths;
  est.dt_sde = dt;
  double sum = 0.0, time_sum = 0.0;
  for (const auto& o : outcomes) {
    sum += o.payoff;
    time_sum += o.exit_time;
    est.capped += o.capped ? 1 : 0;
    est.wrong_side_exits += o.wrong_side ? 1 : 0;
  }
  const double n = static_cast<double>(options.n_paths);
  est.estimate = sum / n;
  est.mean_exit_time = time_sum / n;
  double ss = 0.0;
  for (const auto& o : outcomes) ss += (o.payoff - est.estimate) * (o.payoff - est.estimate);
  est.stderr_ = options.n_paths > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  est.capped_fraction = est.capped / n;
  est.flagged = est.capped_fraction > 1e-3;
  return est;
}

double field_value_at(const PhaseField& f, std::span<const double> x, std::span<const double> v) {
  const Discretization& disc = f.disc();
  const DomainSpec& dom = disc.domain();
  if (static_cast<int>(v.size()) != disc.d_v()) throw std::invalid_argument("field_value_at: velocity dimension mismatch");
  if (dom.d_x != 1 || x.size() != 1) throw std::invalid_argument("field_value_at: one spatial axis only");
  const int n = dom.n_x;
  const double h = disc.spacing(0);
  double s = x[0] / h;
  int i0, i1;
  double t;
  if (dom.kind == DomainKind::Torus) {
    s = std::fmod(s, static_cast<double>(n));
    if (s < 0.0) s += n;
    i0 = static_cast<int>(std::floor(s)) % n;
    i1 = (i0 + 1) % n;
    t = s - std::floor(s);
  } else {
    s = std::clamp(s, 0.0, static_cast<double>(n - 1));
    i0 = std::min(static_cast<int>(std::floor(s)), n - 2);
    i1 = i0 + 1;
    t = s - i0;
  }
  return (1.0 - t) * eval(f.velocity_slice(i0), v) + t * eval(f.velocity_slice(i1), v);
}

MomentTable equilibrium_check(int d_v, const EquilibriumOptions& options) {
  if (d_v < 1) throw std::invalid_argument("equilibrium_check: d_v must be positive");
  if (options.n_paths < 2) throw std::invalid_argument("equilibrium_check: need at least two paths");
  if (!(options.dt_sde > 0.0) || !(options.horizon > 0.0)) {
    throw std::invalid_argument("equilibrium_check: dt_sde and horizon must be positive");
  }
  const double dt = options.dt_sde;
  const long long steps = static_cast<long long>(std::llround(options.horizon / dt));
  const double noise = std::sqrt(2.0 * dt);
  const double sd0 = std::sqrt(std::max(0.0, options.initial_variance));

  std::vector<double> final_v(static_cast<std::size_t>(options.n_paths));
  parallel_paths(options.n_paths, options.threads, [&](int p) {
    std::mt19937_64 rng = path_stream(options.seed, static_cast<std::uint64_t>(p));
    std::normal_distribution<double> normal;
    std::vector<double> v(d_v);
    for (int j = 0; j < d_v; ++j) v[j] = sd0 * normal(rng);
    for (long long s = 0; s < steps; ++s) {
      for (int j = 0; j < d_v; ++j) v[j] += -v[j] * dt + noise * normal(rng);
    }
    final_v[static_cast<std::size_t>(p)] = v[0];
  });

  const double n = static_cast<double>(options.n_paths);
  double m1 = 0.0, m2 = 0.0, m4 = 0.0, m8 = 0.0;
  for (double x : final_v) {
    const double x2 = x * x;
    m1 += x;
    m2 += x2;
    m4 += x2 * x2;
    m8 += x2 * x2 * x2 * x2;
  }
  m1 /= n;
  m2 /= n;
  m4 /= n;
  m8 /= n;
  double c2 = 0.0, c4 = 0.0;
  for (double x : final_v) {
    const double d = x - m1;
    c2 += d * d;
    c4 += d * d * d * d;
  }
  const double var = c2 / (n - 1.0);
  c4 /= n;

  MomentTable table;
  table.horizon = steps * dt;
  table.n_paths = options.n_paths;
  table.dt_sde = dt;
  auto row = [&](std::string name, double target, double est, double se) {
    MomentRow r{std::move(name), target, est, se, std::abs(est - target) <= options.sigmas * se};
    table.rows.push_back(r);
  };
  row("mean", 0.0, m1, std::sqrt(var / n));
  row("variance", 1.0, var, std::sqrt(std::max(0.0, c4 - var * var) / n));
  row("fourth", 3.0, m4, std::sqrt(std::max(0.0, m8 - m4 * m4) / n));
  table.pass = std::all_of(table.rows.begin(), table.rows.end(), [](const MomentRow& r) { return r.pass; });
  return table;
}

void write_estimate_csv(std::ostream& out, const std::vector<PathEstimate>& rows) {
  char buf[160];
  out << "probe_x,probe_v,estimate,stderr,n_paths,capped_fraction\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,", r.probe_x);
    out << buf;
    for (std::size_t j = 0; j < r.probe_v.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%s%.17g", j ? ";" : "", r.probe_v[j]);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%d,%.17g\n", r.estimate, r.stderr_, r.n_paths, r.capped_fraction);
    out << buf;
  }
}

void write_moment_csv(std::ostream& out, const MomentTable& table) {
  char buf[160];
  out << "moment,target,estimate,stderr,pass\n";
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%d\n", r.name.c_str(), r.target, r.estimate, r.stderr_,
                  r.pass ? 1 : 0);
    out << buf;
  }
}

}  // namespace kfp
