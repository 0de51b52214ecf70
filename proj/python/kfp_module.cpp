#include "kfp/config.hpp"
#include "kfp/gauss_hermite.hpp"
#include "kfp/inequality_lab.hpp"
#include "kfp/kinetic_evolution.hpp"
#include "kfp/langevin_oracle.hpp"
#include "kfp/run.hpp"
#include "kfp/variational_solver.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;

namespace {

kfp::RunConfig config_from(const std::string& command, const py::kwargs& kwargs) {
  kfp::RunConfig cfg;
  cfg.set("command", command);
  for (const auto& item : kwargs) {
    const std::string key = py::str(item.first);
    const py::handle value = item.second;
    std::string text;
    if (py::isinstance<py::bool_>(value)) {
      text = value.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::float_>(value)) {
      std::ostringstream ss;
      ss.precision(17);
      ss << value.cast<double>();
      text = ss.str();
    } else {
      text = py::str(value);
    }
    cfg.set(key, text);
  }
  return cfg;
}

kfp::OperatorSet operators(const kfp::ModelSetup& m) { return kfp::assemble(m.disc, m.drift, m.scheme, m.velocity); }

kfp::PhaseField source_field(const kfp::ModelSetup& m, const kfp::RunConfig& cfg) {
  if (m.source) return kfp::PhaseField::from_function(m.disc, m.source, m.disc->default_representation());
  kfp::EnsembleSpec spec;
  spec.count = 1;
  spec.seed = static_cast<std::uint64_t>(cfg.get_int64("seed"));
  spec.max_wavenumber = cfg.get_int("max_wavenumber");
  spec.max_degree = cfg.get_int("max_degree");
  spec.v0 = cfg.get_double("v0");
  kfp::PhaseField f = kfp::random_cutoff_ensemble(m.disc, spec).front();
  f *= cfg.get_double("source_amplitude");
  return f;
}

/// (n_spatial x n_velocity) nodal values plus the grid.
py::dict field_dict(const kfp::PhaseField& f) {
  const kfp::Discretization& d = f.disc();
  const kfp::PhaseField nodal = f.to_nodal();
  Eigen::MatrixXd values(d.n_spatial(), d.n_velocity());
  Eigen::MatrixXd x(d.n_spatial(), d.domain().d_x);
  Eigen::MatrixXd v(d.n_velocity(), d.d_v());
  for (int i = 0; i < d.n_spatial(); ++i) {
    for (int a = 0; a < d.n_velocity(); ++a) values(i, a) = nodal.at(i, a);
    for (int j = 0; j < d.domain().d_x; ++j) x(i, j) = d.x(i, j);
  }
  for (int k = 0; k < d.n_velocity(); ++k) {
    for (int j = 0; j < d.d_v(); ++j) v(k, j) = d.velocity_node(k)[j];
  }
  py::dict out;
  out["values"] = values;
  out["x"] = x;
  out["v"] = v;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Kinetic Fokker-Planck solvers and inequality studies";
  py::register_exception<kfp::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("config_keys", [] {
    py::dict out;
    for (const auto& k : kfp::config_keys()) out[py::str(k.name)] = k.default_value;
    return out;
  }, "Configuration keys and their defaults.");

  m.def("hermite_value", &kfp::hermite_value, py::arg("n"), py::arg("t"), "Normalized Hermite polynomial h_n(t).");

  m.def("gauss_hermite", [](int nodes) {
    const kfp::Quadrature q(1, nodes);
    return py::make_tuple(Eigen::VectorXd(q.nodes_1d()), Eigen::VectorXd(q.weights_1d()));
  }, py::arg("nodes"), "Gauss-Hermite nodes and weights for the standard Gaussian.");

  m.def("solve", [](py::kwargs kw) {
    const kfp::RunConfig cfg = config_from("solve", kw);
    const kfp::ModelSetup model = kfp::build_model(cfg);
    const kfp::OperatorSet ops = operators(model);
    const kfp::PhaseField fstar = source_field(model, cfg);
    const std::string& method = cfg.get_choice("method", {"direct", "variational", "fixed_point"});
    kfp::SolveReport r;
    {
      py::gil_scoped_release release;
      if (method == "direct") r = kfp::solve_direct(ops, fstar);
      else if (method == "variational") r = kfp::solve_variational(ops, fstar);
      else r = kfp::solve_general_b(ops, fstar);
    }
    py::dict out = field_dict(r.solution);
    out["method"] = kfp::to_string(r.method);
    out["residual"] = r.residual;
    out["j_value"] = r.j_value.value;
    out["j_infinite"] = r.j_value.infinite;
    out["iterations"] = r.iterations;
    out["converged"] = r.converged;
    return out;
  }, "Stationary solve configured by keyword arguments.");

  m.def("evolve", [](py::kwargs kw) {
    const kfp::RunConfig cfg = config_from("evolve", kw);
    const kfp::ModelSetup model = kfp::build_model(cfg);
    const kfp::OperatorSet ops = operators(model);
    const kfp::PhaseField fstar = source_field(model, cfg);
    kfp::PhaseField init(model.disc, model.disc->default_representation());
    const std::string& ini = cfg.get("initial");
    if (ini == "h1") {
      std::vector<int> e(model.disc->d_v(), 0);
      e[0] = 1;
      init = kfp::PhaseField::mode(model.disc, [](std::span<const double>) { return 1.0; }, kfp::MultiIndex(e),
                                   model.disc->default_representation());
    } else if (ini != "zero") {
      throw kfp::ConfigError("evolve binding supports initial = h1 or zero");
    }
    kfp::EvolveOptions o;
    o.final_time = cfg.get_double("final_time");
    o.dt = cfg.get_double("dt");
    o.scheme = cfg.get("time_scheme") == "crank_nicolson" ? kfp::TimeScheme::CrankNicolson
                                                          : kfp::TimeScheme::ImplicitEuler;
    o.window_start = cfg.get_double("window_start");
    o.window_end = cfg.get_double("window_end");
    kfp::EvolveResult r;
    {
      py::gil_scoped_release release;
      r = kfp::evolve(ops, fstar, init, o);
    }
    py::dict out;
    out["times"] = r.trace.times;
    out["norms"] = r.trace.norms;
    out["lambda_fit"] = r.trace.lambda_fit;
    out["prefactor_fit"] = r.trace.prefactor_fit;
    out["ok"] = r.ok;
    return out;
  }, "Time evolution toward the stationary state; returns the decay trace.");

  m.def("spectral_gap", [](py::kwargs kw) {
    const kfp::RunConfig cfg = config_from("decay", kw);
    const kfp::ModelSetup model = kfp::build_model(cfg);
    const kfp::SpectralGap g = kfp::spectral_gap(operators(model));
    py::dict out;
    out["gap"] = g.gap;
    out["imag"] = g.imag;
    out["method"] = g.method;
    return out;
  }, "Smallest real part of the generator spectrum off the kernel.");

  m.def("poincare_constant", [](py::kwargs kw) {
    const kfp::RunConfig cfg = config_from("poincare", kw);
    const kfp::ModelSetup model = kfp::build_model(cfg);
    kfp::PoincareSetup s;
    const std::string& kind = cfg.get_choice("poincare_kind", {"velocity", "hyp_mean", "hyp_zero", "kinetic"});
    s.kind = kind == "velocity"   ? kfp::PoincareKind::Velocity
             : kind == "hyp_mean" ? kfp::PoincareKind::HypMean
             : kind == "hyp_zero" ? kfp::PoincareKind::HypZero
                                  : kfp::PoincareKind::Kinetic;
    s.domain = model.domain;
    s.domain.potential.reset();
    s.domain.boundary_data = nullptr;
    s.d_v = model.disc->d_v();
    s.n_t = cfg.get_int("n_t");
    s.period = cfg.get_double("period");
    kfp::InequalityReport r;
    {
      py::gil_scoped_release release;
      r = kfp::poincare_refinement(s, kfp::resolutions(cfg));
    }
    py::list table;
    for (const auto& row : r.refinement_table) table.append(py::make_tuple(row.n_x, row.cutoff, row.constant));
    py::dict out;
    out["constant"] = r.constant;
    out["lambda_min"] = r.lambda_min;
    out["method"] = r.method;
    out["converged"] = r.converged;
    out["table"] = table;
    return out;
  }, "Discrete Poincare constant (refinement table when `refine` is given).");

  m.def("hormander_ratio", [](py::kwargs kw) {
    const kfp::RunConfig cfg = config_from("hormander", kw);
    const kfp::ModelSetup model = kfp::build_model(cfg);
    kfp::EnsembleSpec spec;
    spec.count = cfg.get_int("samples");
    spec.max_wavenumber = cfg.get_int("max_wavenumber");
    spec.max_degree = cfg.get_int("max_degree");
    spec.v0 = cfg.get_double("v0");
    spec.seed = static_cast<std::uint64_t>(cfg.get_int64("seed"));
    kfp::InequalityReport r;
    {
      py::gil_scoped_release release;
      r = kfp::hormander_ratio(kfp::random_cutoff_ensemble(model.disc, spec), cfg.get_double("alpha"), spec.v0);
    }
    py::dict out;
    out["max_ratio"] = r.max_ratio;
    out["ratios"] = r.ratios;
    out["max_ratio_theta_half"] = r.max_ratio_half;
    return out;
  }, "Fractional embedding ratios over a random velocity-cutoff ensemble.");

  m.def("caccioppoli", [](py::kwargs kw) {
    const kfp::RunConfig cfg = config_from("caccioppoli", kw);
    kfp::CaccioppoliSetup s;
    s.domain = kfp::DomainSpec::interval(cfg.get_double("length"), cfg.get_int("n_x"));
    s.cutoff = cfg.get_int("cutoff");
    s.d_v = cfg.get_int("d_v");
    s.samples = cfg.get_int("samples");
    s.radius = cfg.get_double("radius");
    s.center = cfg.get_doubles("center");
    s.drift_amplitude = cfg.get_double("drift_amplitude");
    s.sources.seed = static_cast<std::uint64_t>(cfg.get_int64("seed"));
    s.sources.max_wavenumber = cfg.get_int("max_wavenumber");
    s.sources.max_degree = cfg.get_int("max_degree");
    s.sources.v0 = cfg.get_double("v0");
    kfp::CaccioppoliStudy st;
    {
      py::gil_scoped_release release;
      st = kfp::caccioppoli_ensemble(s);
    }
    std::vector<double> ratios;
    for (const auto& r : st.results) ratios.push_back(r.ratio);
    py::dict out;
    out["max_ratio"] = st.max_ratio;
    out["ratios"] = ratios;
    out["all_finite"] = st.all_finite;
    return out;
  }, "Caccioppoli ratios over an ensemble of direct solves on an Interval.");

  m.def("sample_solution", [](double x, double v, py::kwargs kw) {
    const kfp::RunConfig cfg = config_from("oracle", kw);
    const kfp::ModelSetup model = kfp::build_model(cfg);
    if (!model.source) throw kfp::ConfigError("sample_solution needs a pointwise source");
    kfp::OracleOptions o;
    o.n_paths = cfg.get_int("n_paths");
    o.dt_sde = cfg.get_double("dt_sde");
    o.time_cap = cfg.get_double("time_cap");
    o.seed = static_cast<std::uint64_t>(cfg.get_int64("seed"));
    o.threads = cfg.get_int("threads");
    kfp::Probe p;
    p.x = x;
    p.v.assign(model.disc->d_v(), 0.0);
    p.v[0] = v;
    kfp::PathEstimate e;
    {
      py::gil_scoped_release release;
      e = kfp::sample_solution(model.domain, model.disc->d_v(), model.drift, model.source, model.domain.boundary_data,
                               p, o);
    }
    py::dict out;
    out["estimate"] = e.estimate;
    out["stderr"] = e.stderr_;
    out["n_paths"] = e.n_paths;
    out["mean_exit_time"] = e.mean_exit_time;
    out["dt_sde"] = e.dt_sde;
    out["capped_fraction"] = e.capped_fraction;
    return out;
  }, py::arg("x"), py::arg("v"), "Monte Carlo estimate of the Dirichlet solution at (x, v).");

  m.def("equilibrium_check", [](py::kwargs kw) {
    const kfp::RunConfig cfg = config_from("oracle", kw);
    kfp::EquilibriumOptions o;
    o.horizon = cfg.get_double("horizon");
    o.n_paths = cfg.get_int("n_paths");
    o.dt_sde = cfg.get_double("dt_sde") > 0.0 ? cfg.get_double("dt_sde") : 1e-3;
    o.seed = static_cast<std::uint64_t>(cfg.get_int64("seed"));
    o.threads = cfg.get_int("threads");
    o.initial_variance = cfg.get_double("initial_variance");
    kfp::MomentTable t;
    {
      py::gil_scoped_release release;
      t = kfp::equilibrium_check(cfg.get_int("d_v"), o);
    }
    py::list rows;
    for (const auto& r : t.rows) {
      py::dict d;
      d["moment"] = r.name;
      d["target"] = r.target;
      d["estimate"] = r.estimate;
      d["stderr"] = r.stderr_;
      d["pass"] = r.pass;
      rows.append(d);
    }
    return rows;
  }, "Long-run velocity moments of the free Langevin diffusion.");

  m.def("run", [](const std::string& command, py::kwargs kw) {
    const kfp::RunConfig cfg = config_from(command, kw);
    std::ostringstream out, err;
    kfp::RunResult r;
    {
      py::gil_scoped_release release;
      r = kfp::run(cfg, out, err);
    }
    py::dict d;
    d["exit_code"] = r.exit_code;
    d["output_dir"] = r.output_dir;
    d["artifacts"] = r.artifacts;
    d["stdout"] = out.str();
    d["stderr"] = err.str();
    return d;
  }, py::arg("command"), "Runs one CLI command in-process and returns its exit code and artifacts.");
}
