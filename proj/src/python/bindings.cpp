#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>

#include "meanfield2nn/dd.hpp"
#include "meanfield2nn/diagnostics.hpp"
#include "meanfield2nn/experiment.hpp"
#include "meanfield2nn/sgd.hpp"
#include "meanfield2nn/statics.hpp"

namespace py = pybind11;
using namespace mf;

namespace {

/// An int, or None / inf / "inf" for the infinite-dimensional limit.
Dim to_dim(const py::object& d) {
    if (d.is_none()) return Dim::infinity();
    if (py::isinstance<py::str>(d)) {
        if (d.cast<std::string>() == "inf") return Dim::infinity();
        throw py::value_error("d must be an integer or 'inf'");
    }
    if (py::isinstance<py::float_>(d)) {
        const double x = d.cast<double>();
        if (std::isinf(x) && x > 0) return Dim::infinity();
        throw py::value_error("d must be an integer or inf");
    }
    const int v = d.cast<int>();
    if (v < 1) throw py::value_error("d must be positive");
    return Dim(v);
}

py::dict summary_dict(const SgdSummary& s) {
    py::dict out;
    out["iteration"] = s.iteration;
    out["t"] = s.t;
    out["risk_exact"] = s.risk_exact;
    out["risk_mc"] = s.risk_mc;
    out["mc_se"] = s.mc_se;
    out["error_rate"] = s.error_rate;
    out["mean_norm"] = s.mean_norm;
    return out;
}

py::dict trajectory_dict(const DdTrajectory& traj) {
    std::vector<std::vector<double>> radii;
    for (const AtomEnsemble& a : traj.snapshots) radii.push_back(a.coordinate(0));
    py::dict out;
    out["times"] = traj.times;
    out["risk"] = traj.risk;
    out["radii"] = radii;
    return out;
}

AtomEnsemble radial_atoms(std::vector<double> radii, std::optional<std::vector<double>> weights) {
    AtomEnsemble a = weights ? AtomEnsemble(ReducedSpace::Radial1D, std::move(radii), std::move(*weights))
                             : AtomEnsemble::uniform(ReducedSpace::Radial1D, std::move(radii));
    a.validate();
    return a;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mean-field dynamics and statics of two-layer networks";
    m.attr("__version__") = version();

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

    py::class_<Activation>(m, "Activation")
        .def_static("default_sigmoid", &Activation::default_sigmoid)
        .def_static("non_monotone", &Activation::non_monotone)
        .def_static("relu", &Activation::relu)
        .def_static("piecewise_linear", &Activation::piecewise_linear, py::arg("s1"), py::arg("s2"), py::arg("t1"),
                    py::arg("t2"))
        .def("__call__", [](const Activation& a, double t) { return sigma_eval(a, t); });

    const auto sigmoid = Activation::default_sigmoid();

    m.def("g_smoothed", &g_smoothed, py::arg("act"), py::arg("a"), py::arg("b"), "E[sigma(a + b G)] for standard normal G");
    m.def("q", [](const Activation& act, double r) { return q_eval(act, r).q; }, py::arg("act"), py::arg("r"));
    m.def("v", &v_eval, py::arg("act"), py::arg("delta"), py::arg("r"));
    m.def("u_d", [](const Activation& act, double delta, const py::object& d, double r1, double r2) {
              return u_d_eval(act, delta, to_dim(d), r1, r2);
          },
          py::arg("act"), py::arg("delta"), py::arg("d"), py::arg("r1"), py::arg("r2"));

    m.def("reduced_risk",
          [](std::vector<double> radii, std::optional<std::vector<double>> weights, double delta, const py::object& d,
             const Activation& act) { return reduced_risk(act, delta, to_dim(d), radial_atoms(std::move(radii), std::move(weights))); },
          py::arg("radii"), py::arg("weights") = py::none(), py::arg("delta") = 0.5, py::arg("d") = py::none(),
          py::arg("act") = sigmoid, "Risk of a weighted radial measure");

    m.def("delta_infty", [](const Activation& act) { return delta_infty(act); }, py::arg("act") = sigmoid);
    m.def("single_delta_risk",
          [](double delta, const py::object& d, double r, const Activation& act) { return single_delta_risk(act, delta, to_dim(d), r); },
          py::arg("delta"), py::arg("d"), py::arg("r"), py::arg("act") = sigmoid);
    m.def("minimize_single_delta",
          [](double delta, const py::object& d, const Activation& act) {
              const SingleDelta sd = minimize_single_delta(act, delta, to_dim(d), linear_grid(0.01, 10.0, 100));
              return py::make_tuple(sd.r_star, sd.risk);
          },
          py::arg("delta"), py::arg("d"), py::arg("act") = sigmoid, "(r_star, risk) of the best single atom");
    m.def("simplex_qp",
          [](double delta, const py::object& d, std::vector<double> grid, const Activation& act) {
              const KernelGrid k = build_kernel_grid(act, delta, to_dim(d), grid, 0);
              const QpResult res = solve_simplex_qp(k);
              py::dict out;
              out["grid"] = grid;
              out["p"] = res.p;
              out["risk"] = res.risk;
              out["gap"] = res.gap;
              out["converged"] = res.converged;
              return out;
          },
          py::arg("delta"), py::arg("d"), py::arg("grid"), py::arg("act") = sigmoid, "Risk minimizer over measures on a radius grid");
    m.def("threshold_scan",
          [](const py::object& d, std::vector<double> deltas, const Activation& act) {
              const ThresholdScan s =
                  delta_threshold_scan(act, to_dim(d), deltas, linear_grid(0.1, 10.0, 100), linear_grid(0.01, 10.0, 100), 0);
              std::vector<double> passing;
              for (const ThresholdRow& r : s.rows)
                  if (r.passes) passing.push_back(r.delta);
              py::dict out;
              out["delta_low"] = s.delta_low;
              out["delta_high"] = s.delta_high;
              out["contiguous"] = s.contiguous;
              out["passing"] = passing;
              return out;
          },
          py::arg("d"), py::arg("deltas"), py::arg("act") = sigmoid);

    m.def("sgd_run",
          [](double delta, int d, int n, double epsilon, std::uint64_t steps, double init_scale, std::uint64_t seed,
             std::vector<std::uint64_t> checkpoints, std::uint64_t mc_samples, bool exact_risk, const Activation& act, int threads) {
              const DataModel model{delta, Dim(d), std::nullopt};
              SgdConfig cfg;
              cfg.epsilon = epsilon;
              cfg.steps = steps;
              cfg.seed = seed;
              cfg.checkpoints = std::move(checkpoints);
              cfg.mc_samples = mc_samples;
              cfg.exact_risk = exact_risk;
              cfg.threads = threads;
              const WeightEnsemble init = WeightEnsemble::gaussian(n, d, init_scale / std::sqrt(static_cast<double>(d)), seed);
              std::vector<SgdSummary> traj;
              {
                  py::gil_scoped_release release;
                  traj = sgd_run(model, act, cfg, init).trajectory;
              }
              py::list out;
              for (const SgdSummary& s : traj) out.append(summary_dict(s));
              return out;
          },
          py::arg("delta"), py::arg("d"), py::arg("n"), py::arg("epsilon"), py::arg("steps"), py::arg("init_scale") = 0.8,
          py::arg("seed") = 1, py::arg("checkpoints") = std::vector<std::uint64_t>{}, py::arg("mc_samples") = 0,
          py::arg("exact_risk") = false, py::arg("act") = sigmoid, py::arg("threads") = 0,
          "One-pass SGD from N(0, init_scale^2/d I_d); returns the recorded summaries");

    m.def("dd_integrate",
          [](std::vector<double> radii, double delta, double t_max, std::size_t steps, const py::object& d, const Activation& act) {
              std::vector<double> grid(steps + 1);
              for (std::size_t k = 0; k <= steps; ++k) grid[k] = t_max * static_cast<double>(k) / static_cast<double>(steps);
              DdOptions opt;
              opt.record_stride = std::max<std::size_t>(1, steps / 100);
              return trajectory_dict(dd_integrate(act, delta, to_dim(d), radial_atoms(std::move(radii), std::nullopt), grid, opt));
          },
          py::arg("radii"), py::arg("delta"), py::arg("t_max"), py::arg("steps"), py::arg("d") = py::none(),
          py::arg("act") = sigmoid, "Reduced dynamics of equal-weight radial atoms on a uniform time grid");
    m.def("langevin",
          [](std::vector<double> radii, double delta, double beta, double lambda, double t_max, std::size_t steps,
             std::uint64_t seed, const Activation& act) {
              std::vector<double> grid(steps + 1);
              for (std::size_t k = 0; k <= steps; ++k) grid[k] = t_max * static_cast<double>(k) / static_cast<double>(steps);
              LangevinOptions opt;
              opt.seed = seed;
              opt.record_stride = std::max<std::size_t>(1, steps / 100);
              return trajectory_dict(langevin_mf_1d(act, delta, beta, lambda, radial_atoms(std::move(radii), std::nullopt), grid, opt));
          },
          py::arg("radii"), py::arg("delta"), py::arg("beta"), py::arg("lambda_"), py::arg("t_max"), py::arg("steps"),
          py::arg("seed") = 1, py::arg("act") = sigmoid);
    m.def("boltzmann_residual",
          [](std::vector<double> radii, double delta, double beta, double lambda, const Activation& act) {
              return boltzmann_residual(radii, act, delta, beta, lambda);
          },
          py::arg("radii"), py::arg("delta"), py::arg("beta"), py::arg("lambda_"), py::arg("act") = sigmoid);
    m.def("find_stationary_radius", [](double delta, const Activation& act) { return find_stationary_radius(act, delta); },
          py::arg("delta"), py::arg("act") = sigmoid);
    m.def("wasserstein1", &wasserstein1_1d, py::arg("a"), py::arg("b"), "W1 between two empirical laws on the line");

    m.def("preset", [](const std::string& name, const std::string& scale) { return preset_document(name, scale).dump(); },
          py::arg("name"), py::arg("scale") = "small", "Preset config as a JSON string");
    m.def("run_config",
          [](const std::string& config_json, std::optional<std::string> output_dir, int threads) {
              const ExperimentConfig cfg = parse_config(nlohmann::json::parse(config_json));
              RunOptions opt;
              opt.threads = threads;
              opt.output_dir = std::move(output_dir);
              py::gil_scoped_release release;
              run_experiment(cfg, opt);
          },
          py::arg("config_json"), py::arg("output_dir") = py::none(), py::arg("threads") = 0,
          "Validate a JSON config and run it, writing CSVs and manifest.json");
}
