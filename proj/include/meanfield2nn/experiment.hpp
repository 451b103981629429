#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "meanfield2nn/model.hpp"
#include "meanfield2nn/schedule.hpp"

namespace mf {

/// Invalid configuration; `where` names the offending field or input line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& where, const std::string& what)
        : std::runtime_error(where + ": " + what), where_(where) {}
    const std::string& where() const { return where_; }

private:
    std::string where_;
};

struct SgdSection {
    int n = 800;
    double epsilon = 1e-6;
    Schedule schedule = Schedule::constant(1.0);
    std::uint64_t steps = 1000;
    double beta = std::numeric_limits<double>::infinity();
    double lambda = 0.0;
    /// Initial weights N(0, kappa^2 / d I_d); "init_scale" may list several
    /// kappa, each run in turn.
    std::vector<double> init_scales = {0.8};
    double a0 = 1.0;
    double b0 = 1.0;
    std::uint64_t risk_eval_stride = 0;
    std::vector<std::uint64_t> checkpoints;
    std::uint64_t mc_samples = 0;
    bool exact_risk = false;
    bool dump_radial = true;
};

struct DdSection {
    std::size_t atoms = 400;
    /// "sampled" (norms of Gaussian draws) or "quantile" (chi quantiles).
    std::string init = "sampled";
    /// Log-spaced grid on [t_min, t_max]; the defaults are the times of SGD
    /// iterations 1 and sgd.steps.
    std::optional<double> t_min;
    std::optional<double> t_max;
    std::size_t grid_points = 100000;
    /// Reduced-dynamics record times; empty: the SGD checkpoints mapped to time.
    std::vector<double> record_times;
    double lambda = 0.0;
    double beta = 50.0;
    double r_max = 6.0;
    int cells = 120;
    /// Dimension of the reduced dynamics (default: the data's d for radial
    /// atoms, inf otherwise).
    std::optional<Dim> d;
    /// Atom snapshot layout: "long" (t, atom, coords) or "wide".
    std::string format = "long";
};

struct StaticsSection {
    /// Candidate radii of the simplex QP and the single-atom search.
    double grid_lo = 0.01;
    double grid_hi = 10.0;
    std::size_t grid_k = 100;
    /// Radii at which the point-mass optimality inequality is checked.
    double check_lo = 0.1;
    double check_hi = 10.0;
    std::size_t check_k = 100;
    /// Delta grid of the threshold scan.
    double scan_lo = 0.01;
    double scan_hi = 0.99;
    std::size_t scan_k = 99;
    double qp_tol = 1e-10;
    bool write_kernels = false;
};

struct ChaosSection {
    std::vector<int> n_list = {100, 200, 400, 800};
    std::vector<double> eps_list = {1e-5};
    double t_final = 0.5;
    std::size_t reference_atoms = 1000;
    double r_max = 3.0;
    int cells = 150;
};

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 1;
    /// First entries of `deltas` and `dims`.
    DataModel model;
    /// model.delta and model.d may be lists for the sweeping experiments.
    std::vector<double> deltas;
    std::vector<Dim> dims;
    Activation activation = Activation::default_sigmoid();
    SgdSection sgd;
    DdSection dd;
    StaticsSection statics;
    ChaosSection chaos;
    std::string output_dir = "out";
    /// The validated input document, echoed into the manifest.
    nlohmann::json source;
};

/// Validates a config document; unknown fields are rejected.
ExperimentConfig parse_config(const nlohmann::json& doc);
/// Reads and validates a JSON file; syntax errors report the line.
ExperimentConfig load_config(const std::string& path);

/// Hard-coded parameter sets for figure1..figure4 at scale "paper" or "small".
nlohmann::json preset_document(const std::string& name, const std::string& scale);

struct RunOptions {
    int threads = 1;
    std::optional<std::string> output_dir;
};

/// Runs the configured experiment and writes its CSVs and manifest.json.
/// Throws DivergenceError on numerical divergence.
void run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

const char* version();

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"sgd",     "dd",      "langevin", "statics", "thresholds",
                                                   "chaos",   "figure1", "figure2",  "figure3", "figure4"};
    return names;
}

} // namespace mf
