#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "meanfield2nn/kernels.hpp"
#include "meanfield2nn/model.hpp"
#include "meanfield2nn/schedule.hpp"

namespace mf {

/// Thrown when a parameter norm exceeds the divergence guard.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// N hidden units. Row i of w holds w_i in R^d; the ReLU kind also carries
/// an output weight a_i and an offset b_i.
class WeightEnsemble {
public:
    WeightEnsemble(int n, int d, bool relu);

    /// w_i ~ N(0, sd^2 I_d) from the per-unit init streams of `seed`;
    /// a_i = a0, b_i = b0 for the ReLU kind.
    static WeightEnsemble gaussian(int n, int d, double sd, std::uint64_t seed, bool relu = false, double a0 = 1.0,
                                   double b0 = 1.0);

    int n() const { return n_; }
    int d() const { return d_; }
    bool relu() const { return relu_; }

    std::span<const double> w(int i) const { return {w_.data() + static_cast<std::size_t>(i) * d_, static_cast<std::size_t>(d_)}; }
    std::span<double> w(int i) { return {w_.data() + static_cast<std::size_t>(i) * d_, static_cast<std::size_t>(d_)}; }
    double& a(int i) { return a_[static_cast<std::size_t>(i)]; }
    double a(int i) const { return a_[static_cast<std::size_t>(i)]; }
    double& b(int i) { return b_[static_cast<std::size_t>(i)]; }
    double b(int i) const { return b_[static_cast<std::size_t>(i)]; }

    double norm(int i) const;
    /// Norm of the first s0 coordinates and of the rest.
    double norm_head(int i, int s0) const;
    double norm_tail(int i, int s0) const;

    /// Radial summary: Radial1D (||w||) when s0 is empty, Aniso2D (r1, r2)
    /// otherwise, Relu4D (a, b, r1, r2) for the ReLU kind. Equal weights 1/N.
    AtomEnsemble summarize(std::optional<int> s0) const;

    /// Network output (1/N) sum_i sigma_*(x; theta_i).
    double predict(const Activation& act, std::span<const double> x) const;

    void check_finite() const;

    friend bool operator==(const WeightEnsemble&, const WeightEnsemble&) = default;

private:
    int n_, d_;
    bool relu_;
    std::vector<double> w_, a_, b_;
};

struct SgdConfig {
    double epsilon = 1e-3;
    Schedule schedule = Schedule::constant(1.0);
    std::uint64_t steps = 0;
    double beta = std::numeric_limits<double>::infinity();
    double lambda = 0.0;
    std::uint64_t seed = 1;
    /// Record a summary every `risk_eval_stride` steps (0: only the explicit
    /// checkpoints and the final step).
    std::uint64_t risk_eval_stride = 0;
    /// Extra iterations at which summaries are recorded.
    std::vector<std::uint64_t> checkpoints;
    std::uint64_t mc_samples = 0;
    /// Exact population risk at checkpoints (isotropic piecewise kinds only).
    bool exact_risk = false;
    int threads = 0;

    void validate() const;
};

struct SgdSummary {
    std::uint64_t iteration = 0;
    double t = 0.0;
    double risk_exact = std::numeric_limits<double>::quiet_NaN();
    double risk_mc = std::numeric_limits<double>::quiet_NaN();
    double mc_se = std::numeric_limits<double>::quiet_NaN();
    double error_rate = std::numeric_limits<double>::quiet_NaN();
    double mean_norm = 0.0;
    double a_mean = std::numeric_limits<double>::quiet_NaN();
    double b_mean = std::numeric_limits<double>::quiet_NaN();
    double r1_mean = std::numeric_limits<double>::quiet_NaN();
    double r2_mean = std::numeric_limits<double>::quiet_NaN();
    AtomEnsemble radial;
};

struct SgdResult {
    std::vector<SgdSummary> trajectory;
    WeightEnsemble final_weights;
};

/// Called with every recorded summary as it is produced.
using SgdObserver = std::function<void(const SgdSummary&)>;

/// One-pass (noisy) SGD. Step k = 1..steps draws a fresh example from the
/// data stream and applies
///   theta_i <- (1 - 2 lambda s_k) theta_i + 2 s_k (y - yhat) grad sigma_*(x; theta_i)
///              + sqrt(2 s_k / beta) g_i,   s_k = eps * xi_impl(k).
/// Iteration 0 (the initialization) is always recorded. Bit-identical for
/// any thread count. Throws DivergenceError if some ||theta_i|| > 1e6.
SgdResult sgd_run(const DataModel& model, const Activation& act, const SgdConfig& cfg, const WeightEnsemble& init,
                  const SgdObserver& observer = {});

/// 1 + (2/N) sum_i v(||w_i||) + (1/N^2) sum_ij u(||w_i||, ||w_j||, angle_ij).
/// Isotropic data and a piecewise activation only.
double exact_population_risk(const Activation& act, const DataModel& model, const WeightEnsemble& weights,
                             int threads = 0);

struct McRisk {
    double estimate;
    double standard_error;
    double error_rate;
    double error_rate_se;
};

/// Monte-Carlo estimate of E(y - yhat)^2 and of P{sign(yhat) != y} from
/// n_samples fresh examples; sample j uses the stream (seed, risk tag, j).
McRisk mc_risk(const Activation& act, const DataModel& model, const WeightEnsemble& weights, std::uint64_t n_samples,
               std::uint64_t seed, int threads = 0);

} // namespace mf
