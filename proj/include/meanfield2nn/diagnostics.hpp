#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "meanfield2nn/dd.hpp"
#include "meanfield2nn/kernels.hpp"
#include "meanfield2nn/model.hpp"
#include "meanfield2nn/sgd.hpp"

namespace mf {

/// W1 between two empirical measures on the line: mean |a_(i) - b_(i)| of the
/// sorted samples for equal sizes, the integral of |F_a - F_b| otherwise.
double wasserstein1_1d(std::vector<double> samples_a, std::vector<double> samples_b);

/// W1 between weighted discrete measures, integral of |F_a - F_b|.
double wasserstein1_weighted(const std::vector<double>& xa, const std::vector<double>& wa,
                             const std::vector<double>& xb, const std::vector<double>& wb);

/// W1 between the first coordinates (the radii) of two ensembles.
double radial_w1(const AtomEnsemble& a, const AtomEnsemble& b);

/// J radii at the chi-quantiles (i - 1/2)/J of ||N(0, sd^2 I_d)||, equal weights.
AtomEnsemble chi_quantile_atoms(int d, double sd, std::size_t j);

/// J radii ||Z_i||, Z_i ~ N(0, sd^2 I_d) drawn from the init streams of `seed`.
AtomEnsemble sampled_radial_atoms(int d, double sd, std::size_t j, std::uint64_t seed);

struct ChaosRow {
    int n;
    double epsilon;
    double t;
    double max_risk_gap;
    double w1_gap;
    std::string error;  // empty when the cell ran
};

struct ChaosReport {
    std::vector<ChaosRow> rows;
    /// Least-squares slope of log(max_risk_gap) against log(N) at the smallest epsilon.
    double slope = std::numeric_limits<double>::quiet_NaN();
    /// The same comparison of the reference trajectory with itself.
    double reference_self_gap = std::numeric_limits<double>::quiet_NaN();
};

struct ChaosOptions {
    /// Initial law N(0, init_sd^2 I_d) for the SGD weights and the reference atoms.
    double init_sd = 0.8 / std::sqrt(40.0);
    std::size_t reference_atoms = 1000;
    std::size_t reference_grid_points = 2000;
    int checkpoints = 20;
    /// Finite-d kernel for the reference (required when model.d is finite).
    const RadialKernelTable* table = nullptr;
    int threads = 0;
};

/// Largest |a_k - b_k| over matched checkpoints.
double max_abs_gap(const std::vector<double>& a, const std::vector<double>& b);

/// SGD risk (exact population risk at `checkpoints` log-spaced iterations up
/// to time T) against the reduced dynamics started from the same law, for
/// every (N, epsilon) pair; W1 of the radial measures at T.
ChaosReport chaos_sweep(const DataModel& model, const Activation& act, const SgdConfig& base_cfg,
                        const std::vector<int>& n_list, const std::vector<double>& eps_list, double t_final,
                        const ChaosOptions& options = {});

struct BoltzmannOptions {
    Interaction interaction = Interaction::MeanField;
    /// Upper end of the radial grid; 0 picks 1.5 * max(samples).
    double r_max = 0.0;
    std::size_t grid_points = 4000;
};

/// R(rho) + lambda * int r^2 d rho with the d = inf radial risk: the
/// functional whose gradient the noiseless Langevin drift follows.
double free_risk(const Activation& act, double delta, double lambda, const AtomEnsemble& atoms);

/// W1 between the empirical law of `samples` (r >= 0) and the density
/// proportional to exp(-beta (psi(r; rho_hat) + lambda r^2 / 2)) on the grid,
/// with psi the d = inf radial potential of the empirical measure.
/// Throws std::runtime_error if less than 99% of the samples lie on the grid.
double boltzmann_residual(const std::vector<double>& samples, const Activation& act, double delta, double beta,
                          double lambda, const BoltzmannOptions& options = {});

} // namespace mf
