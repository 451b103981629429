#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "meanfield2nn/kernels.hpp"
#include "meanfield2nn/schedule.hpp"

namespace mf {

/// {0} followed by `points` times log-spaced on [t_min, t_max].
std::vector<double> log_time_grid(double t_min, double t_max, std::size_t points);

struct DdOptions {
    Schedule schedule = Schedule::constant(1.0);
    /// L2 penalty: adds lambda * x to the radial gradient (0 for plain DD).
    double lambda = 0.0;
    /// Times that must be recorded; merged into the time grid.
    std::vector<double> record_times;
    /// Also record every `record_stride`-th grid time (0: never). The first
    /// and last grid times are always recorded.
    std::size_t record_stride = 0;
    /// Finite-d radial kernel; without one finite-d gradients use quadrature.
    const RadialKernelTable* table = nullptr;
    /// Compute the reduced risk at each recorded time.
    bool record_risk = true;
    int threads = 0;
};

struct DdTrajectory {
    std::vector<double> times;
    std::vector<AtomEnsemble> snapshots;
    std::vector<double> risk;

    /// Index of the recorded time closest to t.
    std::size_t index_near(double t) const;
};

/// Explicit Euler for the reduced dynamics of the atom locations:
///   x_i <- x_i - 2 (int_{t_k}^{t_{k+1}} xi) (grad psi(x_i; rho_t) + lambda x_i),
/// radial coordinates clamped at 0. Finite d only for Radial1D.
/// Throws std::runtime_error if a coordinate becomes non-finite.
DdTrajectory dd_integrate(const Activation& act, double delta, Dim d, const AtomEnsemble& atoms0,
                          const std::vector<double>& time_grid, const DdOptions& options = {});

/// One Euler displacement of every atom for step length `xi_dt`; exposed so
/// tests can compare it with the risk-gradient route.
std::vector<double> dd_step_displacement(const Activation& act, double delta, Dim d, const AtomEnsemble& atoms,
                                         double xi_dt, const DdOptions& options = {});

/// Interaction between particles in the Langevin model.
enum class Interaction { MeanField, None };

struct LangevinOptions {
    Schedule schedule = Schedule::constant(1.0);
    Interaction interaction = Interaction::MeanField;
    std::vector<double> record_times;
    std::size_t record_stride = 0;
    std::uint64_t seed = 1;
    int threads = 0;
};

/// Mean-field Langevin particles on r >= 0 with the d = inf radial potential:
///   r_i <- |r_i - 2 xi (psi'(r_i; rho_hat) + lambda r_i) dt + sqrt(4 xi dt / beta) g_i|,
/// whose stationary law is proportional to exp(-beta (psi + lambda r^2 / 2)).
/// beta = inf switches the noise off.
DdTrajectory langevin_mf_1d(const Activation& act, double delta, double beta, double lambda,
                            const AtomEnsemble& atoms0, const std::vector<double>& time_grid,
                            const LangevinOptions& options = {});

/// max_i ||grad psi(x_i; rho)|| over atoms with weight > 1e-12.
double fixed_point_residual(const Activation& act, double delta, Dim d, const AtomEnsemble& atoms);

/// psi'(r; delta_r) at d = inf for a single atom at r.
double single_atom_psi_prime(const Activation& act, double delta, double r);

/// Stationary radius of a single atom at d = inf: the first sign change
/// (- to +) of psi'(r; delta_r) on a log grid over [r_lo, r_hi], refined by
/// TOMS 748. Throws std::runtime_error if none exists.
double find_stationary_radius(const Activation& act, double delta, double r_lo = 1e-2, double r_hi = 50.0);

struct DeltaStability {
    double psi_second_deriv;
    bool stable;
};

/// d^2/dr^2 psi(r; delta_{r*}) at r*, central difference of psi' with h = 1e-4.
/// Throws std::invalid_argument if |psi'(r*; delta_{r*})| >= 1e-6.
DeltaStability delta_stability(const Activation& act, double delta, double r_star);

/// kappa(h) {(1-Delta)^2 - (1+Delta)^2 + sigma(0) [(1-Delta)^2 + (1+Delta)^2]}
/// with kappa(h) = (sigma'(h) - sigma'(-h)) / (2h). Positive values flag the
/// origin as a stable fixed point.
double origin_instability_criterion(const Activation& act, double delta, double smoothing_h);

} // namespace mf
