#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "meanfield2nn/kernels.hpp"

namespace mf {

/// K points equally spaced on [lo, hi] (the statics grid o_1..o_K).
std::vector<double> linear_grid(double lo, double hi, std::size_t k);

/// v(o_i) and u_d(o_i, o_j) over a strictly increasing positive grid.
/// Throws std::runtime_error if any entry is non-finite.
KernelGrid build_kernel_grid(const Activation& act, double delta, Dim d, const std::vector<double>& grid,
                             int threads = 0);

struct QpResult {
    std::vector<double> p;
    double risk;
    double gap;
    std::size_t iterations;
    bool converged;
};

/// Minimizes 1 + 2 v'p + p'Up over the probability simplex by Frank-Wolfe
/// with away steps and exact line search, stopping when the Frank-Wolfe gap
/// is <= tol. Vertex ties go to the smallest index. If max_iters is reached
/// the best iterate is returned with converged = false.
QpResult solve_simplex_qp(const KernelGrid& kernel, double tol = 1e-10, std::size_t max_iters = 200000);

/// Risk 1 + 2 v'p + p'Up.
double qp_risk(const KernelGrid& kernel, const std::vector<double>& p);

struct SingleDelta {
    double r_star;
    double risk;
};

/// Single-atom risk 1 + 2 v(r) + u_d(r, r).
double single_delta_risk(const Activation& act, double delta, Dim d, double r);

/// Grid argmin of the single-atom risk (smallest r on ties) refined by golden
/// section over the neighbouring cells. The diagonal of `cached`, when given,
/// supplies the grid values.
SingleDelta minimize_single_delta(const Activation& act, double delta, Dim d, const std::vector<double>& grid,
                                  const KernelGrid* cached = nullptr);

/// True iff v(r) + u_d(r, r*) >= v(r*) + u_d(r*, r*) - tol at every grid radius.
bool check_point_mass_optimality(const Activation& act, double delta, Dim d, double r_star,
                                 const std::vector<double>& r_grid, double tol = 1e-8, int threads = 0);

struct ThresholdRow {
    double delta;
    double r_star;
    double risk_single;
    bool passes;
};

struct ThresholdScan {
    std::vector<ThresholdRow> rows;
    std::optional<double> delta_low;
    std::optional<double> delta_high;
    /// Whether the passing set is a contiguous run of the delta grid.
    bool contiguous = true;
};

/// For each delta: minimize the single-atom risk on `single_grid`, then run the
/// point-mass optimality check on `r_grid`.
ThresholdScan delta_threshold_scan(const Activation& act, Dim d, const std::vector<double>& delta_grid,
                                   const std::vector<double>& r_grid, const std::vector<double>& single_grid,
                                   int threads = 0);

/// Whether some r has q((1+delta) r) >= 1 and q((1-delta) r) <= -1 (searched on
/// a log grid over [1e-3, 1e3] with golden-section refinement of the best cell).
bool in_gamma_set(const Activation& act, double delta);

/// Bisection on delta in [0.01, 0.99] of in_gamma_set down to width tol.
double delta_infty(const Activation& act, double tol = 1e-4);

} // namespace mf
