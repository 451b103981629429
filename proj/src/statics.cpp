#include "meanfield2nn/statics.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "meanfield2nn/parallel.hpp"

namespace mf {

std::vector<double> linear_grid(double lo, double hi, std::size_t k) {
    if (k < 2 || !(hi > lo)) throw std::invalid_argument("linear grid needs k >= 2 and hi > lo");
    std::vector<double> g(k);
    for (std::size_t i = 0; i < k; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k - 1);
    g.back() = hi;
    return g;
}

KernelGrid build_kernel_grid(const Activation& act, double delta, Dim d, const std::vector<double>& grid, int threads) {
    if (grid.empty() || !(grid.front() > 0.0)) throw std::invalid_argument("kernel grid must be positive");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("kernel grid must be strictly increasing");
    const std::size_t k = grid.size();
    KernelGrid kg;
    kg.grid = grid;
    kg.d = d;
    kg.delta = delta;
    kg.v_vec.resize(k);
    kg.u_mat.assign(k * k, 0.0);
    parallel_for(k, threads > 0 ? threads : default_threads(), [&](std::size_t i) {
        kg.v_vec[i] = v_eval(act, delta, grid[i]);
        for (std::size_t j = i; j < k; ++j) kg.u_mat[i * k + j] = u_d_eval(act, delta, d, grid[i], grid[j]);
    });
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < i; ++j) kg.u_mat[i * k + j] = kg.u_mat[j * k + i];
    auto finite = [](double x) { return std::isfinite(x); };
    if (!std::all_of(kg.v_vec.begin(), kg.v_vec.end(), finite) || !std::all_of(kg.u_mat.begin(), kg.u_mat.end(), finite))
        throw std::runtime_error("non-finite kernel grid entry");
    return kg;
}

double qp_risk(const KernelGrid& kernel, const std::vector<double>& p) {
    const std::size_t k = kernel.size();
    double lin = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        if (p[i] == 0.0) continue;
        lin += kernel.v_vec[i] * p[i];
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) row += kernel.u(i, j) * p[j];
        quad += p[i] * row;
    }
    return 1.0 + 2.0 * lin + quad;
}

QpResult solve_simplex_qp(const KernelGrid& kernel, double tol, std::size_t max_iters) {
    const std::size_t k = kernel.size();
    if (k == 0) throw std::invalid_argument("empty kernel grid");
    // Start at the best vertex.
    std::size_t start = 0;
    for (std::size_t i = 1; i < k; ++i)
        if (2.0 * kernel.v_vec[i] + kernel.u(i, i) < 2.0 * kernel.v_vec[start] + kernel.u(start, start)) start = i;
    std::vector<double> p(k, 0.0), up(k), grad(k);
    p[start] = 1.0;
    for (std::size_t j = 0; j < k; ++j) up[j] = kernel.u(j, start);

    QpResult best{p, qp_risk(kernel, p), std::numeric_limits<double>::infinity(), 0, false};
    for (std::size_t it = 0; it < max_iters; ++it) {
        double pup = 0.0, gp = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            grad[j] = 2.0 * kernel.v_vec[j] + 2.0 * up[j];
            pup += p[j] * up[j];
            gp += p[j] * grad[j];
        }
        std::size_t s = 0, a = k;
        for (std::size_t j = 1; j < k; ++j)
            if (grad[j] < grad[s]) s = j;
        for (std::size_t j = 0; j < k; ++j)
            if (p[j] > 0.0 && (a == k || grad[j] > grad[a])) a = j;
        const double gap_fw = gp - grad[s];
        const double gap_away = grad[a] - gp;
        const double risk = 1.0 + gp - pup;  // 1 + 2v'p + p'Up
        if (risk < best.risk || it == 0) best = {p, risk, gap_fw, it, false};
        if (gap_fw <= tol) return {p, risk, gap_fw, it, true};

        if (gap_fw >= gap_away) {
            // Toward vertex s: d = e_s - p.
            const double slope = grad[s] - gp;
            const double curv = kernel.u(s, s) - 2.0 * up[s] + pup;
            double gamma = curv > 0.0 ? std::min(1.0, -slope / (2.0 * curv)) : 1.0;
            gamma = std::max(gamma, 0.0);
            for (std::size_t j = 0; j < k; ++j) {
                p[j] *= 1.0 - gamma;
                up[j] = (1.0 - gamma) * up[j] + gamma * kernel.u(j, s);
            }
            p[s] += gamma;
        } else {
            // Away from vertex a: d = p - e_a.
            const double gamma_max = p[a] / (1.0 - p[a]);
            const double slope = gp - grad[a];
            const double curv = pup - 2.0 * up[a] + kernel.u(a, a);
            double gamma = curv > 0.0 ? std::min(gamma_max, -slope / (2.0 * curv)) : gamma_max;
            gamma = std::max(gamma, 0.0);
            for (std::size_t j = 0; j < k; ++j) {
                p[j] *= 1.0 + gamma;
                up[j] = (1.0 + gamma) * up[j] - gamma * kernel.u(j, a);
            }
            p[a] -= gamma;
            if (gamma == gamma_max || p[a] < 0.0) p[a] = 0.0;
        }
    }
    best.risk = qp_risk(kernel, best.p);
    best.iterations = max_iters;
    return best;
}

double single_delta_risk(const Activation& act, double delta, Dim d, double r) {
    return 1.0 + 2.0 * v_eval(act, delta, r) + u_d_eval(act, delta, d, r, r);
}

SingleDelta minimize_single_delta(const Activation& act, double delta, Dim d, const std::vector<double>& grid,
                                  const KernelGrid* cached) {
    if (grid.empty()) throw std::invalid_argument("empty radius grid");
    std::vector<double> values(grid.size());
    if (cached) {
        if (cached->size() != grid.size()) throw std::invalid_argument("cached kernel grid does not match");
        for (std::size_t i = 0; i < grid.size(); ++i) values[i] = 1.0 + 2.0 * cached->v_vec[i] + cached->u(i, i);
    } else {
        parallel_for(grid.size(), default_threads(),
                     [&](std::size_t i) { values[i] = single_delta_risk(act, delta, d, grid[i]); });
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (values[i] < values[best]) best = i;
    SingleDelta result{grid[best], values[best]};
    if (grid.size() < 2) return result;
    const double lo = grid[best == 0 ? 0 : best - 1];
    const double hi = grid[std::min(best + 1, grid.size() - 1)];
    // Brent's method: golden-section search accelerated by parabolic steps.
    std::uintmax_t iters = 100;
    const auto [r, risk] = boost::math::tools::brent_find_minima(
        [&](double x) { return single_delta_risk(act, delta, d, x); }, lo, hi, 40, iters);
    if (risk < result.risk) result = {r, risk};
    return result;
}

bool check_point_mass_optimality(const Activation& act, double delta, Dim d, double r_star,
                                 const std::vector<double>& r_grid, double tol, int threads) {
    const double base = v_eval(act, delta, r_star) + u_d_eval(act, delta, d, r_star, r_star);
    std::vector<unsigned char> ok(r_grid.size());
    parallel_for(r_grid.size(), threads > 0 ? threads : default_threads(), [&](std::size_t i) {
        const double r = r_grid[i];
        ok[i] = v_eval(act, delta, r) + u_d_eval(act, delta, d, r, r_star) >= base - tol;
    });
    return std::all_of(ok.begin(), ok.end(), [](unsigned char x) { return x != 0; });
}

ThresholdScan delta_threshold_scan(const Activation& act, Dim d, const std::vector<double>& delta_grid,
                                   const std::vector<double>& r_grid, const std::vector<double>& single_grid,
                                   int threads) {
    ThresholdScan scan;
    scan.rows.resize(delta_grid.size());
    parallel_for(delta_grid.size(), threads > 0 ? threads : default_threads(), [&](std::size_t k) {
        const double delta = delta_grid[k];
        const SingleDelta sd = minimize_single_delta(act, delta, d, single_grid);
        const bool pass = check_point_mass_optimality(act, delta, d, sd.r_star, r_grid, 1e-8, 1);
        scan.rows[k] = {delta, sd.r_star, sd.risk, pass};
    });
    std::optional<std::size_t> first, last;
    for (std::size_t k = 0; k < scan.rows.size(); ++k)
        if (scan.rows[k].passes) {
            if (!first) first = k;
            last = k;
        }
    if (first) {
        scan.delta_low = scan.rows[*first].delta;
        scan.delta_high = scan.rows[*last].delta;
        for (std::size_t k = *first; k <= *last; ++k)
            if (!scan.rows[k].passes) scan.contiguous = false;
    }
    return scan;
}

bool in_gamma_set(const Activation& act, double delta) {
    const double tp = 1.0 + delta, tm = 1.0 - delta;
    // h(r) >= 0 iff both inequalities hold at r.
    auto h = [&](double r) { return std::min(q_eval(act, tp * r).q - 1.0, -1.0 - q_eval(act, tm * r).q); };
    constexpr int kPoints = 2000;
    const double lo = 1e-3, hi = 1e3;
    auto at = [&](int k) { return lo * std::pow(hi / lo, static_cast<double>(k) / (kPoints - 1)); };
    int best = 0;
    double best_val = h(at(0));
    for (int k = 1; k < kPoints; ++k) {
        const double val = h(at(k));
        if (val > best_val) {
            best = k;
            best_val = val;
        }
    }
    if (best_val >= 0.0) return true;
    std::uintmax_t iters = 200;
    const auto [r, neg] = boost::math::tools::brent_find_minima([&](double x) { return -h(x); },
                                                                at(std::max(best - 1, 0)),
                                                                at(std::min(best + 1, kPoints - 1)), 52, iters);
    (void)r;
    return -neg >= 0.0;
}

double delta_infty(const Activation& act, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
    double lo = 0.01, hi = 0.99;
    if (in_gamma_set(act, lo)) return lo;
    if (!in_gamma_set(act, hi)) throw std::runtime_error("zero risk is not reachable for delta <= 0.99");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (in_gamma_set(act, mid) ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace mf
