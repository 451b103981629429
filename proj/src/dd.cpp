#include "meanfield2nn/dd.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "meanfield2nn/parallel.hpp"
#include "meanfield2nn/random.hpp"

namespace mf {

std::vector<double> log_time_grid(double t_min, double t_max, std::size_t points) {
    if (!(t_min > 0.0) || !(t_max > t_min) || points < 2)
        throw std::invalid_argument("log time grid needs 0 < t_min < t_max and at least 2 points");
    std::vector<double> grid;
    grid.reserve(points + 1);
    grid.push_back(0.0);
    const double a = std::log10(t_min), b = std::log10(t_max);
    for (std::size_t k = 0; k < points; ++k) {
        const double e = a + (b - a) * static_cast<double>(k) / static_cast<double>(points - 1);
        grid.push_back(k + 1 == points ? t_max : std::pow(10.0, e));
    }
    return grid;
}

std::size_t DdTrajectory::index_near(double t) const {
    if (times.empty()) throw std::out_of_range("empty trajectory");
    std::size_t best = 0;
    for (std::size_t k = 1; k < times.size(); ++k)
        if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
    return best;
}

namespace {

struct Grid {
    std::vector<double> t;
    std::vector<unsigned char> record;
};

Grid merge_grid(const std::vector<double>& time_grid, const std::vector<double>& record_times, std::size_t stride) {
    if (time_grid.empty() || time_grid.front() != 0.0) throw std::invalid_argument("time grid must start at 0");
    for (std::size_t k = 1; k < time_grid.size(); ++k)
        if (!(time_grid[k] > time_grid[k - 1])) throw std::invalid_argument("time grid must be increasing");
    std::vector<double> extra;
    for (double t : record_times) {
        if (t < 0.0 || t > time_grid.back()) throw std::invalid_argument("record time outside the time grid");
        extra.push_back(t);
    }
    std::sort(extra.begin(), extra.end());
    Grid g;
    std::size_t e = 0;
    for (std::size_t k = 0; k < time_grid.size(); ++k) {
        while (e < extra.size() && extra[e] < time_grid[k]) {
            if (g.t.empty() || extra[e] > g.t.back()) {
                g.t.push_back(extra[e]);
                g.record.push_back(1);
            }
            ++e;
        }
        bool rec = k == 0 || k + 1 == time_grid.size() || (stride > 0 && k % stride == 0);
        while (e < extra.size() && extra[e] == time_grid[k]) {
            rec = true;
            ++e;
        }
        g.t.push_back(time_grid[k]);
        g.record.push_back(rec ? 1 : 0);
    }
    return g;
}

void check_table(const RadialKernelTable* table, double delta, Dim d) {
    if (table && (table->dim() != d || table->delta() != delta))
        throw std::invalid_argument("kernel table was built for a different (d, delta)");
}

// grad psi at every atom, plus lambda * x.
void psi_gradients(const Activation& act, double delta, Dim d, const AtomEnsemble& atoms, const DdOptions& opt,
                   std::vector<double>& grad) {
    const auto dim = static_cast<std::size_t>(atoms.dim());
    grad.assign(atoms.size() * dim, 0.0);
    const int threads = opt.threads > 0 ? opt.threads : default_threads();
    if (d.is_infinite()) {
        const OrderParams lam = lambda_pm(act, delta, atoms);
        parallel_for(atoms.size(), threads, [&](std::size_t i) {
            psi_grad_infinite(act, delta, atoms.space(), atoms.point(i), lam, std::span(grad).subspan(i * dim, dim));
        });
    } else if (atoms.space() != ReducedSpace::Radial1D) {
        throw std::domain_error("finite d is only supported in the radial space");
    } else if (opt.table) {
        const RadialKernelTable& tab = *opt.table;
        parallel_for(atoms.size(), threads, [&](std::size_t i) {
            const double ri = atoms.point(i)[0];
            double g = tab.v_prime(ri);
            for (std::size_t j = 0; j < atoms.size(); ++j) g += atoms.weight(j) * tab.u_d1(ri, atoms.point(j)[0]);
            grad[i] = g;
        });
    } else {
        parallel_for(atoms.size(), threads, [&](std::size_t i) {
            grad[i] = psi_grad(act, delta, d, atoms.point(i), atoms)[0];
        });
    }
    if (opt.lambda != 0.0)
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += opt.lambda * atoms.coords()[k];
}

double trajectory_risk(const Activation& act, double delta, Dim d, const AtomEnsemble& atoms, const DdOptions& opt) {
    if (d.is_infinite() || !opt.table) return reduced_risk(act, delta, d, atoms);
    const RadialKernelTable& tab = *opt.table;
    double risk = 1.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const double ri = atoms.point(i)[0];
        risk += 2.0 * atoms.weight(i) * tab.v(ri);
        for (std::size_t j = 0; j < atoms.size(); ++j) risk += atoms.weight(i) * atoms.weight(j) * tab.u(ri, atoms.point(j)[0]);
    }
    return risk;
}

void clamp_and_check(AtomEnsemble& atoms, double t) {
    auto coords = atoms.coords();
    const int dim = atoms.dim();
    for (std::size_t k = 0; k < coords.size(); ++k) {
        if (!std::isfinite(coords[k]))
            throw std::runtime_error("non-finite atom coordinate at t = " + std::to_string(t));
        if (is_radial_coordinate(atoms.space(), static_cast<int>(k % static_cast<std::size_t>(dim))) && coords[k] < 0.0)
            coords[k] = 0.0;
    }
}

} // namespace

std::vector<double> dd_step_displacement(const Activation& act, double delta, Dim d, const AtomEnsemble& atoms,
                                         double xi_dt, const DdOptions& options) {
    check_table(options.table, delta, d);
    std::vector<double> grad;
    psi_gradients(act, delta, d, atoms, options, grad);
    for (double& g : grad) g *= -2.0 * xi_dt;
    return grad;
}

DdTrajectory dd_integrate(const Activation& act, double delta, Dim d, const AtomEnsemble& atoms0,
                          const std::vector<double>& time_grid, const DdOptions& options) {
    atoms0.validate();
    check_table(options.table, delta, d);
    const Grid grid = merge_grid(time_grid, options.record_times, options.record_stride);
    AtomEnsemble atoms = atoms0;
    DdTrajectory traj;
    auto record = [&](double t) {
        traj.times.push_back(t);
        traj.snapshots.push_back(atoms);
        traj.risk.push_back(options.record_risk ? trajectory_risk(act, delta, d, atoms, options)
                                                : std::numeric_limits<double>::quiet_NaN());
    };
    std::vector<double> grad;
    for (std::size_t k = 0; k < grid.t.size(); ++k) {
        if (k > 0) {
            const double xi_dt = options.schedule.integral(grid.t[k - 1], grid.t[k]);
            psi_gradients(act, delta, d, atoms, options, grad);
            auto coords = atoms.coords();
            for (std::size_t c = 0; c < coords.size(); ++c) coords[c] -= 2.0 * xi_dt * grad[c];
            clamp_and_check(atoms, grid.t[k]);
        }
        if (grid.record[k]) record(grid.t[k]);
    }
    return traj;
}

DdTrajectory langevin_mf_1d(const Activation& act, double delta, double beta, double lambda,
                            const AtomEnsemble& atoms0, const std::vector<double>& time_grid,
                            const LangevinOptions& options) {
    atoms0.validate();
    if (atoms0.space() != ReducedSpace::Radial1D) throw std::invalid_argument("Langevin model is one-dimensional");
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
    const Grid grid = merge_grid(time_grid, options.record_times, options.record_stride);
    const bool noisy = std::isfinite(beta);
    const int threads = options.threads > 0 ? options.threads : default_threads();
    AtomEnsemble atoms = atoms0;
    const std::size_t j = atoms.size();
    DdTrajectory traj;
    std::vector<double> drift(j);
    for (std::size_t k = 0; k < grid.t.size(); ++k) {
        if (k > 0) {
            const double xi_dt = options.schedule.integral(grid.t[k - 1], grid.t[k]);
            const double noise_sd = noisy ? std::sqrt(4.0 * xi_dt / beta) : 0.0;
            OrderParams lam{0.0, 0.0};
            if (options.interaction == Interaction::MeanField) lam = lambda_pm(act, delta, atoms);
            auto coords = atoms.coords();
            parallel_for(j, threads, [&](std::size_t i) {
                double g = lambda * coords[i];
                if (options.interaction == Interaction::MeanField) {
                    double gp = 0.0;
                    psi_grad_infinite(act, delta, ReducedSpace::Radial1D, atoms.point(i), lam, std::span(&gp, 1));
                    g += gp;
                }
                drift[i] = g;
            });
            for (std::size_t i = 0; i < j; ++i) {
                double r = coords[i] - 2.0 * xi_dt * drift[i];
                if (noisy) {
                    CounterRng rng(stream_key(stream_key(options.seed, kTagNoise, i), k, 0));
                    r += noise_sd * rng.normal();
                }
                if (!std::isfinite(r))
                    throw std::runtime_error("non-finite particle position at t = " + std::to_string(grid.t[k]));
                coords[i] = std::abs(r);
            }
        }
        if (grid.record[k]) {
            traj.times.push_back(grid.t[k]);
            traj.snapshots.push_back(atoms);
            traj.risk.push_back(reduced_risk(act, delta, Dim::infinity(), atoms));
        }
    }
    return traj;
}

double fixed_point_residual(const Activation& act, double delta, Dim d, const AtomEnsemble& atoms) {
    atoms.validate();
    double worst = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (atoms.weight(i) <= 1e-12) continue;
        const auto g = psi_grad(act, delta, d, atoms.point(i), atoms);
        double n2 = 0.0;
        for (double x : g) n2 += x * x;
        worst = std::max(worst, std::sqrt(n2));
    }
    return worst;
}

namespace {

// psi'(r; delta_{r_atom}) at d = inf.
double psi_prime_single(const Activation& act, double delta, double r_atom, double r) {
    const double tp = 1.0 + delta, tm = 1.0 - delta;
    const double lp = 0.5 * (q_eval(act, tp * r_atom).q - 1.0);
    const double lm = 0.5 * (q_eval(act, tm * r_atom).q + 1.0);
    return lp * tp * q_eval(act, tp * r).q_prime + lm * tm * q_eval(act, tm * r).q_prime;
}

} // namespace

double single_atom_psi_prime(const Activation& act, double delta, double r) {
    return psi_prime_single(act, delta, r, r);
}

double find_stationary_radius(const Activation& act, double delta, double r_lo, double r_hi) {
    if (!(r_lo > 0.0) || !(r_hi > r_lo)) throw std::invalid_argument("invalid radius bracket");
    constexpr int kScan = 2000;
    auto f = [&](double r) { return single_atom_psi_prime(act, delta, r); };
    double a = r_lo, fa = f(a);
    for (int k = 1; k <= kScan; ++k) {
        const double b = r_lo * std::pow(r_hi / r_lo, static_cast<double>(k) / kScan);
        const double fb = f(b);
        if (fa < 0.0 && fb >= 0.0) {
            if (fb == 0.0) return b;
            std::uintmax_t iters = 200;
            const auto root = boost::math::tools::toms748_solve(f, a, b, fa, fb,
                                                                boost::math::tools::eps_tolerance<double>(52), iters);
            return 0.5 * (root.first + root.second);
        }
        a = b;
        fa = fb;
    }
    throw std::runtime_error("no stationary single-atom radius in the bracket");
}

DeltaStability delta_stability(const Activation& act, double delta, double r_star) {
    if (!(r_star > 0.0)) throw std::invalid_argument("r_star must be positive");
    const double residual = single_atom_psi_prime(act, delta, r_star);
    if (!(std::abs(residual) < 1e-6)) throw std::invalid_argument("r_star is not a stationary radius");
    constexpr double h = 1e-4;
    const double second =
        (psi_prime_single(act, delta, r_star, r_star + h) - psi_prime_single(act, delta, r_star, r_star - h)) / (2 * h);
    return {second, second > 0.0};
}

double origin_instability_criterion(const Activation& act, double delta, double smoothing_h) {
    if (!(smoothing_h > 0.0)) throw std::invalid_argument("smoothing_h must be positive");
    const double kappa = (sigma_deriv(act, smoothing_h) - sigma_deriv(act, -smoothing_h)) / (2.0 * smoothing_h);
    const double tp2 = (1.0 + delta) * (1.0 + delta), tm2 = (1.0 - delta) * (1.0 - delta);
    return kappa * (tm2 - tp2 + sigma_eval(act, 0.0) * (tm2 + tp2));
}

} // namespace mf
