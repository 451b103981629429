#include "meanfield2nn/diagnostics.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "meanfield2nn/parallel.hpp"
#include "meanfield2nn/random.hpp"

namespace mf {

double wasserstein1_1d(std::vector<double> samples_a, std::vector<double> samples_b) {
    if (samples_a.empty() || samples_b.empty()) throw std::invalid_argument("W1 needs non-empty sample sets");
    if (samples_a.size() == samples_b.size()) {
        std::sort(samples_a.begin(), samples_a.end());
        std::sort(samples_b.begin(), samples_b.end());
        double s = 0.0;
        for (std::size_t i = 0; i < samples_a.size(); ++i) s += std::abs(samples_a[i] - samples_b[i]);
        return s / static_cast<double>(samples_a.size());
    }
    const std::vector<double> wa(samples_a.size(), 1.0 / static_cast<double>(samples_a.size()));
    const std::vector<double> wb(samples_b.size(), 1.0 / static_cast<double>(samples_b.size()));
    return wasserstein1_weighted(samples_a, wa, samples_b, wb);
}

double wasserstein1_weighted(const std::vector<double>& xa, const std::vector<double>& wa,
                             const std::vector<double>& xb, const std::vector<double>& wb) {
    if (xa.empty() || xb.empty() || xa.size() != wa.size() || xb.size() != wb.size())
        throw std::invalid_argument("W1 needs matching non-empty points and weights");
    // Merge both atom lists and integrate |F_a - F_b| between consecutive points.
    struct Ev {
        double x;
        double da;
        double db;
    };
    std::vector<Ev> ev;
    ev.reserve(xa.size() + xb.size());
    const double ta = std::accumulate(wa.begin(), wa.end(), 0.0), tb = std::accumulate(wb.begin(), wb.end(), 0.0);
    for (std::size_t i = 0; i < xa.size(); ++i) ev.push_back({xa[i], wa[i] / ta, 0.0});
    for (std::size_t i = 0; i < xb.size(); ++i) ev.push_back({xb[i], 0.0, wb[i] / tb});
    std::sort(ev.begin(), ev.end(), [](const Ev& l, const Ev& r) { return l.x < r.x; });
    double fa = 0.0, fb = 0.0, total = 0.0;
    for (std::size_t k = 0; k + 1 < ev.size(); ++k) {
        fa += ev[k].da;
        fb += ev[k].db;
        total += std::abs(fa - fb) * (ev[k + 1].x - ev[k].x);
    }
    return total;
}

double radial_w1(const AtomEnsemble& a, const AtomEnsemble& b) {
    const auto wa = a.weights(), wb = b.weights();
    return wasserstein1_weighted(a.coordinate(0), {wa.begin(), wa.end()}, b.coordinate(0), {wb.begin(), wb.end()});
}

AtomEnsemble chi_quantile_atoms(int d, double sd, std::size_t j) {
    if (d < 1 || j < 1 || !(sd > 0.0)) throw std::invalid_argument("invalid chi-quantile ensemble");
    const boost::math::chi_squared_distribution<double> chi2(d);
    std::vector<double> r(j);
    for (std::size_t i = 0; i < j; ++i)
        r[i] = sd * std::sqrt(boost::math::quantile(chi2, (static_cast<double>(i) + 0.5) / static_cast<double>(j)));
    return AtomEnsemble::uniform(ReducedSpace::Radial1D, std::move(r));
}

AtomEnsemble sampled_radial_atoms(int d, double sd, std::size_t j, std::uint64_t seed) {
    std::vector<double> r(j);
    for (std::size_t i = 0; i < j; ++i) {
        CounterRng rng(seed, kTagInit, i);
        double s = 0.0;
        for (int c = 0; c < d; ++c) {
            const double z = sd * rng.normal();
            s += z * z;
        }
        r[i] = std::sqrt(s);
    }
    return AtomEnsemble::uniform(ReducedSpace::Radial1D, std::move(r));
}

double max_abs_gap(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("gap series have different lengths");
    double g = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) g = std::max(g, std::abs(a[k] - b[k]));
    return g;
}

namespace {

// Smallest k with iteration_to_time(k) >= t.
std::uint64_t iteration_for_time(const Schedule& schedule, double epsilon, double t) {
    if (schedule.kind() == Schedule::Kind::Constant)
        return static_cast<std::uint64_t>(std::max(1.0, std::round(t / epsilon)));
    std::uint64_t lo = 0, hi = 1;
    while (iteration_to_time(schedule, epsilon, hi) < t) hi *= 2;
    while (hi - lo > 1) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        (iteration_to_time(schedule, epsilon, mid) < t ? lo : hi) = mid;
    }
    return std::max<std::uint64_t>(hi, 1);
}

} // namespace

ChaosReport chaos_sweep(const DataModel& model, const Activation& act, const SgdConfig& base_cfg,
                        const std::vector<int>& n_list, const std::vector<double>& eps_list, double t_final,
                        const ChaosOptions& options) {
    model.validate();
    if (!model.isotropic() || model.d.is_infinite()) throw std::invalid_argument("chaos sweep needs isotropic finite-d data");
    if (!model.d.is_infinite() && !options.table) throw std::invalid_argument("chaos sweep needs a finite-d kernel table");
    if (!(t_final > 0.0) || options.checkpoints < 2) throw std::invalid_argument("invalid chaos sweep horizon");
    const int d = model.d.value();

    struct Cell {
        int n;
        double eps;
        std::vector<std::uint64_t> iters;
        std::vector<double> times;
    };
    std::vector<Cell> cells;
    std::vector<double> all_times;
    for (double eps : eps_list)
        for (int n : n_list) {
            Cell c{n, eps, {}, {}};
            for (int j = 0; j < options.checkpoints; ++j) {
                const double frac = static_cast<double>(j) / (options.checkpoints - 1);
                const double t = t_final * std::pow(10.0, -3.0 * (1.0 - frac));
                const std::uint64_t k = iteration_for_time(base_cfg.schedule, eps, t);
                if (c.iters.empty() || k > c.iters.back()) c.iters.push_back(k);
            }
            for (std::uint64_t k : c.iters) c.times.push_back(iteration_to_time(base_cfg.schedule, eps, k));
            all_times.insert(all_times.end(), c.times.begin(), c.times.end());
            cells.push_back(std::move(c));
        }
    std::sort(all_times.begin(), all_times.end());
    all_times.erase(std::unique(all_times.begin(), all_times.end()), all_times.end());

    // Reference: reduced dynamics from the chi quantiles of the initial law.
    const AtomEnsemble ref0 = chi_quantile_atoms(d, options.init_sd, options.reference_atoms);
    DdOptions dd_opt;
    dd_opt.schedule = base_cfg.schedule;
    dd_opt.table = options.table;
    dd_opt.record_times = all_times;
    dd_opt.threads = options.threads;
    const double t_end = all_times.back();
    const std::vector<double> grid = log_time_grid(t_end * 1e-6, t_end, options.reference_grid_points);
    const DdTrajectory ref = dd_integrate(act, model.delta, model.d, ref0, grid, dd_opt);
    auto ref_at = [&](double t) { return ref.index_near(t); };

    ChaosReport report;
    {
        std::vector<double> a, b;
        for (double t : all_times) a.push_back(ref.risk[ref_at(t)]);
        b = a;
        report.reference_self_gap = std::max(max_abs_gap(a, b), radial_w1(ref.snapshots.back(), ref.snapshots.back()));
    }

    report.rows.resize(cells.size());
    parallel_for(cells.size(), options.threads > 0 ? options.threads : default_threads(), [&](std::size_t ci) {
        const Cell& c = cells[ci];
        ChaosRow row{c.n, c.eps, t_final, std::numeric_limits<double>::quiet_NaN(),
                     std::numeric_limits<double>::quiet_NaN(), {}};
        try {
            SgdConfig cfg = base_cfg;
            cfg.epsilon = c.eps;
            cfg.steps = c.iters.back();
            cfg.checkpoints = c.iters;
            cfg.exact_risk = true;
            cfg.mc_samples = 0;
            cfg.risk_eval_stride = 0;
            cfg.threads = 1;
            cfg.seed = stream_key(base_cfg.seed, static_cast<std::uint64_t>(c.n), std::bit_cast<std::uint64_t>(c.eps));
            const WeightEnsemble init = WeightEnsemble::gaussian(c.n, d, options.init_sd, cfg.seed);
            const SgdResult run = sgd_run(model, act, cfg, init);
            std::vector<double> sgd_risk, dd_risk;
            for (const SgdSummary& s : run.trajectory) {
                if (s.iteration == 0) continue;
                const auto it = std::find(c.iters.begin(), c.iters.end(), s.iteration);
                if (it == c.iters.end()) continue;
                sgd_risk.push_back(s.risk_exact);
                dd_risk.push_back(ref.risk[ref_at(c.times[static_cast<std::size_t>(it - c.iters.begin())])]);
            }
            row.max_risk_gap = max_abs_gap(sgd_risk, dd_risk);
            row.t = c.times.back();
            row.w1_gap = radial_w1(run.trajectory.back().radial, ref.snapshots[ref_at(c.times.back())]);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        report.rows[ci] = row;
    });

    // Slope at the smallest epsilon.
    const double eps_min = *std::min_element(eps_list.begin(), eps_list.end());
    std::vector<double> lx, ly;
    for (const ChaosRow& r : report.rows)
        if (r.epsilon == eps_min && r.error.empty() && r.max_risk_gap > 0.0) {
            lx.push_back(std::log(static_cast<double>(r.n)));
            ly.push_back(std::log(r.max_risk_gap));
        }
    if (lx.size() >= 2) {
        const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
        const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t k = 0; k < lx.size(); ++k) {
            sxy += (lx[k] - mx) * (ly[k] - my);
            sxx += (lx[k] - mx) * (lx[k] - mx);
        }
        report.slope = sxy / sxx;
    }
    return report;
}

double free_risk(const Activation& act, double delta, double lambda, const AtomEnsemble& atoms) {
    if (atoms.space() != ReducedSpace::Radial1D) throw std::invalid_argument("free risk needs radial atoms");
    double second_moment = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) second_moment += atoms.weight(i) * atoms.point(i)[0] * atoms.point(i)[0];
    return reduced_risk(act, delta, Dim::infinity(), atoms) + lambda * second_moment;
}

double boltzmann_residual(const std::vector<double>& samples, const Activation& act, double delta, double beta,
                          double lambda, const BoltzmannOptions& options) {
    if (samples.empty()) throw std::invalid_argument("Boltzmann residual needs samples");
    if (!(beta > 0.0) || !std::isfinite(beta) || !(lambda > 0.0))
        throw std::invalid_argument("Boltzmann residual needs finite beta > 0 and lambda > 0");
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() < 0.0) throw std::invalid_argument("radial samples must be non-negative");
    const double r_max = options.r_max > 0.0 ? options.r_max : 1.5 * std::max(sorted.back(), 1e-3);
    const double inside = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), r_max) - sorted.begin());
    if (inside < 0.99 * static_cast<double>(sorted.size()))
        throw std::runtime_error("less than 99% of the samples lie on the Boltzmann grid");

    OrderParams lam{0.0, 0.0};
    if (options.interaction == Interaction::MeanField)
        lam = lambda_pm(act, delta, AtomEnsemble::uniform(ReducedSpace::Radial1D, sorted));
    const std::size_t m = std::max<std::size_t>(options.grid_points, 16);
    const double h = r_max / static_cast<double>(m);
    std::vector<double> energy(m + 1);
    for (std::size_t k = 0; k <= m; ++k) {
        const double r = h * static_cast<double>(k);
        double e = 0.5 * lambda * r * r;
        if (options.interaction == Interaction::MeanField) {
            const double p = r;
            e += psi_value_infinite(act, delta, ReducedSpace::Radial1D, std::span(&p, 1), lam);
        }
        energy[k] = e;
    }
    const double e_min = *std::min_element(energy.begin(), energy.end());
    std::vector<double> cdf(m + 1, 0.0);
    for (std::size_t k = 1; k <= m; ++k)
        cdf[k] = cdf[k - 1] + 0.5 * h * (std::exp(-beta * (energy[k - 1] - e_min)) + std::exp(-beta * (energy[k] - e_min)));
    const double total = cdf[m];
    for (double& c : cdf) c /= total;

    const double n = static_cast<double>(sorted.size());
    double w1 = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double mid = h * (static_cast<double>(k) + 0.5);
        const double f_emp = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), mid) - sorted.begin()) / n;
        const double f_b = 0.5 * (cdf[k] + cdf[k + 1]);
        w1 += std::abs(f_emp - f_b) * h;
    }
    return w1;
}

} // namespace mf
