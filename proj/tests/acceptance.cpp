#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "meanfield2nn/dd.hpp"
#include "meanfield2nn/diagnostics.hpp"
#include "meanfield2nn/experiment.hpp"
#include "meanfield2nn/quadrature.hpp"
#include "meanfield2nn/statics.hpp"

using namespace mf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const Activation kAct = Activation::default_sigmoid();

class Timer {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        detail << "\n    " << (ok ? "ok   " : "FAIL ") << what;
    }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

/// Rows of a numeric CSV keyed by column name.
std::vector<std::map<std::string, double>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    std::stringstream hs(line);
    for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
    std::vector<std::map<std::string, double>> rows;
    while (std::getline(in, line)) {
        std::stringstream ls(line);
        std::map<std::string, double> row;
        std::size_t k = 0;
        for (std::string cell; std::getline(ls, cell, ',') && k < header.size(); ++k) row[header[k]] = std::strtod(cell.c_str(), nullptr);
        rows.push_back(row);
    }
    return rows;
}

fs::path run_preset(json doc, const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("mf_acceptance_" + tag);
    fs::remove_all(dir);
    RunOptions opt;
    opt.threads = 0;
    opt.output_dir = dir.string();
    run_experiment(parse_config(doc), opt);
    return dir;
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
    Outcome o;
    const Timer t;
    const double d = delta_infty(kAct);
    const double secs = t.seconds();
    o.check(std::abs(d - 0.47) <= 0.01, fmt("delta_infty = %.5f, target 0.47 +- 0.01", d));
    o.check(secs < 5.0, fmt("runtime %.2f s < 5 s", secs));
    return o;
}

Outcome criterion_2() {
    Outcome o;
    const Timer t;
    std::vector<double> deltas;
    for (int k = 1; k <= 99; ++k) deltas.push_back(0.01 * k);
    const auto r_grid = linear_grid(0.1, 10.0, 100);
    const auto single_grid = linear_grid(0.01, 10.0, 100);
    const double step = 0.01 + 1e-9;
    struct Row {
        int d;
        double low, high;
        bool none;
    };
    for (const Row& row : {Row{40, 0.03, 0.42, false}, Row{160, 0.00, 0.46, false}, Row{5, 0, 0, true}, Row{10, 0, 0, true}}) {
        const ThresholdScan scan = delta_threshold_scan(kAct, Dim(row.d), deltas, r_grid, single_grid, 0);
        if (row.none) {
            o.check(!scan.delta_low && !scan.delta_high, "d=" + std::to_string(row.d) + ": no passing delta");
            continue;
        }
        const bool found = scan.delta_low && scan.delta_high;
        const double lo = scan.delta_low.value_or(NAN), hi = scan.delta_high.value_or(NAN);
        o.check(found && std::abs(lo - row.low) <= step && std::abs(hi - row.high) <= step && scan.contiguous,
                "d=" + std::to_string(row.d) + fmt(": (%.2f, %.2f), target (%.2f, ", lo, hi, row.low) + fmt("%.2f)", row.high));
    }
    const double secs = t.seconds();
    o.check(secs < 600.0, fmt("runtime %.1f s < 600 s", secs));
    return o;
}

Outcome criterion_3() {
    Outcome o;
    const auto grid = linear_grid(0.01, 10.0, 100);
    const auto r_grid = linear_grid(0.1, 10.0, 100);
    for (double delta : {0.1, 0.2, 0.3, 0.4, 0.6}) {
        const KernelGrid k = build_kernel_grid(kAct, delta, Dim(40), grid, 0);
        const QpResult qp = solve_simplex_qp(k);
        const SingleDelta sd = minimize_single_delta(kAct, delta, Dim(40), grid, &k);
        const bool optimal = check_point_mass_optimality(kAct, delta, Dim(40), sd.r_star, r_grid);
        if (delta < 0.5) {
            o.check(optimal && std::abs(sd.risk - qp.risk) <= 1e-3,
                    fmt("delta=%.1f: point mass optimal, |single - QP| = %.2e <= 1e-3", delta, std::abs(sd.risk - qp.risk)));
        } else {
            o.check(qp.risk < sd.risk - 1e-3, fmt("delta=%.1f: QP %.5f < single %.5f - 1e-3", delta, qp.risk, sd.risk));
        }
    }
    return o;
}

Outcome criterion_4(bool full) {
    Outcome o;
    json doc = preset_document("figure1", full ? "paper" : "small");
    const std::uint64_t last = full ? 4000000 : 1000000;
    if (full) {
        // Nothing past the last compared iteration is needed.
        doc["sgd"]["steps"] = last;
        doc["sgd"]["checkpoints"] = {1000, 10000, 100000, 1000000, 4000000};
        doc["dd"]["t_max"] = 1e-6 * static_cast<double>(last);
    }
    const Timer t;
    const fs::path dir = run_preset(doc, full ? "figure1_paper" : "figure1_small");
    const double secs = t.seconds();
    const double w1_bar = full ? 0.1 : 0.15;
    for (const auto& row : read_csv(dir / "comparison.csv")) {
        const auto it = static_cast<std::uint64_t>(row.at("iteration"));
        if (it != 1000 && it != last) continue;
        const double w1 = row.at("w1_r"), gap = std::abs(row.at("risk_sgd") - row.at("risk_dd"));
        o.check(w1 <= w1_bar, fmt("iteration %.0f: radial W1 %.4f <= %.2f", static_cast<double>(it), w1, w1_bar));
        if (full) o.check(gap <= 0.05, fmt("iteration %.0f: risk gap %.4f <= 0.05", static_cast<double>(it), gap));
        else o.detail << fmt("\n    info  iteration %.0f: risk gap %.4f", static_cast<double>(it), gap);
    }
    if (!full) o.check(secs < 600.0, fmt("runtime %.1f s < 600 s", secs));
    else o.detail << fmt("\n    info  runtime %.1f s", secs);
    fs::remove_all(dir);
    return o;
}

Outcome criterion_5(bool full) {
    Outcome o;
    const fs::path dir = run_preset(preset_document("figure4", full ? "paper" : "small"), "figure4");
    std::ifstream in(dir / "manifest.json");
    const json res = json::parse(in)["results"];
    for (const json& run : res["runs"]) {
        const double kappa = run["init_scale"];
        if (kappa < 0.2) {
            const double err = run["final_error_rate"], norm = run["final_mean_norm"];
            o.check(std::abs(err - 0.5) <= 0.03, fmt("kappa=%.1f: error rate %.4f in 0.5 +- 0.03", kappa, err));
            o.check(norm < 0.05, fmt("kappa=%.1f: mean norm %.2e < 0.05", kappa, norm));
        } else {
            const double risk = run["final_risk_sgd"];
            o.check(risk < 0.2, fmt("kappa=%.1f: risk %.4f < 0.2", kappa, risk));
        }
    }
    const double nm = res["origin_instability_criterion"], sig = res["origin_instability_criterion_default_sigmoid"];
    o.check(nm > 0.0, fmt("origin criterion, non-monotone: %.4g > 0", nm));
    o.check(sig == 0.0, fmt("origin criterion, default sigmoid: %.4g == 0", sig + 0.0));
    fs::remove_all(dir);
    return o;
}

Outcome criterion_6() {
    Outcome o;
    const Timer t;
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> pos(0.2, 2.5), sgn(-1.0, 1.0);
    std::normal_distribution<double> normal;

    {   // Potential gradient against central differences.
        const Activation relu = Activation::relu();
        struct Case {
            ReducedSpace space;
            const Activation* act;
            Dim d;
        };
        double worst = 0.0;
        for (const Case& c : {Case{ReducedSpace::Radial1D, &kAct, Dim::infinity()}, Case{ReducedSpace::Radial1D, &kAct, Dim(40)},
                              Case{ReducedSpace::Aniso2D, &kAct, Dim::infinity()},
                              Case{ReducedSpace::Relu4D, &relu, Dim::infinity()}}) {
            const int dim = space_dim(c.space);
            auto draw = [&] {
                std::vector<double> x;
                for (int k = 0; k < dim; ++k) x.push_back(is_radial_coordinate(c.space, k) ? pos(gen) : sgn(gen));
                return x;
            };
            std::vector<double> coords;
            for (int i = 0; i < 6; ++i)
                for (double v : draw()) coords.push_back(v);
            const auto atoms = AtomEnsemble::uniform(c.space, coords);
            for (int trial = 0; trial < 5; ++trial) {
                auto x = draw();
                const auto g = psi_grad(*c.act, 0.6, c.d, x, atoms);
                for (int k = 0; k < dim; ++k) {
                    const double h = 1e-5, x0 = x[k];
                    x[k] = x0 + h;
                    const double up = psi_value(*c.act, 0.6, c.d, x, atoms);
                    x[k] = x0 - h;
                    const double down = psi_value(*c.act, 0.6, c.d, x, atoms);
                    x[k] = x0;
                    worst = std::max(worst, std::abs(g[k] - (up - down) / (2 * h)));
                }
            }
        }
        o.check(worst < 1e-6, fmt("potential gradient vs finite differences: max error %.2e < 1e-6", worst));
    }
    {   // Reduced-dynamics risk is non-increasing.
        bool mono = true;
        for (ReducedSpace space : {ReducedSpace::Radial1D, ReducedSpace::Aniso2D, ReducedSpace::Relu4D}) {
            const Activation act = space == ReducedSpace::Relu4D ? Activation::relu() : kAct;
            std::vector<double> coords;
            for (int i = 0; i < 10; ++i)
                for (int k = 0; k < space_dim(space); ++k) coords.push_back(is_radial_coordinate(space, k) ? pos(gen) : sgn(gen));
            std::vector<double> grid(101);
            for (int k = 0; k <= 100; ++k) grid[k] = 0.01 * k;
            DdOptions opt;
            opt.record_stride = 1;
            const auto traj = dd_integrate(act, 0.6, Dim::infinity(), AtomEnsemble::uniform(space, coords), grid, opt);
            for (std::size_t k = 1; k < traj.risk.size(); ++k) mono = mono && traj.risk[k] <= traj.risk[k - 1] + 1e-12;
        }
        o.check(mono, "reduced-dynamics risk non-increasing over 100 steps in all three spaces");
    }
    {   // Simplex QP against a mesh search on three points.
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            KernelGrid k;
            k.grid = {1.0, 2.0, 3.0};
            k.d = Dim(10);
            double a[3][3];
            for (auto& r : a)
                for (double& x : r) x = normal(gen);
            k.v_vec.resize(3);
            k.u_mat.resize(9);
            for (int i = 0; i < 3; ++i) {
                k.v_vec[i] = normal(gen);
                for (int j = 0; j < 3; ++j) k.u_mat[i * 3 + j] = a[i][0] * a[j][0] + a[i][1] * a[j][1] + a[i][2] * a[j][2];
            }
            double best = 1e300;
            const int m = 1000;
            for (int i = 0; i <= m; ++i)
                for (int j = 0; i + j <= m; ++j)
                    best = std::min(best, qp_risk(k, {i / double(m), j / double(m), (m - i - j) / double(m)}));
            const QpResult res = solve_simplex_qp(k);
            worst = std::max(worst, res.risk > best ? res.risk - best : 0.0);
            worst = std::max(worst, best - res.risk > 1e-4 ? best - res.risk : 0.0);
        }
        o.check(worst <= 1e-4, fmt("QP vs brute force on K=3: worst excess %.2e", worst));
    }
    {   // W1 against the optimal assignment.
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> a(6), b(6);
            for (double& x : a) x = normal(gen);
            for (double& x : b) x = normal(gen);
            std::vector<int> perm = {0, 1, 2, 3, 4, 5};
            double best = 1e300;
            do {
                double cost = 0.0;
                for (int i = 0; i < 6; ++i) cost += std::abs(a[i] - b[perm[i]]);
                best = std::min(best, cost / 6.0);
            } while (std::next_permutation(perm.begin(), perm.end()));
            worst = std::max(worst, std::abs(wasserstein1_1d(a, b) - best));
        }
        o.check(worst < 1e-12, fmt("W1 vs optimal assignment on 6 points: max error %.2e", worst));
    }
    {   // Closed-form smoothing against a plain 128-node Gauss-Hermite rule.
        const QuadratureRule rule = gauss_hermite_normal(128);
        double worst = 0.0, at_a = 0.0, at_b = 0.0;
        for (int i = 0; i <= 20; ++i)
            for (double b : {0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0}) {
                const double a = -5.0 + 0.5 * i;
                double gh = 0.0;
                for (std::size_t k = 0; k < rule.nodes.size(); ++k) gh += rule.weights[k] * sigma_eval(kAct, a + b * rule.nodes[k]);
                const double err = std::abs(gh - g_smoothed(kAct, a, b)) / std::max(1.0, std::abs(gh));
                if (err > worst) {
                    worst = err;
                    at_a = a;
                    at_b = b;
                }
            }
        o.check(worst <= 1e-8, fmt("smoothed activation vs 128-node Gauss-Hermite: max rel error %.2e at a=%.1f, b=%.2f", worst,
                                   at_a, at_b));
    }
    {   // A lone atom at the bisected stationary radius is a fixed point.
        double worst = 0.0;
        for (double delta : {0.1, 0.2, 0.3}) {
            const double r = find_stationary_radius(kAct, delta);
            worst = std::max(worst, fixed_point_residual(kAct, delta, Dim::infinity(), AtomEnsemble::uniform(ReducedSpace::Radial1D, {r})));
        }
        o.check(worst < 1e-8, fmt("fixed-point residual at the stationary radius: %.2e < 1e-8", worst));
    }
    {   // SGD is bit-reproducible across thread counts.
        const DataModel model{0.6, Dim(20), std::nullopt};
        SgdConfig cfg;
        cfg.epsilon = 0.005;
        cfg.steps = 5000;
        cfg.beta = 100.0;
        cfg.checkpoints = {100, 5000};
        cfg.mc_samples = 2000;
        cfg.exact_risk = true;
        const WeightEnsemble init = WeightEnsemble::gaussian(50, 20, 0.8 / std::sqrt(20.0), 9);
        bool same = true;
        cfg.threads = 1;
        const SgdResult ref = sgd_run(model, kAct, cfg, init);
        for (int threads : {2, 4}) {
            cfg.threads = threads;
            const SgdResult other = sgd_run(model, kAct, cfg, init);
            same = same && other.final_weights == ref.final_weights;
            for (std::size_t k = 0; k < ref.trajectory.size(); ++k)
                same = same && other.trajectory[k].risk_exact == ref.trajectory[k].risk_exact &&
                       other.trajectory[k].risk_mc == ref.trajectory[k].risk_mc;
        }
        o.check(same, "SGD bit-identical with 1, 2 and 4 threads");
    }
    const double secs = t.seconds();
    o.check(secs < 120.0, fmt("runtime %.1f s < 120 s", secs));
    return o;
}

Outcome criterion_7() {
    Outcome o;
    const DataModel model{0.8, Dim(40), std::nullopt};
    const RadialKernelTable table(kAct, 0.8, Dim(40), 3.0, 150, 0);
    SgdConfig base;
    base.seed = 42;
    ChaosOptions opt;
    opt.table = &table;
    const ChaosReport rep = chaos_sweep(model, kAct, base, {100, 200, 400, 800}, {1e-5}, 0.5, opt);
    int inversions = 0;
    std::string gaps;
    for (std::size_t k = 0; k < rep.rows.size(); ++k) {
        gaps += fmt("%.4f ", rep.rows[k].max_risk_gap);
        if (k > 0 && rep.rows[k].max_risk_gap > rep.rows[k - 1].max_risk_gap) ++inversions;
    }
    o.check(inversions <= 1, "max risk gap over N = 100..800: " + gaps + "(" + std::to_string(inversions) + " inversions, <= 1)");
    o.check(rep.slope <= -0.3, fmt("log-log slope %.3f <= -0.3", rep.slope));
    return o;
}

Outcome criterion_8() {
    Outcome o;
    const double beta = 50.0, lambda = 0.5, delta = 0.5, t_max = 50.0;
    const std::size_t steps = 50000;
    std::vector<double> grid(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) grid[k] = t_max * static_cast<double>(k) / static_cast<double>(steps);
    const AtomEnsemble start = chi_quantile_atoms(40, 0.8 / std::sqrt(40.0), 2000);
    LangevinOptions opt;
    opt.seed = 11;
    const auto traj = langevin_mf_1d(kAct, delta, beta, lambda, start, grid, opt);
    const auto c = traj.snapshots.back().coords();
    const double res = boltzmann_residual({c.begin(), c.end()}, kAct, delta, beta, lambda);
    o.check(res < 0.05, fmt("Boltzmann residual %.4f < 0.05", res));

    // With the noise switched off the free risk descends monotonically.
    std::vector<double> short_grid(grid.begin(), grid.begin() + 5001);
    opt.record_stride = 10;
    const auto cold = langevin_mf_1d(kAct, delta, std::numeric_limits<double>::infinity(), lambda, start, short_grid, opt);
    bool mono = true;
    for (std::size_t k = 1; k < cold.snapshots.size(); ++k)
        mono = mono && free_risk(kAct, delta, lambda, cold.snapshots[k]) <= free_risk(kAct, delta, lambda, cold.snapshots[k - 1]) + 1e-12;
    o.check(mono, fmt("noiseless free risk non-increasing, %.4f -> %.4f", free_risk(kAct, delta, lambda, cold.snapshots.front()),
                      free_risk(kAct, delta, lambda, cold.snapshots.back())));
    return o;
}

} // namespace

int main(int argc, char** argv) {
    const std::map<std::string, std::function<Outcome()>> criteria = {
        {"1", criterion_1},
        {"2", criterion_2},
        {"3", criterion_3},
        {"4", [] { return criterion_4(false); }},
        {"4full", [] { return criterion_4(true); }},
        {"5", [] { return criterion_5(false); }},
        {"5full", [] { return criterion_5(true); }},
        {"6", criterion_6},
        {"7", criterion_7},
        {"8", criterion_8},
    };
    std::vector<std::string> which;
    for (int i = 1; i < argc; ++i) which.push_back(argv[i]);
    if (which.empty()) which = {"1", "2", "3", "4", "5", "6", "7", "8"};
    bool all = true;
    for (const std::string& name : which) {
        const auto it = criteria.find(name);
        if (it == criteria.end()) {
            std::cerr << "unknown criterion '" << name << "'\n";
            return 2;
        }
        const Timer t;
        Outcome o;
        try {
            o = it->second();
        } catch (const std::exception& e) {
            o.check(false, std::string("threw: ") + e.what());
        }
        all = all && o.pass;
        std::cout << "criterion " << name << ": " << (o.pass ? "PASS" : "FAIL") << fmt(" (%.1f s)", t.seconds()) << o.detail.str()
                  << std::endl;
    }
    return all ? 0 : 1;
}
