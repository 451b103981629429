#include <doctest.h>

#include <cmath>
#include <random>

#include "meanfield2nn/dd.hpp"
#include "oracles.hpp"

using namespace mf;

namespace {

const Activation kAct = Activation::default_sigmoid();

std::vector<double> uniform_grid(double t_max, std::size_t steps) {
    std::vector<double> g(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) g[k] = t_max * static_cast<double>(k) / static_cast<double>(steps);
    return g;
}

AtomEnsemble random_atoms(ReducedSpace space, std::size_t j, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> r(0.2, 2.5), s(-1.0, 1.0);
    std::vector<double> coords;
    for (std::size_t i = 0; i < j; ++i)
        for (int c = 0; c < space_dim(space); ++c) coords.push_back(is_radial_coordinate(space, c) ? r(gen) : s(gen));
    return AtomEnsemble::uniform(space, coords);
}

double max_coord_gap(const AtomEnsemble& a, const AtomEnsemble& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.coords().size(); ++k) worst = std::max(worst, std::abs(a.coords()[k] - b.coords()[k]));
    return worst;
}

} // namespace

TEST_CASE("time grids") {
    const auto g = log_time_grid(1e-3, 10.0, 5);
    REQUIRE(g.size() == 6);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == doctest::Approx(1e-3));
    CHECK(g[3] == doctest::Approx(0.1));
    CHECK(g.back() == 10.0);
    CHECK_THROWS_AS(log_time_grid(0.0, 1.0, 5), std::invalid_argument);
    CHECK_THROWS_AS(log_time_grid(1.0, 0.5, 5), std::invalid_argument);

    DdOptions opt;
    opt.record_times = {0.25, 0.5};
    const auto traj = dd_integrate(kAct, 0.5, Dim::infinity(), AtomEnsemble::uniform(ReducedSpace::Radial1D, {1.0}),
                                   uniform_grid(1.0, 10), opt);
    CHECK(traj.times == std::vector<double>{0.0, 0.25, 0.5, 1.0});
    CHECK(traj.index_near(0.3) == 1);
    CHECK_THROWS_AS(dd_integrate(kAct, 0.5, Dim::infinity(), AtomEnsemble::uniform(ReducedSpace::Radial1D, {1.0}),
                                 {0.1, 0.2}),
                    std::invalid_argument);
}

TEST_CASE("fixed points stay put") {
    SUBCASE("zero-risk measure") {
        const AtomEnsemble star = oracle::zero_risk_measure(kAct, 0.8);
        const auto traj = dd_integrate(kAct, 0.8, Dim::infinity(), star, log_time_grid(1e-3, 10.0, 200));
        CHECK(max_coord_gap(traj.snapshots.back(), star) < 1e-8);
    }
    SUBCASE("lone atom at the stationary radius") {
        const double r_star = oracle::stationary_radius(kAct, 0.2);
        const auto atom = AtomEnsemble::uniform(ReducedSpace::Radial1D, {r_star});
        DdOptions opt;
        opt.record_stride = 1;
        const auto traj = dd_integrate(kAct, 0.2, Dim::infinity(), atom, uniform_grid(10.0, 1000), opt);
        for (const auto& snap : traj.snapshots) CHECK(std::abs(snap.point(0)[0] - r_star) < 1e-8);
    }
}

TEST_CASE("the risk decreases along the reduced dynamics") {
    struct Case {
        ReducedSpace space;
        Dim d;
        Activation act;
        double t_max;
    };
    for (const Case& c : {Case{ReducedSpace::Radial1D, Dim::infinity(), kAct, 1.0},
                          Case{ReducedSpace::Radial1D, Dim(40), kAct, 1.0},
                          Case{ReducedSpace::Radial1D, Dim::infinity(), Activation::non_monotone(), 1.0},
                          Case{ReducedSpace::Aniso2D, Dim::infinity(), kAct, 1.0},
                          Case{ReducedSpace::Relu4D, Dim::infinity(), Activation::relu(), 1.0}}) {
        CAPTURE(space_name(c.space));
        CAPTURE(c.d.str());
        DdOptions opt;
        opt.record_stride = 1;
        const auto traj =
            dd_integrate(c.act, 0.6, c.d, random_atoms(c.space, 12, 3), uniform_grid(c.t_max, 100), opt);
        REQUIRE(traj.risk.size() == 101);
        for (std::size_t k = 1; k < traj.risk.size(); ++k) CHECK(traj.risk[k] <= traj.risk[k - 1] + 1e-12);
        CHECK(traj.risk.back() < traj.risk.front());
        for (const auto& snap : traj.snapshots) {
            CHECK(snap.size() == 12);
            CHECK_NOTHROW(snap.validate());
        }
    }
}

TEST_CASE("the Euler step is the risk gradient divided by the weight") {
    for (ReducedSpace space : {ReducedSpace::Radial1D, ReducedSpace::Aniso2D}) {
        AtomEnsemble atoms = random_atoms(space, 5, 9);
        atoms = AtomEnsemble(space, std::vector<double>(atoms.coords().begin(), atoms.coords().end()),
                             {0.1, 0.3, 0.2, 0.25, 0.15});
        const double xi_dt = 0.01;
        const auto disp = dd_step_displacement(kAct, 0.4, Dim::infinity(), atoms, xi_dt);
        const auto grad = reduced_risk_gradient(kAct, 0.4, Dim::infinity(), atoms);
        const auto dim = static_cast<std::size_t>(atoms.dim());
        for (std::size_t k = 0; k < disp.size(); ++k)
            CHECK(disp[k] == doctest::Approx(-xi_dt * grad[k] / atoms.weight(k / dim)).epsilon(1e-12));
    }
}

TEST_CASE("explicit Euler converges at first order") {
    const AtomEnsemble atoms = random_atoms(ReducedSpace::Radial1D, 6, 5);
    auto endpoint = [&](std::size_t steps) {
        return dd_integrate(kAct, 0.6, Dim::infinity(), atoms, uniform_grid(1.0, steps)).snapshots.back();
    };
    const auto fine = endpoint(6400);
    const double e1 = max_coord_gap(endpoint(100), fine);
    const double e2 = max_coord_gap(endpoint(200), fine);
    const double e3 = max_coord_gap(endpoint(400), fine);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.15));
    CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("the time-varying schedule enters through its integral") {
    const AtomEnsemble atoms = random_atoms(ReducedSpace::Radial1D, 4, 8);
    DdOptions opt;
    opt.schedule = Schedule::power_law(0.25);
    const auto grid = log_time_grid(1e-4, 1.0, 50);
    const auto traj = dd_integrate(kAct, 0.5, Dim::infinity(), atoms, grid, opt);
    // Replay by hand with the step integral of t^{-1/4}.
    AtomEnsemble x = atoms;
    for (std::size_t k = 1; k < grid.size(); ++k) {
        const double w = (4.0 / 3.0) * (std::pow(grid[k], 0.75) - std::pow(grid[k - 1], 0.75));
        const auto disp = dd_step_displacement(kAct, 0.5, Dim::infinity(), x, w);
        for (std::size_t c = 0; c < disp.size(); ++c) x.coords()[c] = std::max(x.coords()[c] + disp[c], 0.0);
    }
    CHECK(max_coord_gap(traj.snapshots.back(), x) < 1e-12);
}

TEST_CASE("finite-d dynamics with a kernel table follow the quadrature route") {
    const AtomEnsemble atoms = random_atoms(ReducedSpace::Radial1D, 6, 2);
    const RadialKernelTable table(kAct, 0.6, Dim(40), 4.0, 100, 1);
    DdOptions opt;
    opt.table = &table;
    const auto with_table = dd_integrate(kAct, 0.6, Dim(40), atoms, uniform_grid(0.5, 50), opt);
    const auto direct = dd_integrate(kAct, 0.6, Dim(40), atoms, uniform_grid(0.5, 50));
    CHECK(max_coord_gap(with_table.snapshots.back(), direct.snapshots.back()) < 5e-3);
    CHECK(std::abs(with_table.risk.back() - direct.risk.back()) < 5e-3);
    const RadialKernelTable other(kAct, 0.5, Dim(40), 6.0, 10, 1);
    opt.table = &other;
    CHECK_THROWS_AS(dd_integrate(kAct, 0.6, Dim(40), atoms, uniform_grid(0.5, 5), opt), std::invalid_argument);
    CHECK_THROWS_AS(dd_integrate(kAct, 0.6, Dim(40), random_atoms(ReducedSpace::Aniso2D, 3, 1), uniform_grid(0.5, 5)),
                    std::domain_error);
}

TEST_CASE("Langevin particles in a quadratic well") {
    // Without interaction the reflected diffusion has stationary law
    // proportional to exp(-beta lambda r^2 / 2), so E r^2 = 1 / (beta lambda).
    const double beta = 10.0, lambda = 1.0;
    std::vector<double> init(2000, 0.5);
    LangevinOptions opt;
    opt.interaction = Interaction::None;
    opt.seed = 3;
    opt.record_times = {5.0, 6.0, 7.0, 8.0, 9.0};
    const auto traj = langevin_mf_1d(kAct, 0.5, beta, lambda, AtomEnsemble::uniform(ReducedSpace::Radial1D, init),
                                     uniform_grid(10.0, 2000), opt);
    double m2 = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        if (traj.times[k] < 5.0) continue;
        for (double r : traj.snapshots[k].coords()) m2 += r * r;
        count += static_cast<int>(traj.snapshots[k].size());
    }
    CHECK(m2 / count == doctest::Approx(1.0 / (beta * lambda)).epsilon(0.1));
}

TEST_CASE("noiseless Langevin equals the penalized reduced dynamics") {
    const AtomEnsemble atoms = random_atoms(ReducedSpace::Radial1D, 20, 4);
    const auto grid = uniform_grid(2.0, 200);
    const auto lang = langevin_mf_1d(kAct, 0.5, std::numeric_limits<double>::infinity(), 0.5, atoms, grid);
    DdOptions opt;
    opt.lambda = 0.5;
    const auto dd = dd_integrate(kAct, 0.5, Dim::infinity(), atoms, grid, opt);
    CHECK(max_coord_gap(lang.snapshots.back(), dd.snapshots.back()) < 1e-6);
    CHECK_THROWS_AS(langevin_mf_1d(kAct, 0.5, 1.0, 0.0, atoms, grid), std::invalid_argument);
}

TEST_CASE("Langevin runs are reproducible across thread counts") {
    const AtomEnsemble atoms = random_atoms(ReducedSpace::Radial1D, 50, 6);
    LangevinOptions opt;
    opt.seed = 9;
    opt.threads = 1;
    const auto a = langevin_mf_1d(kAct, 0.5, 20.0, 0.5, atoms, uniform_grid(1.0, 100), opt);
    opt.threads = 3;
    const auto b = langevin_mf_1d(kAct, 0.5, 20.0, 0.5, atoms, uniform_grid(1.0, 100), opt);
    CHECK(max_coord_gap(a.snapshots.back(), b.snapshots.back()) == 0.0);
}

TEST_CASE("fixed-point residual") {
    CHECK(fixed_point_residual(kAct, 0.8, Dim::infinity(), oracle::zero_risk_measure(kAct, 0.8)) < 1e-8);
    const double r_star = find_stationary_radius(kAct, 0.2);
    CHECK(fixed_point_residual(kAct, 0.2, Dim::infinity(), AtomEnsemble::uniform(ReducedSpace::Radial1D, {r_star})) < 1e-8);
    CHECK(fixed_point_residual(kAct, 0.2, Dim::infinity(), random_atoms(ReducedSpace::Radial1D, 7, 1)) > 1e-3);
    // Splitting the atom into coincident copies changes nothing.
    const auto three = AtomEnsemble(ReducedSpace::Radial1D, {r_star, r_star, r_star}, {0.2, 0.5, 0.3});
    CHECK(fixed_point_residual(kAct, 0.2, Dim::infinity(), three) < 1e-8);
    const double p = 1.3;
    CHECK(psi_grad(kAct, 0.2, Dim::infinity(), std::span(&p, 1), three)[0] ==
          doctest::Approx(psi_grad(kAct, 0.2, Dim::infinity(), std::span(&p, 1),
                                   AtomEnsemble::uniform(ReducedSpace::Radial1D, {r_star}))[0])
              .epsilon(1e-13));
}

TEST_CASE("stationary radius and its stability") {
    const double r_star = find_stationary_radius(kAct, 0.2);
    CHECK(r_star == doctest::Approx(oracle::stationary_radius(kAct, 0.2)).epsilon(1e-7));
    CHECK(std::abs(single_atom_psi_prime(kAct, 0.2, r_star)) < 1e-10);

    const DeltaStability st = delta_stability(kAct, 0.2, r_star);
    CHECK(st.stable);
    // Second difference of psi(r; delta_{r*}) from the quadrature oracle.
    const double lp = 0.5 * (oracle::q(kAct, 1.2 * r_star) - 1.0), lm = 0.5 * (oracle::q(kAct, 0.8 * r_star) + 1.0);
    auto psi = [&](double r) { return lp * oracle::q(kAct, 1.2 * r) + lm * oracle::q(kAct, 0.8 * r); };
    const double h = 1e-3;
    const double second = (psi(r_star + h) - 2.0 * psi(r_star) + psi(r_star - h)) / (h * h);
    CHECK(st.psi_second_deriv == doctest::Approx(second).epsilon(1e-4));

    CHECK_THROWS_AS(delta_stability(kAct, 0.2, 1.01 * r_star), std::invalid_argument);
    CHECK_THROWS_AS(find_stationary_radius(kAct, 0.2, 1.0, 0.5), std::invalid_argument);
}

TEST_CASE("origin instability criterion") {
    CHECK(origin_instability_criterion(kAct, 0.5, 0.25) == 0.0);
    const Activation nm = Activation::non_monotone();
    // sigma' is -3 just right of 0 and 0 just left of it.
    const double kappa = (-3.0 - 0.0) / 0.5;
    const double bracket = 0.25 - 2.25 - 2.5 * (0.25 + 2.25);
    CHECK(origin_instability_criterion(nm, 0.5, 0.25) == doctest::Approx(kappa * bracket));
    CHECK(origin_instability_criterion(nm, 0.5, 0.25) > 0.0);
    CHECK(origin_instability_criterion(nm, 0.0, 0.25) == doctest::Approx(kappa * 2.0 * -2.5));
    CHECK_THROWS_AS(origin_instability_criterion(nm, 0.5, 0.0), std::invalid_argument);
}
