#include <doctest.h>

#include <cmath>

#include "meanfield2nn/model.hpp"
#include "meanfield2nn/quadrature.hpp"
#include "oracles.hpp"

using namespace mf;

TEST_CASE("activation values at knots and on segments") {
    const Activation pl = Activation::default_sigmoid();
    CHECK(sigma_eval(pl, 0.0) == doctest::Approx(-2.5));
    CHECK(sigma_eval(pl, 1.0) == doctest::Approx(2.5));
    CHECK(sigma_eval(pl, -3.0) == doctest::Approx(-2.5));
    CHECK(sigma_eval(pl, 9.0) == doctest::Approx(7.5));
    CHECK(pl.sigma_sl() == doctest::Approx(10.0));
    CHECK(pl.sigma_itc() == doctest::Approx(-7.5));
    CHECK(pl.lipschitz() == doctest::Approx(10.0));

    const Activation nm = Activation::non_monotone();
    CHECK(sigma_eval(nm, 0.25) == doctest::Approx(-3.25));
    CHECK(sigma_eval(nm, 0.5) == doctest::Approx(-4.0));
    CHECK(sigma_deriv(nm, 0.25) == doctest::Approx(-3.0));
    CHECK(sigma_deriv(nm, 1.0) == doctest::Approx(11.5));
    CHECK(sigma_deriv(nm, -1.0) == 0.0);

    const Activation relu = Activation::relu();
    CHECK(sigma_eval(relu, -1.0) == 0.0);
    CHECK(sigma_eval(relu, 2.0) == 2.0);
}

TEST_CASE("activation constructor rejects invalid knots") {
    CHECK_THROWS(Activation::piecewise_linear(-2.5, 7.5, 1.5, 0.5));
    CHECK_THROWS(Activation::piecewise_linear(-2.5, 7.5, 0.5, 0.5));
}

TEST_CASE("smoothed activation matches Gauss-Kronrod on a grid") {
    for (const Activation& act : {Activation::default_sigmoid(), Activation::non_monotone()})
        for (double a : {-3.0, -0.7, 0.0, 0.4, 1.0, 2.5})
            for (double b : {0.05, 0.3, 1.0, 2.0, 7.0}) {
                CAPTURE(a);
                CAPTURE(b);
                CHECK(std::abs(g_smoothed(act, a, b) - oracle::smoothed(act, a, b)) < 1e-10);
                const double h = 1e-5;
                const double fd = (g_smoothed(act, a + h, b) - g_smoothed(act, a - h, b)) / (2 * h);
                CHECK(std::abs(g_smoothed_da(act, a, b) - fd) < 1e-6);
            }
}

TEST_CASE("smoothed activation matches a 128-node Gauss-Hermite rule") {
    const Activation act = Activation::default_sigmoid();
    // a + bG = a + (b/sqrt2) G1 + (b/sqrt2) G2, so integrating the smooth
    // g(a + b x / sqrt2, b / sqrt2) against the rule must return g(a, b).
    const QuadratureRule rule = gauss_hermite_normal(128);
    double wsum = 0.0;
    for (double w : rule.weights) wsum += w;
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-13));
    for (double a : {-4.0, 0.0, 1.0, 6.0})
        for (double b : {0.5, 1.0, 3.0}) {
            double gh = 0.0;
            for (std::size_t k = 0; k < rule.nodes.size(); ++k)
                gh += rule.weights[k] * g_smoothed(act, a + b * rule.nodes[k] / std::sqrt(2.0), b / std::sqrt(2.0));
            CAPTURE(a);
            CAPTURE(b);
            CHECK(std::abs(gh - g_smoothed(act, a, b)) < 1e-8);
        }
}

TEST_CASE("smoothed activation limits and errors") {
    const Activation act = Activation::default_sigmoid();
    CHECK(g_smoothed(act, 0.0, 1e-9) == doctest::Approx(-2.5));
    CHECK(g_smoothed(act, 0.0, 1e7) == doctest::Approx(2.5).epsilon(1e-5));
    CHECK_THROWS_AS(g_smoothed(act, 0.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(g_smoothed(Activation::relu(), 0.0, 1.0), std::domain_error);

    const auto mc = oracle::monte_carlo(100000, 17, [&](std::mt19937_64& gen) {
        std::normal_distribution<double> g;
        return oracle::sigma(act, 1.0 + g(gen));
    });
    CHECK(std::abs(g_smoothed(act, 1.0, 1.0) - mc.mean) < 3 * mc.se);
}

TEST_CASE("q and its derivative") {
    const Activation act = Activation::default_sigmoid();
    const QValue at0 = q_eval(act, 0.0);
    CHECK(at0.q == doctest::Approx(-2.5));
    CHECK(at0.q_prime == doctest::Approx(0.0));
    const QValue big = q_eval(act, 1e7);
    CHECK(big.q == doctest::Approx(2.5).epsilon(1e-5));
    CHECK(std::abs(big.q_prime) < 1e-6);

    for (const Activation& a : {Activation::default_sigmoid(), Activation::non_monotone()})
        for (double r : {0.1, 0.5, 1.0, 2.0, 5.0}) {
            const double h = 1e-5;
            const double fd = (q_eval(a, r + h).q - q_eval(a, r - h).q) / (2 * h);
            CHECK(std::abs(q_eval(a, r).q_prime - fd) < 1e-6);
            CHECK(std::abs(q_eval(a, r).q - oracle::q(a, r)) < 1e-10);
        }

    // The default sigmoid's q increases from s1 to (s1+s2)/2.
    double prev = q_eval(act, 0.0).q;
    for (double r = 0.05; r < 20.0; r += 0.05) {
        const double now = q_eval(act, r).q;
        CHECK(now >= prev - 1e-14);
        prev = now;
    }
}

TEST_CASE("data model validation") {
    DataModel m;
    m.delta = 1.0;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m.delta = 0.5;
    m.d = Dim(4);
    m.s0 = 5;
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    m.s0 = 2;
    CHECK_NOTHROW(m.validate());
}

TEST_CASE("sampled examples have the class covariances") {
    const std::size_t n = 100000;
    SUBCASE("coinciding classes") {
        DataModel m{0.0, Dim(3), std::nullopt};
        double s2 = 0.0;
        CounterRng rng(5, kTagData, 0);
        for (std::size_t k = 0; k < n; ++k) {
            const auto ex = sample_example(m, rng);
            s2 += ex.x[0] * ex.x[0];
        }
        CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
    }
    SUBCASE("squared norm of the wide class") {
        DataModel m{0.8, Dim(40), std::nullopt};
        double s = 0.0, s2 = 0.0;
        std::size_t count = 0;
        for (std::size_t k = 0; count < n; ++k) {
            CounterRng rng(9, kTagData, k);
            const auto ex = sample_example(m, rng);
            if (ex.y != 1.0) continue;
            double nn = 0.0;
            for (double v : ex.x) nn += v * v;
            nn /= 40.0;
            s += nn;
            s2 += nn * nn;
            ++count;
        }
        const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
        CHECK(std::abs(mean - 3.24) < 3 * se);
    }
    SUBCASE("anisotropic coordinates") {
        DataModel m{0.5, Dim(4), 2};
        std::vector<double> s2(4, 0.0);
        std::size_t count = 0;
        for (std::size_t k = 0; count < n; ++k) {
            CounterRng rng(11, kTagData, k);
            const auto ex = sample_example(m, rng);
            if (ex.y != -1.0) continue;
            for (int c = 0; c < 4; ++c) s2[c] += ex.x[c] * ex.x[c];
            ++count;
        }
        CHECK(s2[0] / n == doctest::Approx(0.25).epsilon(0.03));
        CHECK(s2[1] / n == doctest::Approx(0.25).epsilon(0.03));
        CHECK(s2[2] / n == doctest::Approx(1.0).epsilon(0.03));
        CHECK(s2[3] / n == doctest::Approx(1.0).epsilon(0.03));
    }
    SUBCASE("labels are balanced") {
        DataModel m{0.3, Dim(2), std::nullopt};
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            CounterRng rng(3, kTagData, k);
            s += sample_example(m, rng).y;
        }
        CHECK(std::abs(s / n) < 3.0 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("counter streams are pure functions of their key") {
    CounterRng a(1, 2, 3), b(1, 2, 3), c(1, 2, 4);
    for (int k = 0; k < 10; ++k) CHECK(a.next_u64() == b.next_u64());
    CHECK(CounterRng(1, 2, 3).next_u64() != c.next_u64());
}
