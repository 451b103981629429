#include "meanfield2nn/kernels.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "meanfield2nn/parallel.hpp"
#include "meanfield2nn/quadrature.hpp"

namespace mf {

// ---------------------------------------------------------------------------
// AtomEnsemble
// ---------------------------------------------------------------------------

int space_dim(ReducedSpace space) {
    switch (space) {
    case ReducedSpace::Radial1D: return 1;
    case ReducedSpace::Aniso2D: return 2;
    case ReducedSpace::Relu4D: return 4;
    }
    return 0;
}

bool is_radial_coordinate(ReducedSpace space, int c) { return space != ReducedSpace::Relu4D || c >= 2; }

const char* space_name(ReducedSpace space) {
    switch (space) {
    case ReducedSpace::Radial1D: return "radial1d";
    case ReducedSpace::Aniso2D: return "aniso2d";
    case ReducedSpace::Relu4D: return "relu4d";
    }
    return "?";
}

AtomEnsemble::AtomEnsemble(ReducedSpace space, std::vector<double> coords, std::vector<double> weights)
    : space_(space), coords_(std::move(coords)), weights_(std::move(weights)) {
    if (coords_.size() != weights_.size() * static_cast<std::size_t>(dim()))
        throw std::invalid_argument("atom coordinate table does not match the number of weights");
}

AtomEnsemble AtomEnsemble::uniform(ReducedSpace space, std::vector<double> coords) {
    const std::size_t j = coords.size() / static_cast<std::size_t>(space_dim(space));
    if (j == 0) throw std::invalid_argument("atom ensemble needs at least one atom");
    std::vector<double> w(j, 1.0 / static_cast<double>(j));
    return AtomEnsemble(space, std::move(coords), std::move(w));
}

std::vector<double> AtomEnsemble::coordinate(int c) const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = point(i)[static_cast<std::size_t>(c)];
    return out;
}

double AtomEnsemble::mean(int c) const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += weights_[i] * point(i)[static_cast<std::size_t>(c)];
    return s;
}

void AtomEnsemble::validate() const {
    if (weights_.empty()) throw std::invalid_argument("atom ensemble needs at least one atom");
    double total = 0.0;
    for (double w : weights_) {
        if (!(w >= 0.0)) throw std::invalid_argument("atom weights must be non-negative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("atom weights must sum to 1");
    for (std::size_t i = 0; i < size(); ++i)
        for (int c = 0; c < dim(); ++c) {
            const double x = point(i)[static_cast<std::size_t>(c)];
            if (!std::isfinite(x)) throw std::invalid_argument("atom coordinates must be finite");
            if (is_radial_coordinate(space_, c) && x < 0.0)
                throw std::invalid_argument("radial atom coordinates must be non-negative");
        }
}

// ---------------------------------------------------------------------------
// Potentials
// ---------------------------------------------------------------------------

double v_eval(const Activation& act, double delta, double r) {
    return -0.5 * q_eval(act, (1.0 + delta) * r).q + 0.5 * q_eval(act, (1.0 - delta) * r).q;
}

double v_prime(const Activation& act, double delta, double r) {
    const double tp = 1.0 + delta, tm = 1.0 - delta;
    return -0.5 * tp * q_eval(act, tp * r).q_prime + 0.5 * tm * q_eval(act, tm * r).q_prime;
}

namespace {

constexpr double kXMax = 8.5;      // phi(8.5) ~ 1e-16
constexpr double kMaxPiece = 1.5;  // longest Gauss-Legendre panel
constexpr int kPanelNodes = 10;

// Breakpoint list with fixed capacity; activations have at most 3 knots.
struct Breaks {
    std::array<double, 16> x{};
    int n = 0;
    void add(double v) {
        if (v > -kXMax && v < kXMax && n < static_cast<int>(x.size())) x[static_cast<std::size_t>(n++)] = v;
    }
};

// Integrates fn(x) phi(x) over [lo, hi] split at the interior breakpoints.
template <class Fn>
double integrate_normal(double lo, double hi, const Breaks& interior, Fn&& fn) {
    std::array<double, 18> pts{};
    int n = 0;
    pts[static_cast<std::size_t>(n++)] = lo;
    for (int k = 0; k < interior.n; ++k) {
        const double v = interior.x[static_cast<std::size_t>(k)];
        if (v > lo && v < hi) pts[static_cast<std::size_t>(n++)] = v;
    }
    pts[static_cast<std::size_t>(n++)] = hi;
    std::sort(pts.begin(), pts.begin() + n);
    const QuadratureRule& rule = legendre_unit(kPanelNodes);
    double total = 0.0;
    for (int k = 0; k + 1 < n; ++k) {
        const double a = pts[static_cast<std::size_t>(k)], b = pts[static_cast<std::size_t>(k + 1)];
        if (b - a <= 0.0) continue;
        const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / kMaxPiece)));
        const double width = (b - a) / panels;
        for (int p = 0; p < panels; ++p) {
            const double mid = a + (p + 0.5) * width, half = 0.5 * width;
            for (int j = 0; j < kPanelNodes; ++j) {
                const double x = mid + half * rule.nodes[static_cast<std::size_t>(j)];
                total += half * rule.weights[static_cast<std::size_t>(j)] * fn(x) * std_normal_pdf(x);
            }
        }
    }
    return total;
}

// sigma smoothed by b*G at location a; sigma itself when b vanishes.
double smoothed_or_sharp(const Activation& act, double a, double b) {
    return b > 1e-13 ? g_smoothed(act, a, b) : sigma_eval(act, a);
}

void add_knot_breaks(const Activation& act, double scale, Breaks& br) {
    if (scale == 0.0) return;
    for (const Knot& k : act.knots()) br.add(k.t / scale);
}

// Slope immediately left of t.
double sigma_left_deriv(const Activation& act, double t) {
    const auto knots = act.knots();
    if (t <= knots.front().t || t > knots.back().t) return 0.0;
    std::size_t k = 1;
    while (t > knots[k].t) ++k;
    return act.segment_slopes()[k - 1];
}

} // namespace

double f_integral(const Activation& act, double r1, double r2, double theta) {
    const double sigma0 = sigma_eval(act, 0.0);
    if (r1 == 0.0) return sigma0 * q_eval(act, r2).q;
    if (r2 == 0.0) return sigma0 * q_eval(act, r1).q;
    const double c = std::cos(theta), b = r2 * std::abs(std::sin(theta));
    const double slope = r2 * c;
    Breaks br;
    add_knot_breaks(act, r1, br);
    add_knot_breaks(act, slope, br);
    return integrate_normal(-kXMax, kXMax, br, [&](double x) {
        return sigma_eval(act, r1 * x) * smoothed_or_sharp(act, slope * x, b);
    });
}

double f_integral_d1(const Activation& act, double r1, double r2, double theta) {
    const double c = std::cos(theta), b = r2 * std::abs(std::sin(theta));
    const double slope = r2 * c;
    auto partner = [&](double x) { return r2 == 0.0 ? sigma_eval(act, 0.0) : smoothed_or_sharp(act, slope * x, b); };
    Breaks br;
    if (r2 > 0.0) add_knot_breaks(act, slope, br);
    auto moment = [&](double lo, double hi) {
        lo = std::max(lo, -kXMax);
        hi = std::min(hi, kXMax);
        if (hi <= lo) return 0.0;
        return integrate_normal(lo, hi, br, [&](double x) { return x * partner(x); });
    };
    if (r1 == 0.0) {
        const double right = sigma_deriv(act, 0.0), left = sigma_left_deriv(act, 0.0);
        double total = 0.0;
        if (right != 0.0) total += right * moment(0.0, kXMax);
        if (left != 0.0) total += left * moment(-kXMax, 0.0);
        return total;
    }
    const auto knots = act.knots();
    const auto slopes = act.segment_slopes();
    double total = 0.0;
    for (std::size_t k = 0; k < slopes.size(); ++k) {
        if (slopes[k] == 0.0) continue;
        total += slopes[k] * moment(knots[k].t / r1, knots[k + 1].t / r1);
    }
    return total;
}

double u_angle(const Activation& act, double delta, double r1, double r2, double alpha) {
    if (r1 < 0.0 || r2 < 0.0) throw std::domain_error("u_angle requires non-negative radii");
    // Canonical argument order makes the numerical value exactly symmetric.
    if (r1 > r2) std::swap(r1, r2);
    const double tp = 1.0 + delta, tm = 1.0 - delta;
    return 0.5 * f_integral(act, tp * r1, tp * r2, alpha) + 0.5 * f_integral(act, tm * r1, tm * r2, alpha);
}

namespace {

constexpr int kAngleNodes = 200;

// Gauss-Legendre nodes on [0, pi] with the normalized sin^{d-2} density folded
// into the weights; nodes with negligible weight are dropped.
struct AngleRule {
    std::vector<double> theta;
    std::vector<double> weight;
};

const AngleRule& angle_rule(int d) {
    static std::mutex mutex;
    static std::map<int, AngleRule> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(d);
    if (it != cache.end()) return it->second;
    if (d < 2) throw std::domain_error("finite-d kernels need d >= 2");
    const QuadratureRule gl = gauss_legendre(kAngleNodes, 0.0, std::numbers::pi);
    const double log_norm = std::lgamma(0.5 * d) - std::lgamma(0.5) - std::lgamma(0.5 * (d - 1));
    std::vector<double> w(gl.nodes.size());
    double wmax = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] = gl.weights[k] * std::exp(log_norm + (d - 2) * std::log(std::sin(gl.nodes[k])));
        wmax = std::max(wmax, w[k]);
    }
    AngleRule rule;
    double total = 0.0;
    for (double x : w) total += x;
    for (std::size_t k = 0; k < w.size(); ++k) {
        if (w[k] < 1e-17 * wmax) continue;
        rule.theta.push_back(gl.nodes[k]);
        rule.weight.push_back(w[k] / total);
    }
    return cache.emplace(d, std::move(rule)).first->second;
}

} // namespace

double u_d_eval(const Activation& act, double delta, Dim d, double r1, double r2) {
    if (r1 < 0.0 || r2 < 0.0) throw std::domain_error("u_d requires non-negative radii");
    const double tp = 1.0 + delta, tm = 1.0 - delta;
    if (d.is_infinite())
        return 0.5 * (q_eval(act, tp * r1).q * q_eval(act, tp * r2).q + q_eval(act, tm * r1).q * q_eval(act, tm * r2).q);
    if (r1 > r2) std::swap(r1, r2);
    const AngleRule& rule = angle_rule(d.value());
    double total = 0.0;
    for (std::size_t k = 0; k < rule.theta.size(); ++k)
        total += rule.weight[k] * (0.5 * f_integral(act, tp * r1, tp * r2, rule.theta[k]) +
                                   0.5 * f_integral(act, tm * r1, tm * r2, rule.theta[k]));
    return total;
}

double u_d_d1(const Activation& act, double delta, Dim d, double r1, double r2) {
    if (r1 < 0.0 || r2 < 0.0) throw std::domain_error("u_d requires non-negative radii");
    const double tp = 1.0 + delta, tm = 1.0 - delta;
    if (d.is_infinite())
        return 0.5 * (tp * q_eval(act, tp * r1).q_prime * q_eval(act, tp * r2).q +
                      tm * q_eval(act, tm * r1).q_prime * q_eval(act, tm * r2).q);
    const AngleRule& rule = angle_rule(d.value());
    double total = 0.0;
    for (std::size_t k = 0; k < rule.theta.size(); ++k)
        total += rule.weight[k] * (0.5 * tp * f_integral_d1(act, tp * r1, tp * r2, rule.theta[k]) +
                                   0.5 * tm * f_integral_d1(act, tm * r1, tm * r2, rule.theta[k]));
    return total;
}

// ---------------------------------------------------------------------------
// psi and reduced risk
// ---------------------------------------------------------------------------

double relu_q(double tau, double r1, double r2, double b) {
    const double s = std::sqrt(tau * tau * r1 * r1 + r2 * r2);
    if (s == 0.0) return std::max(b, 0.0);
    return b * std_normal_cdf(b / s) + s * std_normal_pdf(b / s);
}

namespace {

// h(point) and its gradient for one class scale tau.
double unit_response(const Activation& act, double tau, ReducedSpace space, std::span<const double> p,
                     double* grad) {
    switch (space) {
    case ReducedSpace::Radial1D: {
        const QValue qv = q_eval(act, tau * p[0]);
        if (grad) grad[0] = tau * qv.q_prime;
        return qv.q;
    }
    case ReducedSpace::Aniso2D: {
        const double rr = std::sqrt(tau * tau * p[0] * p[0] + p[1] * p[1]);
        const QValue qv = q_eval(act, rr);
        if (grad) {
            grad[0] = rr > 0.0 ? qv.q_prime * tau * tau * p[0] / rr : 0.0;
            grad[1] = rr > 0.0 ? qv.q_prime * p[1] / rr : 0.0;
        }
        return qv.q;
    }
    case ReducedSpace::Relu4D: {
        const double a = p[0], b = p[1], r1 = p[2], r2 = p[3];
        const double s = std::sqrt(tau * tau * r1 * r1 + r2 * r2);
        const double q = relu_q(tau, r1, r2, b);
        if (grad) {
            grad[0] = q;
            if (s > 0.0) {
                const double pdf = std_normal_pdf(b / s);
                grad[1] = a * std_normal_cdf(b / s);
                grad[2] = a * pdf * tau * tau * r1 / s;
                grad[3] = a * pdf * r2 / s;
            } else {
                grad[1] = b > 0.0 ? a : 0.0;
                grad[2] = grad[3] = 0.0;
            }
        }
        return a * q;
    }
    }
    return 0.0;
}

void check_point(ReducedSpace space, std::span<const double> point) {
    if (point.size() != static_cast<std::size_t>(space_dim(space)))
        throw std::invalid_argument("point dimension does not match the reduced space");
    for (int c = 0; c < space_dim(space); ++c)
        if (is_radial_coordinate(space, c) && point[static_cast<std::size_t>(c)] < 0.0)
            throw std::domain_error("negative radial coordinate");
}

void require_infinite(Dim d, ReducedSpace space) {
    if (!d.is_infinite() && space != ReducedSpace::Radial1D)
        throw std::domain_error("finite d is only supported in the radial space");
}

} // namespace

OrderParams lambda_pm(const Activation& act, double delta, const AtomEnsemble& atoms) {
    double mp = 0.0, mm = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        mp += atoms.weight(i) * unit_response(act, 1.0 + delta, atoms.space(), atoms.point(i), nullptr);
        mm += atoms.weight(i) * unit_response(act, 1.0 - delta, atoms.space(), atoms.point(i), nullptr);
    }
    return {0.5 * (mp - 1.0), 0.5 * (mm + 1.0)};
}

double psi_value_infinite(const Activation& act, double delta, ReducedSpace space, std::span<const double> point,
                          const OrderParams& lam) {
    check_point(space, point);
    return lam.lambda_plus * unit_response(act, 1.0 + delta, space, point, nullptr) +
           lam.lambda_minus * unit_response(act, 1.0 - delta, space, point, nullptr);
}

void psi_grad_infinite(const Activation& act, double delta, ReducedSpace space, std::span<const double> point,
                       const OrderParams& lam, std::span<double> out) {
    check_point(space, point);
    std::array<double, 4> gp{}, gm{};
    unit_response(act, 1.0 + delta, space, point, gp.data());
    unit_response(act, 1.0 - delta, space, point, gm.data());
    for (int c = 0; c < space_dim(space); ++c)
        out[static_cast<std::size_t>(c)] = lam.lambda_plus * gp[static_cast<std::size_t>(c)] +
                                           lam.lambda_minus * gm[static_cast<std::size_t>(c)];
}

double psi_value(const Activation& act, double delta, Dim d, std::span<const double> point, const AtomEnsemble& atoms) {
    require_infinite(d, atoms.space());
    if (d.is_infinite()) return psi_value_infinite(act, delta, atoms.space(), point, lambda_pm(act, delta, atoms));
    check_point(atoms.space(), point);
    double value = v_eval(act, delta, point[0]);
    for (std::size_t j = 0; j < atoms.size(); ++j)
        value += atoms.weight(j) * u_d_eval(act, delta, d, point[0], atoms.point(j)[0]);
    return value;
}

std::vector<double> psi_grad(const Activation& act, double delta, Dim d, std::span<const double> point,
                             const AtomEnsemble& atoms) {
    require_infinite(d, atoms.space());
    std::vector<double> g(static_cast<std::size_t>(atoms.dim()));
    if (d.is_infinite()) {
        psi_grad_infinite(act, delta, atoms.space(), point, lambda_pm(act, delta, atoms), g);
        return g;
    }
    check_point(atoms.space(), point);
    g[0] = v_prime(act, delta, point[0]);
    for (std::size_t j = 0; j < atoms.size(); ++j)
        g[0] += atoms.weight(j) * u_d_d1(act, delta, d, point[0], atoms.point(j)[0]);
    return g;
}

double reduced_risk(const Activation& act, double delta, Dim d, const AtomEnsemble& atoms) {
    require_infinite(d, atoms.space());
    if (d.is_infinite()) {
        const OrderParams lam = lambda_pm(act, delta, atoms);
        return 2.0 * lam.lambda_plus * lam.lambda_plus + 2.0 * lam.lambda_minus * lam.lambda_minus;
    }
    double risk = 1.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const double ri = atoms.point(i)[0];
        risk += 2.0 * atoms.weight(i) * v_eval(act, delta, ri);
        risk += atoms.weight(i) * atoms.weight(i) * u_d_eval(act, delta, d, ri, ri);
        for (std::size_t j = i + 1; j < atoms.size(); ++j)
            risk += 2.0 * atoms.weight(i) * atoms.weight(j) * u_d_eval(act, delta, d, ri, atoms.point(j)[0]);
    }
    return risk;
}

std::vector<double> reduced_risk_gradient(const Activation& act, double delta, Dim d, const AtomEnsemble& atoms) {
    require_infinite(d, atoms.space());
    const int dim = atoms.dim();
    std::vector<double> grad(atoms.size() * static_cast<std::size_t>(dim), 0.0);
    if (d.is_infinite()) {
        // R = (1 - m+)^2/2 + (1 + m-)^2/2 with m+- = sum_i w_i h+-(x_i).
        double mp = 0.0, mm = 0.0;
        std::vector<double> gp(grad.size()), gm(grad.size());
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            mp += atoms.weight(i) * unit_response(act, 1.0 + delta, atoms.space(), atoms.point(i), &gp[i * dim]);
            mm += atoms.weight(i) * unit_response(act, 1.0 - delta, atoms.space(), atoms.point(i), &gm[i * dim]);
        }
        for (std::size_t i = 0; i < atoms.size(); ++i)
            for (int c = 0; c < dim; ++c) {
                const std::size_t k = i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c);
                grad[k] = atoms.weight(i) * (-(1.0 - mp) * gp[k] + (1.0 + mm) * gm[k]);
            }
        return grad;
    }
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const double ri = atoms.point(i)[0];
        double g = 2.0 * v_prime(act, delta, ri);
        for (std::size_t j = 0; j < atoms.size(); ++j)
            g += 2.0 * atoms.weight(j) * u_d_d1(act, delta, d, ri, atoms.point(j)[0]);
        grad[i] = atoms.weight(i) * g;
    }
    return grad;
}

// ---------------------------------------------------------------------------
// RadialKernelTable
// ---------------------------------------------------------------------------

RadialKernelTable::RadialKernelTable(const Activation& act, double delta, Dim d, double r_max, int cells, int threads)
    : d_(d), delta_(delta), r_max_(r_max), cells_(cells), h_(r_max / cells) {
    if (cells < 1 || !(r_max > 0.0)) throw std::invalid_argument("kernel table needs a positive range and cell count");
    const std::size_t n = static_cast<std::size_t>(cells) + 1;
    v_.resize(n);
    vp_.resize(n);
    u_.assign(n * n, 0.0);
    ud1_.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        v_[i] = v_eval(act, delta, static_cast<double>(i) * h_);
        vp_[i] = mf::v_prime(act, delta, static_cast<double>(i) * h_);
    }
    const int workers = threads > 0 ? threads : default_threads();
    parallel_for(n, workers, [&](std::size_t i) {
        const double ri = static_cast<double>(i) * h_;
        for (std::size_t j = 0; j < n; ++j) {
            const double rj = static_cast<double>(j) * h_;
            if (j >= i) u_[i * n + j] = u_d_eval(act, delta, d, ri, rj);
            ud1_[i * n + j] = u_d_d1(act, delta, d, ri, rj);
        }
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) u_[i * n + j] = u_[j * n + i];
}

double RadialKernelTable::interp1(const std::vector<double>& table, double r) const {
    if (r < 0.0 || r > r_max_) throw std::out_of_range("radius outside the kernel table");
    const double s = r / h_;
    const auto k = std::min(static_cast<std::size_t>(s), static_cast<std::size_t>(cells_ - 1));
    const double f = s - static_cast<double>(k);
    return (1.0 - f) * table[k] + f * table[k + 1];
}

double RadialKernelTable::interp2(const std::vector<double>& table, double r1, double r2) const {
    if (r1 < 0.0 || r1 > r_max_ || r2 < 0.0 || r2 > r_max_) throw std::out_of_range("radius outside the kernel table");
    const std::size_t n = static_cast<std::size_t>(cells_) + 1;
    const double s1 = r1 / h_, s2 = r2 / h_;
    const auto i = std::min(static_cast<std::size_t>(s1), static_cast<std::size_t>(cells_ - 1));
    const auto j = std::min(static_cast<std::size_t>(s2), static_cast<std::size_t>(cells_ - 1));
    const double f1 = s1 - static_cast<double>(i), f2 = s2 - static_cast<double>(j);
    const double* row0 = &table[i * n + j];
    const double* row1 = row0 + n;
    return (1.0 - f1) * ((1.0 - f2) * row0[0] + f2 * row0[1]) + f1 * ((1.0 - f2) * row1[0] + f2 * row1[1]);
}

double RadialKernelTable::v(double r) const { return interp1(v_, r); }
double RadialKernelTable::v_prime(double r) const { return interp1(vp_, r); }
double RadialKernelTable::u(double r1, double r2) const { return interp2(u_, r1, r2); }
double RadialKernelTable::u_d1(double r1, double r2) const { return interp2(ud1_, r1, r2); }

// ---------------------------------------------------------------------------
// KernelGrid
// ---------------------------------------------------------------------------

double KernelGrid::max_asymmetry() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
        for (std::size_t j = 0; j < i; ++j) worst = std::max(worst, std::abs(u(i, j) - u(j, i)));
    return worst;
}

double KernelGrid::min_eigenvalue() const {
    const auto k = static_cast<Eigen::Index>(size());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(u_mat.data(), k, k);
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

std::vector<double> KernelGrid::singular_values() const {
    const auto k = static_cast<Eigen::Index>(size());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(u_mat.data(), k, k);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const Eigen::VectorXd s = svd.singularValues();
    return {s.data(), s.data() + s.size()};
}

void KernelGrid::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "d,delta,i,j,r_i,r_j,v_i,u_ij\n";
    char buf[256];
    for (std::size_t i = 0; i < size(); ++i)
        for (std::size_t j = 0; j < size(); ++j) {
            std::snprintf(buf, sizeof buf, "%s,%.17g,%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", d.str().c_str(), delta, i, j,
                          grid[i], grid[j], v_vec[i], u(i, j));
            out << buf;
        }
}

KernelGrid KernelGrid::read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    if (line != "d,delta,i,j,r_i,r_j,v_i,u_ij") throw std::runtime_error("unexpected kernel grid header in " + path);
    struct Row {
        std::size_t i, j;
        double ri, v, u;
    };
    std::vector<Row> rows;
    KernelGrid kg;
    std::size_t k = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell[8];
        for (auto& c : cell) std::getline(ss, c, ',');
        kg.d = cell[0] == "inf" ? Dim::infinity() : Dim(std::stoi(cell[0]));
        kg.delta = std::stod(cell[1]);
        Row r{std::stoul(cell[2]), std::stoul(cell[3]), std::stod(cell[4]), std::stod(cell[6]), std::stod(cell[7])};
        k = std::max(k, r.i + 1);
        rows.push_back(r);
    }
    if (rows.size() != k * k) throw std::runtime_error("kernel grid CSV is not square");
    kg.grid.assign(k, 0.0);
    kg.v_vec.assign(k, 0.0);
    kg.u_mat.assign(k * k, 0.0);
    for (const Row& r : rows) {
        kg.grid[r.i] = r.ri;
        kg.v_vec[r.i] = r.v;
        kg.u_mat[r.i * k + r.j] = r.u;
    }
    return kg;
}

} // namespace mf
