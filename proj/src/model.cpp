#include "meanfield2nn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mf {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;

// E[(a - t + b G)_+] for b > 0.
double hinge_mean(double m, double b) {
    const double z = m / b;
    return m * std_normal_cdf(z) + b * std_normal_pdf(z);
}

// E[G 1{r G in [lo, hi]}] = phi(lo/r) - phi(hi/r), with r = 0 taken as the limit.
double phi_at_ratio(double t, double r) {
    if (r > 0.0) return std_normal_pdf(t / r);
    return t == 0.0 ? std_normal_pdf(0.0) : 0.0;
}

} // namespace

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

Activation::Activation(ActivationKind kind, std::vector<Knot> knots) : kind_(kind), knots_(std::move(knots)) {
    for (std::size_t k = 1; k < knots_.size(); ++k) {
        if (!(knots_[k].t > knots_[k - 1].t)) throw std::invalid_argument("activation knots must be strictly increasing");
        slopes_.push_back((knots_[k].s - knots_[k - 1].s) / (knots_[k].t - knots_[k - 1].t));
    }
    if (kind_ == ActivationKind::PiecewiseLinear) {
        sigma_sl_ = slopes_.front();
        sigma_itc_ = knots_[0].s - sigma_sl_ * knots_[0].t;
    }
}

Activation Activation::piecewise_linear(double s1, double s2, double t1, double t2) {
    if (!(t1 < t2)) throw std::invalid_argument("piecewise-linear activation requires t1 < t2");
    return Activation(ActivationKind::PiecewiseLinear, {{t1, s1}, {t2, s2}});
}

Activation Activation::non_monotone() {
    return Activation(ActivationKind::NonMonotone, {{0.0, -2.5}, {0.5, -4.0}, {1.5, 7.5}});
}

Activation Activation::relu() { return Activation(ActivationKind::ReluAffine, {}); }

Activation Activation::default_sigmoid() { return piecewise_linear(-2.5, 7.5, 0.5, 1.5); }

double Activation::lipschitz() const {
    if (kind_ == ActivationKind::ReluAffine) return 1.0;
    double l = 0.0;
    for (double s : slopes_) l = std::max(l, std::abs(s));
    return l;
}

std::string Activation::name() const {
    switch (kind_) {
    case ActivationKind::PiecewiseLinear: return "piecewise_linear";
    case ActivationKind::NonMonotone: return "non_monotone";
    case ActivationKind::ReluAffine: return "relu";
    }
    return "?";
}

double sigma_eval(const Activation& act, double t) {
    if (act.kind() == ActivationKind::ReluAffine) return t > 0.0 ? t : 0.0;
    const auto knots = act.knots();
    if (t <= knots.front().t) return knots.front().s;
    if (t >= knots.back().t) return knots.back().s;
    std::size_t k = 1;
    while (t > knots[k].t) ++k;
    const Knot& lo = knots[k - 1];
    const Knot& hi = knots[k];
    return (lo.s * (hi.t - t) + hi.s * (t - lo.t)) / (hi.t - lo.t);
}

double sigma_deriv(const Activation& act, double t) {
    if (act.kind() == ActivationKind::ReluAffine) return t >= 0.0 ? 1.0 : 0.0;
    const auto knots = act.knots();
    if (t < knots.front().t || t >= knots.back().t) return 0.0;
    std::size_t k = 1;
    while (t >= knots[k].t) ++k;
    return act.segment_slopes()[k - 1];
}

double g_smoothed(const Activation& act, double a, double b) {
    if (!(b > 0.0)) throw std::domain_error("g_smoothed requires b > 0");
    if (!act.is_piecewise()) throw std::domain_error("g_smoothed is defined for the piecewise activations");
    const auto knots = act.knots();
    if (act.kind() == ActivationKind::PiecewiseLinear) {
        const double s1 = knots[0].s, s2 = knots[1].s, t1 = knots[0].t, t2 = knots[1].t;
        const double sl = act.sigma_sl(), itc = act.sigma_itc();
        const double z1 = (t1 - a) / b, z2 = (t2 - a) / b;
        return s2 + (s1 - itc - sl * a) * std_normal_cdf(z1) + (sl * a + itc - s2) * std_normal_cdf(z2) +
               sl * b * (std_normal_pdf(z1) - std_normal_pdf(z2));
    }
    // Sum of segment contributions: sigma(t) = s_0 + sum_k (slope_k - slope_{k-1}) (t - t_k)_+.
    const auto slopes = act.segment_slopes();
    double value = knots.front().s;
    double prev = 0.0;
    for (std::size_t k = 0; k < knots.size(); ++k) {
        const double next = k < slopes.size() ? slopes[k] : 0.0;
        value += (next - prev) * hinge_mean(a - knots[k].t, b);
        prev = next;
    }
    return value;
}

double g_smoothed_da(const Activation& act, double a, double b) {
    if (!(b > 0.0)) throw std::domain_error("g_smoothed_da requires b > 0");
    const auto knots = act.knots();
    const auto slopes = act.segment_slopes();
    double value = 0.0;
    double prev = 0.0;
    for (std::size_t k = 0; k < knots.size(); ++k) {
        const double next = k < slopes.size() ? slopes[k] : 0.0;
        value += (next - prev) * std_normal_cdf((a - knots[k].t) / b);
        prev = next;
    }
    return value;
}

QValue q_eval(const Activation& act, double r) {
    if (r < 0.0) throw std::domain_error("q_eval requires r >= 0");
    if (act.kind() == ActivationKind::ReluAffine) return {r * std_normal_pdf(0.0), std_normal_pdf(0.0)};
    const auto knots = act.knots();
    const auto slopes = act.segment_slopes();
    QValue out{};
    out.q = r > 0.0 ? g_smoothed(act, 0.0, r) : sigma_eval(act, 0.0);
    for (std::size_t k = 0; k < slopes.size(); ++k)
        out.q_prime += slopes[k] * (phi_at_ratio(knots[k].t, r) - phi_at_ratio(knots[k + 1].t, r));
    return out;
}

void DataModel::validate() const {
    if (!(delta >= 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in [0, 1)");
    if (!d.is_infinite() && d.value() < 1) throw std::invalid_argument("dimension must be positive");
    if (s0) {
        if (*s0 < 1) throw std::invalid_argument("s0 must be positive");
        if (!d.is_infinite() && *s0 > d.value()) throw std::invalid_argument("s0 must not exceed d");
    }
}

void sample_example(const DataModel& model, CounterRng& rng, double& y, std::vector<double>& x) {
    if (model.d.is_infinite()) throw std::domain_error("sample_example needs a finite dimension");
    const int d = model.d.value();
    y = (rng.next_u64() >> 63) ? 1.0 : -1.0;
    const double tau = y > 0 ? model.tau_plus() : model.tau_minus();
    const int relevant = model.relevant_dims();
    x.resize(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        const double g = rng.normal();
        x[static_cast<std::size_t>(j)] = j < relevant ? tau * g : g;
    }
}

LabeledExample sample_example(const DataModel& model, CounterRng& rng) {
    LabeledExample ex{};
    sample_example(model, rng, ex.y, ex.x);
    return ex;
}

} // namespace mf
