#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "meanfield2nn/random.hpp"

namespace mf {

enum class ActivationKind { PiecewiseLinear, NonMonotone, ReluAffine };

struct Knot {
    double t;
    double s;
};

/// Scalar activation sigma. The two piecewise kinds are continuous chains of
/// linear segments with constant extension outside the outer knots. The ReLU
/// kind carries no knots; the output weight and offset live in the parameter
/// vector (see sgd.hpp).
class Activation {
public:
    static Activation piecewise_linear(double s1, double s2, double t1, double t2);
    /// The three-knot chain (0,-2.5), (0.5,-4), (1.5,7.5).
    static Activation non_monotone();
    static Activation relu();
    /// Piecewise-linear sigmoid with s1=-2.5, s2=7.5, t1=0.5, t2=1.5.
    static Activation default_sigmoid();

    ActivationKind kind() const { return kind_; }
    bool is_piecewise() const { return kind_ != ActivationKind::ReluAffine; }
    std::span<const Knot> knots() const { return knots_; }

    /// Slope of the segment [knot k, knot k+1]; size knots()-1.
    std::span<const double> segment_slopes() const { return slopes_; }

    // Smoothed-kernel constants of the two-knot sigmoid:
    //   sigma_sl = (s2-s1)/(t2-t1), sigma_itc = s1 - sigma_sl*t1.
    // Zero for the other kinds.
    double sigma_sl() const { return sigma_sl_; }
    double sigma_itc() const { return sigma_itc_; }

    /// Largest absolute segment slope (Lipschitz constant). 1 for ReLU.
    double lipschitz() const;

    std::string name() const;

private:
    Activation(ActivationKind kind, std::vector<Knot> knots);

    ActivationKind kind_;
    std::vector<Knot> knots_;
    std::vector<double> slopes_;
    double sigma_sl_ = 0.0;
    double sigma_itc_ = 0.0;
};

double sigma_eval(const Activation& act, double t);
/// Right derivative at knots; the weak derivative elsewhere.
double sigma_deriv(const Activation& act, double t);

/// E[sigma(a + b G)], G ~ N(0,1), b > 0, closed form in Phi/phi.
/// Throws std::domain_error for b <= 0 or a ReLU activation.
double g_smoothed(const Activation& act, double a, double b);

/// d/da of g_smoothed: E[sigma'(a + b G)].
double g_smoothed_da(const Activation& act, double a, double b);

struct QValue {
    double q;
    double q_prime;
};

/// q(r) = E[sigma(r G)] and its derivative in r, r >= 0.
QValue q_eval(const Activation& act, double r);

inline double std_normal_pdf(double x) {
    return 0.3989422804014327 * std::exp(-0.5 * x * x);
}
double std_normal_cdf(double x);

/// Sentinel-aware ambient dimension.
class Dim {
public:
    constexpr Dim() = default;
    constexpr explicit Dim(int d) : value_(d) {}
    static constexpr Dim infinity() { return Dim(); }

    constexpr bool is_infinite() const { return value_ == 0; }
    constexpr int value() const { return value_; }
    std::string str() const { return is_infinite() ? "inf" : std::to_string(value_); }

    friend constexpr bool operator==(Dim, Dim) = default;

private:
    int value_ = 0;
};

/// Two centered Gaussian classes with covariance tau_{+-}^2 on the relevant
/// coordinates (all of them when isotropic, the first s0 otherwise).
struct DataModel {
    double delta = 0.5;
    Dim d = Dim(40);
    std::optional<int> s0;

    double tau_plus() const { return 1.0 + delta; }
    double tau_minus() const { return 1.0 - delta; }
    bool isotropic() const { return !s0.has_value(); }
    int relevant_dims() const { return s0.value_or(d.value()); }

    /// Throws std::invalid_argument on violated invariants.
    void validate() const;
};

struct LabeledExample {
    double y;
    std::vector<double> x;
};

/// Draws one example. `x` is resized to d; the caller can reuse the buffer.
void sample_example(const DataModel& model, CounterRng& rng, double& y, std::vector<double>& x);
LabeledExample sample_example(const DataModel& model, CounterRng& rng);

} // namespace mf
