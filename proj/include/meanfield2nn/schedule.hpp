#pragma once

#include <cstdint>
#include <string>

namespace mf {

/// Step-size profile xi. Constant(c): xi = c. PowerLaw(delta): xi(t) = t^-delta
/// in continuous time and xi_k = k^-delta for SGD step k >= 1 (0 <= delta < 1).
class Schedule {
public:
    enum class Kind { Constant, PowerLaw };

    static Schedule constant(double c = 1.0);
    static Schedule power_law(double exponent);

    Kind kind() const { return kind_; }
    double value() const { return value_; }

    /// xi_impl(k), k >= 1.
    double step_factor(std::uint64_t k) const;
    /// xi(t).
    double at(double t) const;
    /// Integral of xi over [t0, t1]; finite at t0 = 0 for the power law.
    double integral(double t0, double t1) const;
    /// Inverse of t -> integral(0, t).
    double time_for_integral(double s) const;

    std::string str() const;

private:
    Schedule(Kind kind, double value) : kind_(kind), value_(value) {}
    Kind kind_;
    double value_;
};

/// PDE time t at which integral(0, t) equals the sum of the first k step
/// sizes eps * xi_impl(j), j = 1..k.
double iteration_to_time(const Schedule& schedule, double epsilon, std::uint64_t k);

} // namespace mf
