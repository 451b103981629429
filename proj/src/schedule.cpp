#include "meanfield2nn/schedule.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mf {

Schedule Schedule::constant(double c) {
    if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("constant schedule needs c > 0");
    return {Kind::Constant, c};
}

Schedule Schedule::power_law(double exponent) {
    if (!(exponent >= 0.0 && exponent < 1.0)) throw std::invalid_argument("power-law exponent must lie in [0, 1)");
    return {Kind::PowerLaw, exponent};
}

double Schedule::step_factor(std::uint64_t k) const {
    if (kind_ == Kind::Constant) return value_;
    return std::pow(static_cast<double>(std::max<std::uint64_t>(k, 1)), -value_);
}

double Schedule::at(double t) const {
    if (kind_ == Kind::Constant) return value_;
    return std::pow(t, -value_);
}

double Schedule::integral(double t0, double t1) const {
    if (kind_ == Kind::Constant) return value_ * (t1 - t0);
    const double e = 1.0 - value_;
    return (std::pow(t1, e) - std::pow(t0, e)) / e;
}

double Schedule::time_for_integral(double s) const {
    if (s <= 0.0) return 0.0;
    if (kind_ == Kind::Constant) return s / value_;
    const double e = 1.0 - value_;
    return std::pow(e * s, 1.0 / e);
}

std::string Schedule::str() const {
    std::ostringstream out;
    if (kind_ == Kind::Constant)
        out << "constant(" << value_ << ")";
    else
        out << "power_law(" << value_ << ")";
    return out.str();
}

namespace {

// sum_{j=1}^{k} j^-delta: exact up to a cutoff, Euler-Maclaurin for the tail.
double power_sum(double delta, std::uint64_t k) {
    constexpr std::uint64_t kExact = 1'000'000;
    const std::uint64_t m = std::min(k, kExact);
    double s = 0.0;
    // Sum small terms first.
    for (std::uint64_t j = m; j >= 1; --j) s += std::pow(static_cast<double>(j), -delta);
    if (k == m) return s;
    const double a = static_cast<double>(m), b = static_cast<double>(k), e = 1.0 - delta;
    auto f = [&](double x) { return std::pow(x, -delta); };
    auto fp = [&](double x) { return -delta * std::pow(x, -delta - 1.0); };
    s += (std::pow(b, e) - std::pow(a, e)) / e + 0.5 * (f(b) - f(a)) + (fp(b) - fp(a)) / 12.0;
    return s;
}

} // namespace

double iteration_to_time(const Schedule& schedule, double epsilon, std::uint64_t k) {
    if (k == 0) return 0.0;
    if (schedule.kind() == Schedule::Kind::Constant) return epsilon * static_cast<double>(k);
    return schedule.time_for_integral(epsilon * power_sum(schedule.value(), k));
}

} // namespace mf
