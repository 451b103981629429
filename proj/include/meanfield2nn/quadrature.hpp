#pragma once

#include <vector>

namespace mf {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [lo, hi] (Golub-Welsch).
QuadratureRule gauss_legendre(int n, double lo, double hi);

/// n-point Gauss-Hermite rule for the standard normal weight phi(x):
/// sum_k w_k f(x_k) approximates E[f(G)].
QuadratureRule gauss_hermite_normal(int n);

/// Shared, lazily built rules (thread-safe).
const QuadratureRule& legendre_unit(int n); // on [-1, 1]

} // namespace mf
