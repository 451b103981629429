#include "meanfield2nn/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace mf {

namespace {

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights are
// mu0 * (first eigenvector component)^2.
QuadratureRule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag, double mu0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, offdiag, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) throw std::runtime_error("Golub-Welsch eigen solve failed");
    const auto n = diag.size();
    QuadratureRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        const double v0 = solver.eigenvectors()(0, k);
        rule.nodes[static_cast<std::size_t>(k)] = solver.eigenvalues()(k);
        rule.weights[static_cast<std::size_t>(k)] = mu0 * v0 * v0;
    }
    return rule;
}

} // namespace

QuadratureRule gauss_legendre(int n, double lo, double hi) {
    if (n < 1) throw std::invalid_argument("quadrature order must be positive");
    QuadratureRule rule = legendre_unit(n);
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        rule.nodes[k] = mid + half * rule.nodes[k];
        rule.weights[k] *= half;
    }
    return rule;
}

const QuadratureRule& legendre_unit(int n) {
    static std::mutex mutex;
    static std::map<int, QuadratureRule> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd off(std::max(n - 1, 0));
    for (int k = 1; k < n; ++k) off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
    return cache.emplace(n, golub_welsch(diag, off, 2.0)).first->second;
}

QuadratureRule gauss_hermite_normal(int n) {
    if (n < 1) throw std::invalid_argument("quadrature order must be positive");
    // Probabilists' Hermite recurrence: x He_k = He_{k+1} + k He_{k-1}.
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd off(std::max(n - 1, 0));
    for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
    return golub_welsch(diag, off, 1.0);
}

} // namespace mf
