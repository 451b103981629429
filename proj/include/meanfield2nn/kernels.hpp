#pragma once

#include <span>
#include <vector>

#include "meanfield2nn/model.hpp"

namespace mf {

// ---------------------------------------------------------------------------
// Reduced coordinate spaces and weighted atom ensembles
// ---------------------------------------------------------------------------

enum class ReducedSpace { Radial1D, Aniso2D, Relu4D };

/// Coordinates per atom: 1 (r), 2 (r1, r2), 4 (a, b, r1, r2).
int space_dim(ReducedSpace space);
/// Whether coordinate c of the space is a norm (kept >= 0).
bool is_radial_coordinate(ReducedSpace space, int c);
const char* space_name(ReducedSpace space);

class AtomEnsemble {
public:
    AtomEnsemble() = default;
    AtomEnsemble(ReducedSpace space, std::vector<double> coords, std::vector<double> weights);
    /// Equal weights 1/J.
    static AtomEnsemble uniform(ReducedSpace space, std::vector<double> coords);

    ReducedSpace space() const { return space_; }
    int dim() const { return space_dim(space_); }
    std::size_t size() const { return weights_.size(); }

    std::span<const double> point(std::size_t i) const {
        return {coords_.data() + i * static_cast<std::size_t>(dim()), static_cast<std::size_t>(dim())};
    }
    std::span<double> point(std::size_t i) {
        return {coords_.data() + i * static_cast<std::size_t>(dim()), static_cast<std::size_t>(dim())};
    }
    double weight(std::size_t i) const { return weights_[i]; }
    std::span<const double> weights() const { return weights_; }
    std::span<const double> coords() const { return coords_; }
    std::span<double> coords() { return coords_; }

    /// Column c of the coordinate table.
    std::vector<double> coordinate(int c) const;
    /// Weighted mean of column c.
    double mean(int c) const;

    /// Throws std::invalid_argument unless weights >= 0 summing to 1 within
    /// 1e-12, radial coordinates >= 0 and J >= 1.
    void validate() const;

private:
    ReducedSpace space_ = ReducedSpace::Radial1D;
    std::vector<double> coords_;
    std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Scalar potentials
// ---------------------------------------------------------------------------

/// v(r) = -q(tau+ r)/2 + q(tau- r)/2.
double v_eval(const Activation& act, double delta, double r);
double v_prime(const Activation& act, double delta, double r);

/// f(r1, r2, theta) = int sigma(r1 x) g(r2 x cos theta, r2 sin theta) phi(x) dx,
/// i.e. E[sigma(r1 G1) sigma(r2 G2)] with corr(G1, G2) = cos theta.
double f_integral(const Activation& act, double r1, double r2, double theta);
/// Partial derivative of f_integral in r1.
double f_integral_d1(const Activation& act, double r1, double r2, double theta);

/// Pair potential between two units with norms r1, r2 at angle alpha.
double u_angle(const Activation& act, double delta, double r1, double r2, double alpha);

/// u_d(r1, r2): u_angle averaged over the angle between two uniform
/// directions in R^d; the product closed form for d = inf.
double u_d_eval(const Activation& act, double delta, Dim d, double r1, double r2);
/// d/dr1 of u_d_eval, differentiated under the integral.
double u_d_d1(const Activation& act, double delta, Dim d, double r1, double r2);

// ---------------------------------------------------------------------------
// Effective potentials and reduced risks
// ---------------------------------------------------------------------------

struct OrderParams {
    double lambda_plus;
    double lambda_minus;
};

/// lambda_+ = (<h+, rho> - 1)/2, lambda_- = (<h-, rho> + 1)/2 where h+- is
/// q(tau+- r) (Radial1D), q(r+-(r1, r2)) (Aniso2D) or a Q+-(r1, r2, b) (Relu4D).
OrderParams lambda_pm(const Activation& act, double delta, const AtomEnsemble& atoms);

/// psi(point; rho) and its gradient in the coordinates of the atoms' space.
/// d may be finite only for Radial1D. Throws std::domain_error on negative
/// radial coordinates.
double psi_value(const Activation& act, double delta, Dim d, std::span<const double> point, const AtomEnsemble& atoms);
std::vector<double> psi_grad(const Activation& act, double delta, Dim d, std::span<const double> point,
                             const AtomEnsemble& atoms);

/// d = inf gradient for known order parameters; out has space_dim entries.
void psi_grad_infinite(const Activation& act, double delta, ReducedSpace space, std::span<const double> point,
                       const OrderParams& lam, std::span<double> out);
double psi_value_infinite(const Activation& act, double delta, ReducedSpace space, std::span<const double> point,
                          const OrderParams& lam);

/// Reduced risk of the measure. For d = inf this is 2 lambda_+^2 + 2 lambda_-^2.
double reduced_risk(const Activation& act, double delta, Dim d, const AtomEnsemble& atoms);

/// Gradient of reduced_risk with respect to every atom coordinate, assembled
/// directly from the squared-residual form (independent of psi_grad).
std::vector<double> reduced_risk_gradient(const Activation& act, double delta, Dim d, const AtomEnsemble& atoms);

/// ReLU smoothed unit: Q+-(r1, r2, b) = E[max(b + s G, 0)], s = sqrt(tau^2 r1^2 + r2^2).
double relu_q(double tau, double r1, double r2, double b);

// ---------------------------------------------------------------------------
// Tabulated radial kernel for finite-d dynamics
// ---------------------------------------------------------------------------

/// v, v', u_d and d/dr1 u_d on a uniform grid over [0, r_max]^2 with bilinear
/// interpolation. Construction costs (cells+1)^2 quadratures of each kind.
class RadialKernelTable {
public:
    RadialKernelTable(const Activation& act, double delta, Dim d, double r_max, int cells, int threads = 0);

    double r_max() const { return r_max_; }
    Dim dim() const { return d_; }
    double delta() const { return delta_; }

    double v(double r) const;
    double v_prime(double r) const;
    double u(double r1, double r2) const;
    double u_d1(double r1, double r2) const;

private:
    double interp1(const std::vector<double>& table, double r) const;
    double interp2(const std::vector<double>& table, double r1, double r2) const;

    Dim d_;
    double delta_;
    double r_max_;
    int cells_;
    double h_;
    std::vector<double> v_, vp_, u_, ud1_;
};

// ---------------------------------------------------------------------------
// Statics grid kernel
// ---------------------------------------------------------------------------

/// v-vector and U-matrix over a grid of radii (row-major K x K).
struct KernelGrid {
    std::vector<double> grid;
    std::vector<double> v_vec;
    std::vector<double> u_mat;
    Dim d;
    double delta = 0.0;

    std::size_t size() const { return grid.size(); }
    double u(std::size_t i, std::size_t j) const { return u_mat[i * grid.size() + j]; }

    double max_asymmetry() const;
    double min_eigenvalue() const;
    /// Singular values in decreasing order.
    std::vector<double> singular_values() const;

    void write_csv(const std::string& path) const;
    static KernelGrid read_csv(const std::string& path);
};

} // namespace mf
