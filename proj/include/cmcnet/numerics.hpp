#pragma once

#include "cmcnet/geometry.hpp"

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace cmcnet::num {

// ---------------------------------------------------------------------------
// Derivatives by Ridders' method (central differences + Neville extrapolation)
// ---------------------------------------------------------------------------

struct DerivResult {
    double value = 0.0;
    double error = 0.0;
};

// First derivative of a scalar function at x, initial stencil width h0.
DerivResult ridders_derivative(const std::function<double(double)>& f, double x, double h0);

// Matrix-valued version: extrapolates all entries with a shared step sequence.
// n is the flattened length of the matrix data.
void ridders_derivative_vec(const std::function<void(double, double*)>& f, double x, double h0,
                            int n, double* value, double* error);

// Second derivative (central 3-point stencil, extrapolated).
void ridders_second_derivative_vec(const std::function<void(double, double*)>& f, double x,
                                   double h0, int n, double* value, double* error);

// Mixed second partial d^2/(da db) of f(a,b) around (0,0), 4-point cross stencil.
void ridders_mixed_derivative_vec(const std::function<void(double, double, double*)>& f,
                                  double h0, int n, double* value, double* error);

// ---------------------------------------------------------------------------
// Adaptive Dormand-Prince 5(4) integrator
// ---------------------------------------------------------------------------

struct OdeOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    double initial_step = 1e-3;
    double min_step = 1e-14;
    long max_steps = 4000000;
};

using OdeRhs = std::function<void(double, const double*, double*)>;

// Called after every accepted step with (t0, y0, t1, y1). Return false to abort.
using OdeObserver = std::function<bool(double, const double*, double, const double*)>;

struct OdeResult {
    std::vector<double> y;
    double t = 0.0;
    long steps = 0;
    bool ok = false;
    std::string message;
};

OdeResult integrate(const OdeRhs& rhs, std::vector<double> y0, double t0, double t1,
                    const OdeOptions& opts = {}, const OdeObserver& observer = nullptr);

// ---------------------------------------------------------------------------
// Quadrature and orthogonal polynomials
// ---------------------------------------------------------------------------

// Gauss-Legendre nodes/weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

// Legendre polynomials P_0..P_L at t (three-term recurrence).
void legendre_all(int L, double t, std::vector<double>& P);

// Real orthonormal spherical harmonic Y_{l,m}(theta) for a unit vector,
// m in [-l, l], normalized so that the L^2(S^2) norm is 1.
double real_sph_harmonic(int l, int m, const Vec3& u);

// ---------------------------------------------------------------------------
// Cutoffs
// ---------------------------------------------------------------------------

// Quintic smoothstep: 0 for s<=0, 1 for s>=1, C^2 joins. Derivatives available.
double smoothstep5(double s);
double smoothstep5_d1(double s);
double smoothstep5_d2(double s);

// Monotone cutoff chi: 1 on [0,1/2], 0 on [1,inf), C^2 in between.
double cutoff_chi(double s);
double cutoff_chi_d1(double s);
double cutoff_chi_d2(double s);

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

// Least-squares slope of y against x (used for convergence-order fits).
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

// Convergence order from (h_i, err_i): slope of log err vs log h.
double fit_order(const std::vector<double>& h, const std::vector<double>& err);

// ---------------------------------------------------------------------------
// Deterministic random numbers (pinned generator + pinned transforms)
// ---------------------------------------------------------------------------

class Rng {
  public:
    explicit Rng(std::uint64_t seed);
    std::uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double a, double b);
    double normal();                        // Box-Muller, pinned
    Vec3 unit_vector();

  private:
    std::uint64_t s_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace cmcnet::num
