#pragma once

#include "cmcnet/geometry.hpp"

#include <vector>

namespace cmcnet {

struct CapExclusionError : Error {
    explicit CapExclusionError(const std::string& w) : Error(w) {}
};

// Solution of the distributional equation (Lap_{S^2} + 2) G = sum_i eps_i delta_i + J
// with G orthogonal to the degree-1 spherical harmonics. The solution is
// represented through the exact zonal kernel of the operator on the
// complement of degree 1, so evaluation carries no truncation error; the
// band limit governs coefficient accessors and band-limited test machinery.
struct GeneratingFunction {
    std::vector<Vec3> singular_points; // unit vectors
    std::vector<double> weights;       // strictly positive
    int band_limit = 96;
    Vec3 compensator = Vec3::Zero(); // J, components in the basis J_s = x^s|_{S^2}
    double degree1_residual = 0.0;   // achieved cancellation of the degree-1 source content

    double cap_radius(int i) const; // eps_i^{3/4}

    // Exact evaluation (closed-form kernel). Throws CapExclusionError inside
    // an exclusion cap.
    double evaluate(const Vec3& theta) const;

    // Band-limited evaluation: the degree <= L part of G.
    double evaluate_truncated(const Vec3& theta, int L) const;

    // Kernel-level evaluation without the cap guard. The closed-form kernel
    // is analytic away from the singular points themselves; the gluing layer
    // needs it inside the exclusion caps where the matching graphs live.
    double evaluate_unrestricted(const Vec3& theta) const;

    // Harmonic coefficient of G in the real orthonormal basis. Zero at l = 1.
    double coefficient(int l, int m) const;

    // Bound for |dG/dtheta| at theta from the kernel derivative.
    double lipschitz_bound(const Vec3& theta) const;
};

struct SingularExpansion {
    double c = 0.0; // per-unit constant term: G ~ eps (c + C log dist)
    double C = 0.0; // per-unit log coefficient
    double K = 0.0; // reported quadratic-remainder constant over the annulus
};

GeneratingFunction solve_generating_function(const std::vector<Vec3>& points,
                                             const std::vector<double>& weights, int band_limit = 96);

// Least-squares fit of eps_i (c + C log dist) on the annulus
// [r0, 2 r0] around singular point i; r0 defaults to the cap radius eps^{3/4}.
SingularExpansion expand_near_singularity(const GeneratingFunction& G, int i, double annulus_r0 = -1.0);

namespace spectral_detail {
// Zonal kernel of (Lap + 2)^{-1} restricted to the complement of degree 1:
// K(t) = sum_{l != 1} (2l+1)/(4 pi) P_l(t) / (2 - l(l+1)), in closed form.
double kernel(double cos_angle);
double kernel_derivative(double cos_angle); // dK/dt
double kernel_truncated(double cos_angle, int L);
} // namespace spectral_detail

} // namespace cmcnet
