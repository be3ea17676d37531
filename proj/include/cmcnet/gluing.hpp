#pragma once

#include "cmcnet/geometry.hpp"
#include "cmcnet/sphere_spectral.hpp"

#include <array>
#include <functional>

namespace cmcnet {

struct MatchDomainError : Error {
    explicit MatchDomainError(const std::string& w) : Error(w) {}
};
struct GraphabilityError : Error {
    explicit GraphabilityError(const std::string& w) : Error(w) {}
};

// Catenoid neck between two adjacent blocks. The minus side faces the block
// behind (constants c_minus, C_minus), the plus side the block ahead.
struct NeckSpec {
    double eps_flat = 0.0; // catenoid scale
    double d_flat = 0.0;   // axial offset, in units of eps_flat
    double eps_in = 0.0;   // matched singular weight of the behind block
    double eps_out = 0.0;  // matched singular weight of the ahead block
    double tau = 0.0;      // separation
    std::array<double, 6> deformation{}; // (d1, d2, d3, eps, theta2, theta3)
    double c_minus = 0.0, C_minus = 0.0;
    double c_plus = 0.0, C_plus = 0.0;

    double cutoff_radius() const { return std::pow(eps_flat, 0.75); }
    bool deformed() const;
};

// Separation law tau = Lambda(eps) = eps (2(log 2 - log eps) - c'/C' - c/C).
double lambda_fn(double eps, double c_m, double C_m, double c_p, double C_p);
double lambda_derivative(double eps, double c_m, double C_m, double c_p, double C_p);
// eps where Lambda' vanishes; Lambda is strictly increasing below it.
double lambda_monotone_threshold(double c_m, double C_m, double c_p, double C_p);

// Optimal matching of the asymptotic expansions: eps_flat = C eps_i,
// eps_out = eps_flat / C', d_flat = (c'/C' - c/C)/2, tau = Lambda(eps_flat).
NeckSpec match_neck(double eps_i, double c, double C, double c_prime, double C_prime);

// Unique eps_flat with Lambda(eps_flat) = tau on the monotone domain.
double invert_lambda(double tau, double c, double C, double c_prime, double C_prime);

// Graphing function of the (possibly deformed) catenoid end over the
// (x2,x3)-plane of the neck chart; side is +1 or -1.
double neck_graph(const NeckSpec& n, int side, double x2, double x3);

// Waist circle of the deformed catenoid at azimuth psi.
Vec3 neck_waist_point(const NeckSpec& n, double psi);

using PlaneGraph = std::function<double(double, double)>;

// Cutoff interpolant between the neck graph and the sphere graph:
// F = chi(rho/rho_c) F_neck + (1 - chi) F_sph.
PlaneGraph make_interpolant(const NeckSpec& n, int side, PlaneGraph neck_g, PlaneGraph sphere_g);

// Exact flat-picture graph of a block surface over the neck plane. The block
// has unit radius, center on the axis at x1 = side (1 + tau/2), its facing
// singular point toward the origin, and radial profile 1 - G. The tangent
// basis (t1, t2) at the facing point maps to the neck axes (e2, e3).
class BlockNeckGraph {
  public:
    BlockNeckGraph(const GeneratingFunction* G, int point_index, int side, double tau,
                   const Vec3& t1, const Vec3& t2);

    double operator()(double x2, double x3) const;
    // polar angle phi on the block sphere corresponding to plane radius rho
    double polar_angle(double rho, double psi) const;

  private:
    const GeneratingFunction* G_;
    Vec3 q_, t1_, t2_;
    int side_;
    double tau_;
};

} // namespace cmcnet
