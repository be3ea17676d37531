#include "cmcnet/gluing.hpp"

#include "cmcnet/numerics.hpp"

#include <Eigen/Geometry>
#include <cmath>

namespace cmcnet {

bool NeckSpec::deformed() const {
    for (double d : deformation)
        if (d != 0.0) return true;
    return false;
}

double lambda_fn(double eps, double c_m, double C_m, double c_p, double C_p) {
    const double s = c_m / C_m + c_p / C_p;
    return eps * (2.0 * (std::log(2.0) - std::log(eps)) - s);
}

double lambda_derivative(double eps, double c_m, double C_m, double c_p, double C_p) {
    const double s = c_m / C_m + c_p / C_p;
    return 2.0 * (std::log(2.0) - std::log(eps)) - s - 2.0;
}

double lambda_monotone_threshold(double c_m, double C_m, double c_p, double C_p) {
    const double s = c_m / C_m + c_p / C_p;
    return 2.0 * std::exp(-1.0 - 0.5 * s);
}

NeckSpec match_neck(double eps_i, double c, double C, double c_prime, double C_prime) {
    if (C <= 0.0 || C_prime <= 0.0)
        throw MatchDomainError("match_neck: log coefficients must be positive");
    if (eps_i <= 0.0) throw MatchDomainError("match_neck: eps_i must be positive");
    NeckSpec n;
    n.eps_in = eps_i;
    n.eps_flat = C * eps_i;
    n.eps_out = n.eps_flat / C_prime;
    n.d_flat = 0.5 * (c_prime / C_prime - c / C);
    n.c_minus = c;
    n.C_minus = C;
    n.c_plus = c_prime;
    n.C_plus = C_prime;
    const double thresh = lambda_monotone_threshold(c, C, c_prime, C_prime);
    if (n.eps_flat > 0.8 * thresh)
        throw MatchDomainError("match_neck: eps_flat " + std::to_string(n.eps_flat) +
                               " beyond 0.8x the monotone threshold " + std::to_string(thresh));
    n.tau = lambda_fn(n.eps_flat, c, C, c_prime, C_prime);
    return n;
}

double invert_lambda(double tau, double c, double C, double c_prime, double C_prime) {
    const double hi = 0.8 * lambda_monotone_threshold(c, C, c_prime, C_prime);
    if (tau <= 0.0 || tau > lambda_fn(hi, c, C, c_prime, C_prime))
        throw MatchDomainError("invert_lambda: tau " + std::to_string(tau) +
                               " outside the range of Lambda on its monotone domain");
    // Newton from a log-corrected seed, bisection safeguarded
    double lo = 1e-300;
    double hi_b = hi;
    double eps = tau / std::max(1.0, 2.0 * (std::log(2.0) - std::log(tau)));
    eps = std::clamp(eps, 1e-30, hi);
    for (int it = 0; it < 200; ++it) {
        const double f = lambda_fn(eps, c, C, c_prime, C_prime) - tau;
        if (f > 0.0) hi_b = eps;
        else lo = eps;
        const double df = lambda_derivative(eps, c, C, c_prime, C_prime);
        double next = eps - f / df;
        if (!(next > lo && next < hi_b)) next = 0.5 * (lo + hi_b);
        if (std::fabs(next - eps) < 1e-16 * eps) {
            eps = next;
            break;
        }
        eps = next;
    }
    return eps;
}

namespace {

Mat3 neck_rotation(double theta2, double theta3) {
    // rotation about the x2-axis, then about the x3-axis
    return (Eigen::AngleAxisd(theta3, Vec3::UnitZ()) * Eigen::AngleAxisd(theta2, Vec3::UnitY()))
        .toRotationMatrix();
}

Vec3 catenoid_point(const NeckSpec& n, double t, double phi) {
    const double d1 = n.deformation[0], d2 = n.deformation[1], d3 = n.deformation[2];
    const double dil = n.deformation[3], th2 = n.deformation[4], th3 = n.deformation[5];
    const Vec3 p(t + n.d_flat + d1, std::cosh(t) * std::cos(phi) + d2,
                 std::cosh(t) * std::sin(phi) + d3);
    return (1.0 + dil) * n.eps_flat * (neck_rotation(th2, th3) * p);
}

} // namespace

Vec3 neck_waist_point(const NeckSpec& n, double psi) { return catenoid_point(n, 0.0, psi); }

double neck_graph(const NeckSpec& n, int side, double x2, double x3) {
    if (side != 1 && side != -1) throw Error("neck_graph: side must be +1 or -1");
    const double rho = std::hypot(x2, x3);
    if (!n.deformed()) {
        if (rho < n.eps_flat * (1.0 - 1e-12))
            throw GraphabilityError("neck_graph: inside the waist radius");
        const double r = std::max(rho / n.eps_flat, 1.0);
        return side * n.eps_flat * std::acosh(r) + n.eps_flat * n.d_flat;
    }
    double defsize = std::fabs(n.deformation[3]) + std::fabs(n.deformation[4]) +
                     std::fabs(n.deformation[5]) +
                     std::hypot(n.deformation[0], std::hypot(n.deformation[1], n.deformation[2]));
    if (defsize > 0.5)
        throw GraphabilityError("neck_graph: deformation beyond the graphability bound");
    // Newton in (t, phi) on the side sheet
    const double scale = (1.0 + n.deformation[3]) * n.eps_flat;
    double rr = std::max(rho / scale, 1.0 + 1e-12);
    double t = side * std::acosh(rr);
    double phi = std::atan2(x3, x2);
    for (int it = 0; it < 60; ++it) {
        const Vec3 X = catenoid_point(n, t, phi);
        const Vec2 F(X[1] - x2, X[2] - x3);
        if (F.norm() < 1e-14 * std::max(1.0, rho)) break;
        // analytic partials
        const double dil = n.deformation[3], th2 = n.deformation[4], th3 = n.deformation[5];
        const Mat3 R = neck_rotation(th2, th3);
        const Vec3 dPt(1.0, std::sinh(t) * std::cos(phi), std::sinh(t) * std::sin(phi));
        const Vec3 dPp(0.0, -std::cosh(t) * std::sin(phi), std::cosh(t) * std::cos(phi));
        const Vec3 dXt = (1.0 + dil) * n.eps_flat * (R * dPt);
        const Vec3 dXp = (1.0 + dil) * n.eps_flat * (R * dPp);
        Mat2 J;
        J << dXt[1], dXp[1], dXt[2], dXp[2];
        const double det = J.determinant();
        if (std::fabs(det) < 1e-14 * scale * scale)
            throw GraphabilityError("neck_graph: vertical tangent detected");
        const Vec2 step = J.inverse() * F;
        t -= step[0];
        phi -= step[1];
        if (it == 59) throw GraphabilityError("neck_graph: inversion did not converge");
    }
    return catenoid_point(n, t, phi)[0];
}

PlaneGraph make_interpolant(const NeckSpec& n, int side, PlaneGraph neck_g, PlaneGraph sphere_g) {
    const double rc = n.cutoff_radius();
    (void)side;
    return [rc, neck_g = std::move(neck_g), sphere_g = std::move(sphere_g)](double x2,
                                                                            double x3) -> double {
        const double rho = std::hypot(x2, x3);
        const double chi = num::cutoff_chi(rho / rc);
        if (chi >= 1.0) return neck_g(x2, x3);
        if (chi <= 0.0) return sphere_g(x2, x3);
        return chi * neck_g(x2, x3) + (1.0 - chi) * sphere_g(x2, x3);
    };
}

BlockNeckGraph::BlockNeckGraph(const GeneratingFunction* G, int point_index, int side, double tau,
                               const Vec3& t1, const Vec3& t2)
    : G_(G), t1_(t1), t2_(t2), side_(side), tau_(tau) {
    q_ = G->singular_points[point_index];
}

double BlockNeckGraph::polar_angle(double rho, double psi) const {
    // solve (1 - G(theta(phi,psi))) sin(phi) = rho for phi
    auto radius_at = [&](double phi) {
        const Vec3 th = std::cos(phi) * q_ + std::sin(phi) * (std::cos(psi) * t1_ + std::sin(psi) * t2_);
        return (1.0 - G_->evaluate_unrestricted(th)) * std::sin(phi);
    };
    double lo = 1e-12, hi = 0.5 * M_PI;
    double phi = std::min(std::max(rho, lo), hi);
    for (int it = 0; it < 80; ++it) {
        const double f = radius_at(phi) - rho;
        if (std::fabs(f) < 1e-15) return phi;
        if (f > 0) hi = phi;
        else lo = phi;
        const double h = std::max(1e-7, 1e-7 * phi);
        const double df = (radius_at(phi + h) - radius_at(phi - h)) / (2.0 * h);
        double next = phi - f / df;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::fabs(next - phi) < 1e-15 * std::max(phi, 1e-10)) return next;
        phi = next;
    }
    return phi;
}

double BlockNeckGraph::operator()(double x2, double x3) const {
    const double rho = std::hypot(x2, x3);
    const double psi = std::atan2(x3, x2);
    const double phi = polar_angle(rho, psi);
    const Vec3 th = std::cos(phi) * q_ + std::sin(phi) * (std::cos(psi) * t1_ + std::sin(psi) * t2_);
    const double radial = 1.0 - G_->evaluate_unrestricted(th);
    return side_ * ((1.0 + 0.5 * tau_) - radial * std::cos(phi));
}

} // namespace cmcnet
