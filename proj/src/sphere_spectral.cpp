#include "cmcnet/sphere_spectral.hpp"

#include "cmcnet/numerics.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace cmcnet {

namespace spectral_detail {

// Partial fractions give 1/(2 - l(l+1)) = -(1/(l-1) + 1/(l+2))/(2l+1) summed
// against P_l; both tails have classical generating-function closed forms.
// With u = sin(gamma/2):
//   sum_{l>=2} P_l/(l-1) + P_l/(l+2) = 2u^2 - t/3 - 3/2 - 2 t log u
double kernel(double t) {
    t = std::clamp(t, -1.0, 1.0);
    const double u = std::sqrt(std::max((1.0 - t) / 2.0, 1e-300));
    const double tails = 2.0 * u * u - t / 3.0 - 1.5 - 2.0 * t * std::log(u);
    return 1.0 / (8.0 * M_PI) - tails / (4.0 * M_PI);
}

double kernel_derivative(double t) {
    t = std::clamp(t, -1.0, 1.0);
    const double u2 = std::max((1.0 - t) / 2.0, 1e-300);
    const double dtails = -4.0 / 3.0 - std::log(u2) + t / (2.0 * u2);
    return -dtails / (4.0 * M_PI);
}

double kernel_truncated(double t, int L) {
    std::vector<double> P;
    num::legendre_all(L, t, P);
    double s = P[0] / (8.0 * M_PI);
    for (int l = 2; l <= L; ++l)
        s += (2.0 * l + 1.0) / (4.0 * M_PI) * P[l] / (2.0 - static_cast<double>(l) * (l + 1.0));
    return s;
}

} // namespace spectral_detail

double GeneratingFunction::cap_radius(int i) const { return std::pow(weights[i], 0.75); }

double GeneratingFunction::evaluate(const Vec3& theta) const {
    double s = 0.0;
    for (size_t i = 0; i < singular_points.size(); ++i) {
        const double t = std::clamp(singular_points[i].dot(theta), -1.0, 1.0);
        const double dist = std::acos(t);
        if (dist < cap_radius(i) * (1.0 - 1e-9))
            throw CapExclusionError("evaluation inside the exclusion cap of singular point " +
                                    std::to_string(i));
        s += weights[i] * spectral_detail::kernel(t);
    }
    return s;
}

double GeneratingFunction::evaluate_unrestricted(const Vec3& theta) const {
    double s = 0.0;
    for (size_t i = 0; i < singular_points.size(); ++i)
        s += weights[i] *
             spectral_detail::kernel(std::clamp(singular_points[i].dot(theta), -1.0, 1.0));
    return s;
}

double GeneratingFunction::evaluate_truncated(const Vec3& theta, int L) const {
    double s = 0.0;
    for (size_t i = 0; i < singular_points.size(); ++i)
        s += weights[i] *
             spectral_detail::kernel_truncated(std::clamp(singular_points[i].dot(theta), -1.0, 1.0), L);
    return s;
}

double GeneratingFunction::coefficient(int l, int m) const {
    if (l == 1) return 0.0;
    double rhs = 0.0;
    for (size_t i = 0; i < singular_points.size(); ++i)
        rhs += weights[i] * num::real_sph_harmonic(l, m, singular_points[i]);
    return rhs / (2.0 - static_cast<double>(l) * (l + 1.0));
}

double GeneratingFunction::lipschitz_bound(const Vec3& theta) const {
    double s = 0.0;
    for (size_t i = 0; i < singular_points.size(); ++i) {
        const double t = std::clamp(singular_points[i].dot(theta), -1.0, 1.0);
        const double st = std::sqrt(std::max(0.0, 1.0 - t * t));
        s += weights[i] * std::fabs(spectral_detail::kernel_derivative(t)) * st;
    }
    return s;
}

GeneratingFunction solve_generating_function(const std::vector<Vec3>& points,
                                             const std::vector<double>& weights, int band_limit) {
    if (points.size() != weights.size())
        throw Error("solve_generating_function: points/weights size mismatch");
    if (band_limit < 8) throw Error("solve_generating_function: band limit must be >= 8");
    GeneratingFunction G;
    G.band_limit = band_limit;
    for (size_t i = 0; i < points.size(); ++i) {
        if (weights[i] < 0.0) throw Error("singular weights must be positive");
        if (weights[i] == 0.0) continue; // zero-weight sources contribute nothing
        G.singular_points.push_back(points[i].normalized());
        G.weights.push_back(weights[i]);
    }
    for (size_t i = 0; i < G.singular_points.size(); ++i)
        for (size_t j = i + 1; j < G.singular_points.size(); ++j)
            if ((G.singular_points[i] - G.singular_points[j]).norm() < 1e-8)
                throw Error("coincident singular points " + std::to_string(i) + " and " +
                            std::to_string(j));

    // J cancels the degree-1 content of the source: J_s = -(3/4pi) sum eps_i q_i^s
    Vec3 J = Vec3::Zero();
    for (size_t i = 0; i < G.weights.size(); ++i)
        J -= 3.0 / (4.0 * M_PI) * G.weights[i] * G.singular_points[i];
    G.compensator = J;

    // achieved cancellation, degree-1 coefficients of (sum eps_i delta_i + J)
    double resid = 0.0;
    for (int m = -1; m <= 1; ++m) {
        double cm = 0.0;
        for (size_t i = 0; i < G.weights.size(); ++i)
            cm += G.weights[i] * num::real_sph_harmonic(1, m, G.singular_points[i]);
        // <J, Y_1m> with J = sum_s J_s x^s and x^s = sqrt(4pi/3) Y_1m(s)
        const int axis = (m == -1) ? 1 : (m == 0) ? 2 : 0;
        cm += J[axis] * std::sqrt(4.0 * M_PI / 3.0);
        resid = std::max(resid, std::fabs(cm));
    }
    G.degree1_residual = resid;
    if (resid > 1e-10)
        throw Error("degree-1 cancellation failure, residual " + std::to_string(resid));
    return G;
}

SingularExpansion expand_near_singularity(const GeneratingFunction& G, int i, double annulus_r0) {
    if (i < 0 || i >= static_cast<int>(G.singular_points.size()))
        throw Error("expand_near_singularity: bad singular point index");
    const Vec3 q = G.singular_points[i];
    const double eps = G.weights[i];
    const double r0 = (annulus_r0 > 0.0 ? annulus_r0 : G.cap_radius(i)) * (1.0 + 1e-9);

    // orthonormal tangent basis at q
    Vec3 aux = (std::fabs(q.z()) < 0.9) ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
    const Vec3 t1 = (aux - aux.dot(q) * q).normalized();
    const Vec3 t2 = q.cross(t1);

    const int nr = 8, na = 16;
    const int n = nr * na;
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd y(n);
    std::vector<double> dists(n);
    int row = 0;
    for (int ir = 0; ir < nr; ++ir) {
        // log-spaced radii on [r0, 2 r0]
        const double d = r0 * std::pow(2.0, static_cast<double>(ir) / (nr - 1));
        for (int ia = 0; ia < na; ++ia) {
            const double psi = 2.0 * M_PI * ia / na;
            const Vec3 theta =
                std::cos(d) * q + std::sin(d) * (std::cos(psi) * t1 + std::sin(psi) * t2);
            A(row, 0) = 1.0;
            A(row, 1) = std::log(d);
            y(row) = G.evaluate(theta);
            dists[row] = d;
            ++row;
        }
    }
    Eigen::Vector2d ab = (A.transpose() * A).ldlt().solve(A.transpose() * y);
    SingularExpansion out;
    out.c = ab(0) / eps;
    out.C = ab(1) / eps;
    double K = 0.0;
    for (int r = 0; r < n; ++r) {
        const double resid = std::fabs(y(r) - ab(0) - ab(1) * std::log(dists[r]));
        K = std::max(K, resid / (dists[r] * dists[r]));
    }
    out.K = K;
    return out;
}

} // namespace cmcnet
