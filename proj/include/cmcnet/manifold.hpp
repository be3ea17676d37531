#pragma once

#include "cmcnet/expression.hpp"
#include "cmcnet/geometry.hpp"
#include "cmcnet/numerics.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace cmcnet {

struct ChartDomain {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
    bool contains(const Vec3& x, double margin = 0.0) const {
        return (x - center).norm() <= radius - margin;
    }
};

using MetricFn = std::function<Mat3(const Vec3&)>;
using MetricD1Fn = std::function<std::array<Mat3, 3>(const Vec3&)>;
using MetricD2Fn = std::function<std::array<std::array<Mat3, 3>, 3>(const Vec3&)>;

// A smooth metric tensor on a single coordinate chart. Exact derivative
// callbacks are optional; when absent, derivatives come from adaptive central
// finite differences with Richardson extrapolation.
struct ChartMetric {
    ChartDomain domain;
    MetricFn eval;
    MetricD1Fn deriv1;
    MetricD2Fn deriv2;
    int derivative_order_available = 4;
    bool normal_at_center = false;

    Mat3 operator()(const Vec3& x) const { return eval(x); }
};

struct CurvatureBundle {
    Vec3 point = Vec3::Zero();
    Christoffel christoffel{};
    Riemann riemann;
    Mat3 ricci = Mat3::Zero();
    double scalar = 0.0;
    Vec3 grad_scalar = Vec3::Zero(); // index raised with the metric
};

struct PositiveDefiniteError : Error {
    explicit PositiveDefiniteError(const std::string& w) : Error(w) {}
};
struct DerivativeError : Error {
    explicit DerivativeError(const std::string& w) : Error(w) {}
};
struct InjectivityError : Error {
    explicit InjectivityError(const std::string& w) : Error(w) {}
};

// --- metric catalog --------------------------------------------------------

ChartMetric euclidean_metric();
// Round 3-sphere of radius a in the conformal chart g = delta / (1+|x|^2/(4a^2))^2.
ChartMetric round_sphere_metric(double a);
// Conformal metric g = exp(2 phi) delta with phi given as an expression in x1,x2,x3.
ChartMetric conformal_metric(const Expression& phi, double domain_radius = 4.0);
ChartMetric conformal_metric(const std::string& phi_text, double domain_radius = 4.0);
// Build a catalog metric from a config name: "euclidean", "round_sphere(a)",
// "conformal(expression)".
ChartMetric metric_from_name(const std::string& name);

// Strips exact-derivative callbacks; forces the finite-difference path.
ChartMetric without_exact_derivatives(const ChartMetric& m);

// --- pointwise geometry ----------------------------------------------------

Mat3 metric_checked(const ChartMetric& m, const Vec3& x);
Christoffel christoffel_at(const ChartMetric& m, const Vec3& x);
double scalar_curvature(const ChartMetric& m, const Vec3& x);
Vec3 grad_scalar_curvature(const ChartMetric& m, const Vec3& x); // index raised
CurvatureBundle curvature_at(const ChartMetric& m, const Vec3& x);

// Covariant derivative components of the curvature tensor, nabla_n R_{ijkl}.
// Computed by finite differences of curvature plus connection corrections.
std::array<Riemann, 3> covariant_riemann_derivative(const ChartMetric& m, const Vec3& x);

inline double inner(const Mat3& g, const Vec3& a, const Vec3& b) { return a.dot(g * b); }
inline double norm(const Mat3& g, const Vec3& a) { return std::sqrt(std::max(0.0, inner(g, a, a))); }

// g-orthonormal frame at p with first column along first_dir. Columns are the
// frame vectors in chart components.
Mat3 orthonormal_frame(const ChartMetric& m, const Vec3& p, const Vec3& first_dir);

// --- geodesics -------------------------------------------------------------

struct GeodesicState {
    Vec3 point;
    Vec3 velocity;
};

// Unit-speed geodesic flow for arclength t. Requires |v|_g = 1 within 1e-10.
GeodesicState geodesic(const ChartMetric& m, const Vec3& p, const Vec3& v, double t,
                       const num::OdeOptions& opts = {});

// Geodesic flow without the unit-speed requirement.
GeodesicState geodesic_flow(const ChartMetric& m, const Vec3& p, const Vec3& v, double t,
                            const num::OdeOptions& opts = {});

// exp_p(v): geodesic with initial velocity v for unit time; no unit-norm
// requirement. Optionally reports the Jacobian dz/dv (chart components).
Vec3 exp_map(const ChartMetric& m, const Vec3& p, const Vec3& v, Mat3* jacobian = nullptr,
             const num::OdeOptions& opts = {});

struct LogResult {
    Vec3 v;          // tangent at p, chart components
    double distance; // |v|_g(p)
    int iterations;
};
LogResult log_map(const ChartMetric& m, const Vec3& p, const Vec3& q,
                  const num::OdeOptions& opts = {});
double geodesic_distance(const ChartMetric& m, const Vec3& p, const Vec3& q);

// Geodesic normal-coordinate chart centered at p with frame E (columns).
// The returned metric is the pullback of m under x -> exp_p(E x).
ChartMetric normal_chart(const ChartMetric& m, const Vec3& p, const Mat3& frame,
                         const num::OdeOptions& opts = {});

// Parallel transport of v along a densely sampled path (pairs of parameter
// value and chart position).
Vec3 parallel_transport(const ChartMetric& m, const std::vector<std::pair<double, Vec3>>& path,
                        const Vec3& v, int substeps_per_interval = 8);

} // namespace cmcnet
