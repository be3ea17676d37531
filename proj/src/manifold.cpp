#include "cmcnet/manifold.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <memory>
#include <sstream>

namespace cmcnet {

namespace {

std::string fmt_point(const Vec3& x) {
    std::ostringstream os;
    os << "(" << x[0] << ", " << x[1] << ", " << x[2] << ")";
    return os.str();
}

void require_in_domain(const ChartMetric& m, const Vec3& x, const char* who) {
    if (!m.domain.contains(x))
        throw ChartDomainError(std::string(who) + ": point " + fmt_point(x) +
                                   " outside chart domain",
                               x);
}

double fd_width(const ChartMetric& m, const Vec3& x) {
    const double room = m.domain.radius - (x - m.domain.center).norm();
    if (room <= 0.0)
        throw ChartDomainError("finite differencing at the chart boundary", x);
    return std::max(1e-7, std::min({0.05 * m.domain.radius, 0.1, 0.3 * room}));
}

// First and second metric derivatives; exact callbacks take precedence.
struct MetricDerivs {
    const ChartMetric& m;

    std::array<Mat3, 3> d1(const Vec3& x) const {
        if (m.deriv1) return m.deriv1(x);
        std::array<Mat3, 3> out;
        const double h0 = fd_width(m, x);
        for (int a = 0; a < 3; ++a) {
            double val[9], err[9];
            auto f = [&](double t, double* buf) {
                Vec3 xt = x;
                xt[a] += t - x[a];
                Mat3 g = m.eval(xt);
                for (int k = 0; k < 9; ++k) buf[k] = g.data()[k];
            };
            num::ridders_derivative_vec(f, x[a], h0, 9, val, err);
            for (int k = 0; k < 9; ++k) out[a].data()[k] = val[k];
            double emax = 0.0, vmax = 0.0;
            for (int k = 0; k < 9; ++k) {
                emax = std::max(emax, err[k]);
                vmax = std::max(vmax, std::fabs(val[k]));
            }
            if (emax > 1e-2 * std::max(1.0, vmax))
                throw DerivativeError("metric derivative stencil did not converge at " +
                                      fmt_point(x));
        }
        return out;
    }

    std::array<std::array<Mat3, 3>, 3> d2(const Vec3& x) const {
        if (m.deriv2) return m.deriv2(x);
        std::array<std::array<Mat3, 3>, 3> out;
        const double h0 = fd_width(m, x);
        for (int a = 0; a < 3; ++a) {
            double val[9], err[9];
            auto f = [&](double t, double* buf) {
                Vec3 xt = x;
                xt[a] += t - x[a];
                Mat3 g = m.eval(xt);
                for (int k = 0; k < 9; ++k) buf[k] = g.data()[k];
            };
            num::ridders_second_derivative_vec(f, x[a], h0, 9, val, err);
            for (int k = 0; k < 9; ++k) out[a][a].data()[k] = val[k];
        }
        for (int a = 0; a < 3; ++a) {
            for (int b = a + 1; b < 3; ++b) {
                double val[9], err[9];
                auto f = [&](double s, double t, double* buf) {
                    Vec3 xt = x;
                    xt[a] += s;
                    xt[b] += t;
                    Mat3 g = m.eval(xt);
                    for (int k = 0; k < 9; ++k) buf[k] = g.data()[k];
                };
                num::ridders_mixed_derivative_vec(f, h0, 9, val, err);
                for (int k = 0; k < 9; ++k) out[a][b].data()[k] = val[k];
                out[b][a] = out[a][b];
            }
        }
        return out;
    }
};

Christoffel christoffel_from(const Mat3& ginv, const std::array<Mat3, 3>& dg) {
    Christoffel G;
    for (int k = 0; k < 3; ++k) G[k].setZero();
    for (int k = 0; k < 3; ++k)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int l = 0; l < 3; ++l)
                    s += ginv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
                G[k](i, j) = 0.5 * s;
            }
    return G;
}

// d_c Gamma^k_{ij}, needed for the geodesic variational equations.
std::array<Christoffel, 3> dchristoffel_from(const Mat3& ginv, const std::array<Mat3, 3>& dg,
                                             const std::array<std::array<Mat3, 3>, 3>& d2g) {
    std::array<Mat3, 3> dginv;
    for (int c = 0; c < 3; ++c) dginv[c] = -ginv * dg[c] * ginv;
    std::array<Christoffel, 3> out;
    for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 3; ++k)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    double s = 0.0;
                    for (int l = 0; l < 3; ++l) {
                        s += dginv[c](k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
                        s += ginv(k, l) *
                             (d2g[c][i](j, l) + d2g[c][j](i, l) - d2g[c][l](i, j));
                    }
                    out[c][k](i, j) = 0.5 * s;
                }
    return out;
}

} // namespace

// --- catalog ----------------------------------------------------------------

ChartMetric euclidean_metric() {
    ChartMetric m;
    m.domain = {Vec3::Zero(), 1e6};
    m.eval = [](const Vec3&) { return Mat3::Identity(); };
    m.deriv1 = [](const Vec3&) {
        return std::array<Mat3, 3>{Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};
    };
    m.deriv2 = [](const Vec3&) {
        std::array<std::array<Mat3, 3>, 3> z;
        for (auto& row : z)
            for (auto& e : row) e.setZero();
        return z;
    };
    m.derivative_order_available = 16;
    m.normal_at_center = true;
    return m;
}

ChartMetric round_sphere_metric(double a) {
    if (a <= 0.0) throw Error("round_sphere radius must be positive");
    ChartMetric m;
    m.domain = {Vec3::Zero(), 3.5 * a}; // stays clear of the antipodal point at infinity
    const double inv4a2 = 1.0 / (4.0 * a * a);
    auto lam = [inv4a2](const Vec3& x) { return 1.0 / (1.0 + x.squaredNorm() * inv4a2); };
    m.eval = [lam](const Vec3& x) {
        const double l = lam(x);
        return (l * l) * Mat3::Identity();
    };
    m.deriv1 = [lam, inv4a2](const Vec3& x) {
        const double l = lam(x);
        std::array<Mat3, 3> out;
        for (int c = 0; c < 3; ++c) {
            const double dq = 2.0 * x[c] * inv4a2;
            const double dl = -l * l * dq;
            out[c] = (2.0 * l * dl) * Mat3::Identity();
        }
        return out;
    };
    m.deriv2 = [lam, inv4a2](const Vec3& x) {
        const double l = lam(x);
        Vec3 dq, dl;
        for (int c = 0; c < 3; ++c) {
            dq[c] = 2.0 * x[c] * inv4a2;
            dl[c] = -l * l * dq[c];
        }
        std::array<std::array<Mat3, 3>, 3> out;
        for (int a_ = 0; a_ < 3; ++a_)
            for (int b = 0; b < 3; ++b) {
                const double d2q = (a_ == b) ? 2.0 * inv4a2 : 0.0;
                const double d2l = -2.0 * l * dl[b] * dq[a_] - l * l * d2q;
                out[a_][b] = (2.0 * dl[a_] * dl[b] + 2.0 * l * d2l) * Mat3::Identity();
            }
        return out;
    };
    m.derivative_order_available = 16;
    m.normal_at_center = true;
    return m;
}

ChartMetric conformal_metric(const Expression& phi, double domain_radius) {
    ChartMetric m;
    m.domain = {Vec3::Zero(), domain_radius};
    std::array<Expression, 3> d1;
    std::array<std::array<Expression, 3>, 3> d2;
    for (int a = 0; a < 3; ++a) d1[a] = phi.derivative(a);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) d2[a][b] = d1[a].derivative(b);
    m.eval = [phi](const Vec3& x) { return std::exp(2.0 * phi.eval(x)) * Mat3::Identity(); };
    m.deriv1 = [phi, d1](const Vec3& x) {
        const double e = std::exp(2.0 * phi.eval(x));
        std::array<Mat3, 3> out;
        for (int a = 0; a < 3; ++a) out[a] = (2.0 * d1[a].eval(x) * e) * Mat3::Identity();
        return out;
    };
    m.deriv2 = [phi, d1, d2](const Vec3& x) {
        const double e = std::exp(2.0 * phi.eval(x));
        Vec3 p1;
        for (int a = 0; a < 3; ++a) p1[a] = d1[a].eval(x);
        std::array<std::array<Mat3, 3>, 3> out;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                out[a][b] =
                    ((4.0 * p1[a] * p1[b] + 2.0 * d2[a][b].eval(x)) * e) * Mat3::Identity();
        return out;
    };
    m.derivative_order_available = 8;
    const double phi0 = phi.eval(Vec3::Zero());
    Vec3 g1;
    for (int a = 0; a < 3; ++a) g1[a] = d1[a].eval(Vec3::Zero());
    m.normal_at_center = (std::fabs(phi0) < 1e-14 && g1.norm() < 1e-14);
    return m;
}

ChartMetric conformal_metric(const std::string& phi_text, double domain_radius) {
    return conformal_metric(Expression::parse(phi_text), domain_radius);
}

ChartMetric metric_from_name(const std::string& name) {
    auto strip = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        return s;
    };
    const std::string n = strip(name);
    if (n == "euclidean") return euclidean_metric();
    const auto open = n.find('(');
    if (open != std::string::npos && n.back() == ')') {
        const std::string head = strip(n.substr(0, open));
        const std::string arg = n.substr(open + 1, n.size() - open - 2);
        if (head == "round_sphere") return round_sphere_metric(std::stod(arg));
        if (head == "conformal") return conformal_metric(arg);
    }
    throw Error("unknown metric name: " + name);
}

ChartMetric without_exact_derivatives(const ChartMetric& m) {
    ChartMetric out = m;
    out.deriv1 = nullptr;
    out.deriv2 = nullptr;
    return out;
}

// --- pointwise geometry ------------------------------------------------------

Mat3 metric_checked(const ChartMetric& m, const Vec3& x) {
    require_in_domain(m, x, "metric evaluation");
    Mat3 g = m.eval(x);
    const double scale = g.cwiseAbs().maxCoeff();
    if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0))
        throw Error("metric matrix is not symmetric at " + fmt_point(x));
    Eigen::LLT<Mat3> llt(0.5 * (g + g.transpose()));
    if (llt.info() != Eigen::Success)
        throw PositiveDefiniteError("metric not positive definite at " + fmt_point(x));
    return 0.5 * (g + g.transpose());
}

Christoffel christoffel_at(const ChartMetric& m, const Vec3& x) {
    require_in_domain(m, x, "christoffel");
    const Mat3 g = metric_checked(m, x);
    MetricDerivs d{m};
    return christoffel_from(g.inverse(), d.d1(x));
}

namespace {

Riemann riemann_from(const Mat3& g, const Christoffel& G,
                     const std::array<std::array<Mat3, 3>, 3>& d2g) {
    Riemann R;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) {
                    double term = 0.5 * (d2g[i][k](j, l) + d2g[j][l](i, k) - d2g[i][l](j, k) -
                                         d2g[j][k](i, l));
                    double qq = 0.0;
                    for (int p = 0; p < 3; ++p)
                        for (int q = 0; q < 3; ++q)
                            qq += g(p, q) * (G[p](i, k) * G[q](j, l) - G[p](i, l) * G[q](j, k));
                    R(i, j, k, l) = term + qq;
                }
    return R;
}

struct LocalCurvature {
    Mat3 g, ginv;
    Christoffel G;
    Riemann R;
    Mat3 ric;
    double scalar;
};

LocalCurvature local_curvature(const ChartMetric& m, const Vec3& x) {
    LocalCurvature lc;
    lc.g = metric_checked(m, x);
    lc.ginv = lc.g.inverse();
    MetricDerivs d{m};
    lc.G = christoffel_from(lc.ginv, d.d1(x));
    lc.R = riemann_from(lc.g, lc.G, d.d2(x));
    lc.ric.setZero();
    // Ric_{jk} = g^{il} R_{ijkl}
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) {
            double s = 0.0;
            for (int i = 0; i < 3; ++i)
                for (int l = 0; l < 3; ++l) s += lc.ginv(i, l) * lc.R(i, j, k, l);
            lc.ric(j, k) = s;
        }
    lc.scalar = (lc.ginv.cwiseProduct(lc.ric)).sum();
    return lc;
}

} // namespace

double scalar_curvature(const ChartMetric& m, const Vec3& x) {
    return local_curvature(m, x).scalar;
}

Vec3 grad_scalar_curvature(const ChartMetric& m, const Vec3& x) {
    require_in_domain(m, x, "grad_scalar");
    const double h0 = 0.25 * fd_width(m, x);
    Vec3 dR;
    for (int a = 0; a < 3; ++a) {
        auto f = [&](double t) {
            Vec3 xt = x;
            xt[a] = t;
            return scalar_curvature(m, xt);
        };
        auto r = num::ridders_derivative(f, x[a], h0);
        dR[a] = r.value;
    }
    return metric_checked(m, x).inverse() * dR;
}

CurvatureBundle curvature_at(const ChartMetric& m, const Vec3& x) {
    require_in_domain(m, x, "curvature_at");
    LocalCurvature lc = local_curvature(m, x);
    CurvatureBundle b;
    b.point = x;
    b.christoffel = lc.G;
    b.riemann = lc.R;
    b.ricci = lc.ric;
    b.scalar = lc.scalar;
    b.grad_scalar = grad_scalar_curvature(m, x);
    return b;
}

std::array<Riemann, 3> covariant_riemann_derivative(const ChartMetric& m, const Vec3& x) {
    const double h0 = 0.25 * fd_width(m, x);
    std::array<Riemann, 3> dR;
    for (int n = 0; n < 3; ++n) {
        double val[81], err[81];
        auto f = [&](double t, double* buf) {
            Vec3 xt = x;
            xt[n] = t;
            LocalCurvature lc = local_curvature(m, xt);
            for (int k = 0; k < 81; ++k) buf[k] = lc.R.v[k];
        };
        num::ridders_derivative_vec(f, x[n], h0, 81, val, err);
        for (int k = 0; k < 81; ++k) dR[n].v[k] = val[k];
    }
    // connection corrections: nabla_n R_ijkl = d_n R_ijkl - Gamma^p_{n i} R_pjkl - ...
    LocalCurvature lc = local_curvature(m, x);
    std::array<Riemann, 3> out;
    for (int n = 0; n < 3; ++n)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k)
                    for (int l = 0; l < 3; ++l) {
                        double s = dR[n](i, j, k, l);
                        for (int p = 0; p < 3; ++p) {
                            s -= lc.G[p](n, i) * lc.R(p, j, k, l);
                            s -= lc.G[p](n, j) * lc.R(i, p, k, l);
                            s -= lc.G[p](n, k) * lc.R(i, j, p, l);
                            s -= lc.G[p](n, l) * lc.R(i, j, k, p);
                        }
                        out[n](i, j, k, l) = s;
                    }
    return out;
}

Mat3 orthonormal_frame(const ChartMetric& m, const Vec3& p, const Vec3& first_dir) {
    const Mat3 g = metric_checked(m, p);
    Vec3 e1 = first_dir / norm(g, first_dir);
    // pick the coordinate axis least aligned with e1
    int best = 0;
    double bestabs = 1e300;
    for (int a = 0; a < 3; ++a) {
        Vec3 ca = Vec3::Unit(a);
        const double al = std::fabs(inner(g, ca, e1)) / norm(g, ca);
        if (al < bestabs) {
            bestabs = al;
            best = a;
        }
    }
    Vec3 e2 = Vec3::Unit(best);
    e2 -= inner(g, e2, e1) * e1;
    e2 /= norm(g, e2);
    // g-orthogonal complement via cross in the metric-adapted sense
    Vec3 e3 = Vec3::Unit((best + 1) % 3);
    e3 -= inner(g, e3, e1) * e1 + inner(g, e3, e2) * e2;
    if (norm(g, e3) < 1e-8) {
        e3 = Vec3::Unit((best + 2) % 3);
        e3 -= inner(g, e3, e1) * e1 + inner(g, e3, e2) * e2;
    }
    e3 /= norm(g, e3);
    Mat3 E;
    E.col(0) = e1;
    E.col(1) = e2;
    E.col(2) = e3;
    if (E.determinant() < 0.0) E.col(2) = -e3;
    return E;
}

// --- geodesics ---------------------------------------------------------------

GeodesicState geodesic(const ChartMetric& m, const Vec3& p, const Vec3& v, double t,
                       const num::OdeOptions& opts) {
    require_in_domain(m, p, "geodesic");
    const Mat3 g = metric_checked(m, p);
    if (std::fabs(norm(g, v) - 1.0) > 1e-10)
        throw Error("geodesic: initial velocity must be unit length in g");
    return geodesic_flow(m, p, v, t, opts);
}

GeodesicState geodesic_flow(const ChartMetric& m, const Vec3& p, const Vec3& v, double t,
                            const num::OdeOptions& opts) {
    require_in_domain(m, p, "geodesic");
    std::vector<double> y0 = {p[0], p[1], p[2], v[0], v[1], v[2]};
    auto rhs = [&m](double, const double* y, double* dy) {
        const Vec3 x(y[0], y[1], y[2]);
        const Vec3 vel(y[3], y[4], y[5]);
        const Christoffel G = christoffel_at(m, x);
        const Vec3 acc = -contract(G, vel, vel);
        dy[0] = vel[0];
        dy[1] = vel[1];
        dy[2] = vel[2];
        dy[3] = acc[0];
        dy[4] = acc[1];
        dy[5] = acc[2];
    };
    Vec3 exit_point = Vec3::Zero();
    bool exited = false;
    auto obs = [&](double, const double*, double, const double* y1) {
        const Vec3 x(y1[0], y1[1], y1[2]);
        if (!m.domain.contains(x)) {
            exit_point = x;
            exited = true;
            return false;
        }
        return true;
    };
    auto res = num::integrate(rhs, y0, 0.0, t, opts, obs);
    if (exited)
        throw ChartDomainError("geodesic exited the chart domain", exit_point);
    if (!res.ok) throw Error("geodesic integration failed: " + res.message);
    return {Vec3(res.y[0], res.y[1], res.y[2]), Vec3(res.y[3], res.y[4], res.y[5])};
}

Vec3 exp_map(const ChartMetric& m, const Vec3& p, const Vec3& v, Mat3* jacobian,
             const num::OdeOptions& opts) {
    require_in_domain(m, p, "exp_map");
    if (v.norm() < 1e-300) {
        if (jacobian) *jacobian = Mat3::Identity();
        return p;
    }
    MetricDerivs d{m};
    Vec3 exit_point = Vec3::Zero();
    bool exited = false;
    auto obs = [&](double, const double*, double, const double* y1) {
        const Vec3 x(y1[0], y1[1], y1[2]);
        if (!m.domain.contains(x)) {
            exit_point = x;
            exited = true;
            return false;
        }
        return true;
    };

    if (!jacobian) {
        std::vector<double> y0 = {p[0], p[1], p[2], v[0], v[1], v[2]};
        auto rhs = [&](double, const double* y, double* dy) {
            const Vec3 x(y[0], y[1], y[2]);
            const Vec3 vel(y[3], y[4], y[5]);
            const Mat3 g = m.eval(x);
            const Christoffel G = christoffel_from(g.inverse(), d.d1(x));
            const Vec3 acc = -contract(G, vel, vel);
            for (int i = 0; i < 3; ++i) dy[i] = vel[i];
            for (int i = 0; i < 3; ++i) dy[3 + i] = acc[i];
        };
        auto res = num::integrate(rhs, y0, 0.0, 1.0, opts, obs);
        if (exited) throw ChartDomainError("exp_map: geodesic exited the chart domain", exit_point);
        if (!res.ok) throw Error("exp_map integration failed: " + res.message);
        return {res.y[0], res.y[1], res.y[2]};
    }

    // with variational equations: state (x, v, J columns, V columns)
    std::vector<double> y0(24, 0.0);
    for (int i = 0; i < 3; ++i) {
        y0[i] = p[i];
        y0[3 + i] = v[i];
        y0[6 + 3 * i + i] = 0.0;         // J starts at 0
        y0[15 + 3 * i + i] = 1.0;        // V starts at identity (dv0 sensitivity)
    }
    auto rhs = [&](double, const double* y, double* dy) {
        const Vec3 x(y[0], y[1], y[2]);
        const Vec3 vel(y[3], y[4], y[5]);
        const Mat3 g = m.eval(x);
        const Mat3 ginv = g.inverse();
        const auto dg = d.d1(x);
        const auto d2g = d.d2(x);
        const Christoffel G = christoffel_from(ginv, dg);
        const auto dG = dchristoffel_from(ginv, dg, d2g);
        const Vec3 acc = -contract(G, vel, vel);
        for (int i = 0; i < 3; ++i) dy[i] = vel[i];
        for (int i = 0; i < 3; ++i) dy[3 + i] = acc[i];
        for (int col = 0; col < 3; ++col) {
            const Vec3 J(y[6 + 3 * 0 + col], y[6 + 3 * 1 + col], y[6 + 3 * 2 + col]);
            const Vec3 V(y[15 + 3 * 0 + col], y[15 + 3 * 1 + col], y[15 + 3 * 2 + col]);
            Vec3 dV;
            for (int k = 0; k < 3; ++k) {
                double s = 0.0;
                for (int c = 0; c < 3; ++c) s += dG[c][k].cwiseProduct(vel * vel.transpose()).sum() * J[c];
                s += 2.0 * vel.dot(G[k] * V);
                dV[k] = -s;
            }
            for (int r = 0; r < 3; ++r) {
                dy[6 + 3 * r + col] = V[r];
                dy[15 + 3 * r + col] = dV[r];
            }
        }
    };
    auto res = num::integrate(rhs, y0, 0.0, 1.0, opts, obs);
    if (exited) throw ChartDomainError("exp_map: geodesic exited the chart domain", exit_point);
    if (!res.ok) throw Error("exp_map integration failed: " + res.message);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) (*jacobian)(r, c) = res.y[6 + 3 * r + c];
    return {res.y[0], res.y[1], res.y[2]};
}

LogResult log_map(const ChartMetric& m, const Vec3& p, const Vec3& q,
                  const num::OdeOptions& opts) {
    require_in_domain(m, p, "log_map");
    require_in_domain(m, q, "log_map");
    Vec3 v = q - p;
    const double qscale = std::max(1.0, (q - p).norm());
    int it = 0;
    for (; it < 40; ++it) {
        Mat3 J;
        Vec3 z;
        bool shrunk = false;
        for (int tries = 0; tries < 30; ++tries) {
            try {
                z = exp_map(m, p, v, &J, opts);
                break;
            } catch (const ChartDomainError&) {
                v *= 0.7; // pull the trial velocity back inside the chart
                shrunk = true;
                if (tries == 29) throw;
            }
        }
        if (shrunk) continue;
        const Vec3 delta = q - z;
        if (delta.norm() < 1e-13 * qscale) break;
        Vec3 step = J.colPivHouseholderQr().solve(delta);
        // damp steps that would leave the chart
        double damp = 1.0;
        for (int tries = 0; tries < 6; ++tries) {
            try {
                exp_map(m, p, v + damp * step, nullptr, opts);
                break;
            } catch (const ChartDomainError&) {
                damp *= 0.5;
            }
        }
        v += damp * step;
    }
    if (it >= 40) throw Error("log_map: Newton iteration did not converge");
    const Mat3 g = metric_checked(m, p);
    return {v, norm(g, v), it};
}

double geodesic_distance(const ChartMetric& m, const Vec3& p, const Vec3& q) {
    return log_map(m, p, q).distance;
}

ChartMetric normal_chart(const ChartMetric& m, const Vec3& p, const Mat3& frame,
                         const num::OdeOptions& opts) {
    require_in_domain(m, p, "normal_chart");
    const Mat3 g = metric_checked(m, p);
    const Mat3 gram = frame.transpose() * g * frame;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-10)
        throw Error("normal_chart: frame is not g-orthonormal at p");

    auto source = std::make_shared<const ChartMetric>(m);
    const Vec3 center = p;
    const Mat3 E = frame;
    num::OdeOptions chart_opts = opts;
    chart_opts.rtol = std::min(opts.rtol, 1e-12);
    chart_opts.atol = std::min(opts.atol, 1e-13);

    ChartMetric out;
    out.domain = {Vec3::Zero(), 0.95 * (m.domain.radius - (p - m.domain.center).norm())};
    out.normal_at_center = true;
    out.derivative_order_available = 4;
    out.eval = [source, center, E, chart_opts](const Vec3& x) -> Mat3 {
        if (x.norm() < 1e-14) return Mat3::Identity();
        Mat3 Jv;
        Vec3 z = exp_map(*source, center, E * x, &Jv, chart_opts);
        const Mat3 D = Jv * E;
        if (D.determinant() < 1e-12)
            throw InjectivityError("normal_chart: exponential map is degenerate at |x|=" +
                                   std::to_string(x.norm()));
        Mat3 gt = D.transpose() * source->eval(z) * D;
        return 0.5 * (gt + gt.transpose());
    };
    return out;
}

Vec3 parallel_transport(const ChartMetric& m, const std::vector<std::pair<double, Vec3>>& path,
                        const Vec3& v, int substeps_per_interval) {
    if (path.size() < 2) return v;
    const size_t n = path.size();
    // slopes by centered differences on the samples
    std::vector<Vec3> slope(n);
    for (size_t k = 0; k < n; ++k) {
        const size_t k0 = (k == 0) ? 0 : k - 1;
        const size_t k1 = (k + 1 == n) ? k : k + 1;
        slope[k] = (path[k1].second - path[k0].second) / (path[k1].first - path[k0].first);
    }
    Vec3 w = v;
    for (size_t k = 0; k + 1 < n; ++k) {
        const double t0 = path[k].first, t1 = path[k + 1].first;
        const double h = t1 - t0;
        const Vec3 &x0 = path[k].second, &x1 = path[k + 1].second;
        const Vec3 m0 = slope[k] * h, m1 = slope[k + 1] * h;
        auto pos = [&](double s) -> Vec3 { // s in [0,1], cubic Hermite
            const double s2 = s * s, s3 = s2 * s;
            return (2 * s3 - 3 * s2 + 1) * x0 + (s3 - 2 * s2 + s) * m0 +
                   (-2 * s3 + 3 * s2) * x1 + (s3 - s2) * m1;
        };
        auto vel = [&](double s) -> Vec3 {
            const double s2 = s * s;
            return ((6 * s2 - 6 * s) * x0 + (3 * s2 - 4 * s + 1) * m0 + (6 * s - 6 * s2) * x1 +
                    (3 * s2 - 2 * s) * m1) /
                   h;
        };
        auto rhs = [&](double s, const Vec3& w_) -> Vec3 {
            const Vec3 x = pos(s);
            require_in_domain(m, x, "parallel_transport");
            const Christoffel G = christoffel_at(m, x);
            const Vec3 xdot = vel(s);
            Vec3 out;
            for (int kk = 0; kk < 3; ++kk) out[kk] = -xdot.dot(G[kk] * w_);
            return out * h;
        };
        const double ds = 1.0 / substeps_per_interval;
        for (int ss = 0; ss < substeps_per_interval; ++ss) {
            const double s = ss * ds;
            const Vec3 k1 = rhs(s, w);
            const Vec3 k2 = rhs(s + 0.5 * ds, w + 0.5 * ds * k1);
            const Vec3 k3 = rhs(s + 0.5 * ds, w + 0.5 * ds * k2);
            const Vec3 k4 = rhs(s + ds, w + ds * k3);
            w += (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }
    return w;
}

} // namespace cmcnet
