#include "cmcnet/curve_solver.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace cmcnet {

CondensateCurve::Sample CondensateCurve::at(double t) const {
    if (samples.empty()) throw Error("empty curve");
    if (t <= samples.front().t) return samples.front();
    if (t >= samples.back().t) return samples.back();
    auto it = std::lower_bound(samples.begin(), samples.end(), t,
                               [](const Sample& s, double tv) { return s.t < tv; });
    const Sample& s1 = *it;
    const Sample& s0 = *(it - 1);
    const double h = s1.t - s0.t;
    const double u = (t - s0.t) / h;
    const double u2 = u * u, u3 = u2 * u;
    const double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u;
    const double h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
    Sample out;
    out.t = t;
    out.point = h00 * s0.point + h10 * h * s0.tangent + h01 * s1.point + h11 * h * s1.tangent;
    // tangent by the derivative of the Hermite interpolant
    const double d00 = (6 * u2 - 6 * u) / h, d10 = 3 * u2 - 4 * u + 1;
    const double d01 = (6 * u - 6 * u2) / h, d11 = 3 * u2 - 2 * u;
    out.tangent = d00 * s0.point + d10 * s0.tangent + d01 * s1.point + d11 * s1.tangent;
    out.f = h00 * s0.f + h10 * h * s0.fdot + h01 * s1.f + h11 * h * s1.fdot;
    out.fdot = d00 * s0.f + d10 * s0.fdot + d01 * s1.f + d11 * s1.fdot;
    return out;
}

namespace {

struct CurveRhs {
    const ChartMetric& m;
    double r, omega;

    void operator()(double, const double* y, double* dy) const {
        const Vec3 x(y[0], y[1], y[2]);
        const Vec3 T(y[3], y[4], y[5]);
        const double f = y[6];
        const Mat3 g = m.eval(x);
        const Christoffel G = christoffel_at(m, x);
        const Vec3 gradR = grad_scalar_curvature(m, x);
        const double dRT = T.dot(g * gradR);
        const Vec3 perp = gradR - dRT * T;
        const Vec3 acc = -contract(G, T, T) + (omega * r * r / f) * perp;
        dy[0] = T[0];
        dy[1] = T[1];
        dy[2] = T[2];
        dy[3] = acc[0];
        dy[4] = acc[1];
        dy[5] = acc[2];
        dy[6] = omega * r * r * dRT;
    }
};

CondensateCurve integrate_curve(const ChartMetric& m, const Vec3& start, const Vec3& T0, double f0,
                                double fdot0, double r, double omega, double c, double t0,
                                double length, const num::OdeOptions& opts,
                                std::vector<CondensateCurve::Sample> head) {
    CondensateCurve curve;
    curve.c = c;
    curve.r = r;
    curve.omega = omega;
    curve.samples = std::move(head);
    curve.samples.push_back({t0, start, T0, f0, fdot0});

    CurveRhs rhs{m, r, omega};
    const double f_stop = 1e-7 * (1.0 + f0);
    std::vector<double> y0 = {start[0], start[1], start[2], T0[0], T0[1], T0[2], f0};
    bool blown = false;
    double blow_t = 0.0;
    Vec3 exit_point = Vec3::Zero();
    bool exited = false;
    auto obs = [&](double, const double*, double t1, const double* y1) {
        const Vec3 x(y1[0], y1[1], y1[2]);
        if (!m.domain.contains(x)) {
            exited = true;
            exit_point = x;
            return false;
        }
        if (y1[6] <= f_stop) {
            blown = true;
            blow_t = t1;
            return false;
        }
        const Vec3 T(y1[3], y1[4], y1[5]);
        const Mat3 g = m.eval(x);
        const Vec3 gradR = grad_scalar_curvature(m, x);
        curve.samples.push_back({t1, x, T, y1[6], omega * r * r * T.dot(g * gradR)});
        return true;
    };
    auto res = num::integrate([&rhs](double t, const double* y, double* dy) { rhs(t, y, dy); }, y0,
                              t0, length, opts, obs);
    if (exited) throw ChartDomainError("shoot_curve: curve exited the chart domain", exit_point);
    if (blown)
        throw CurveBlowupError("shoot_curve: neck-size function crossed zero at t = " +
                                   std::to_string(blow_t),
                               curve, blow_t);
    if (!res.ok) {
        // a stalled integrator with f collapsing is the same singular blow-up
        if (res.message == "step size underflow" && res.y[6] < 0.05 * (f0 + 1e-12))
            throw CurveBlowupError("shoot_curve: neck-size function collapsed at t = " +
                                       std::to_string(res.t),
                                   curve, res.t);
        throw Error("shoot_curve: " + res.message);
    }
    return curve;
}

} // namespace

CondensateCurve shoot_curve(const ChartMetric& m, const Vec3& start, const Vec3& direction,
                            double f0, double r, double omega, double length,
                            const num::OdeOptions& opts) {
    if (!m.domain.contains(start)) throw ChartDomainError("shoot_curve: start outside domain", start);
    const Mat3 g = metric_checked(m, start);
    if (f0 < 0.0) throw Error("shoot_curve: f0 must be nonnegative");
    if (f0 == 0.0) {
        // terminal launch: requires direction parallel to -grad R
        const Vec3 gradR = grad_scalar_curvature(m, start);
        if (norm(g, gradR) < 1e-12)
            throw TerminalUndefinedError("terminal launch undefined: grad R vanishes at start");
        const Vec3 want = -gradR / norm(g, gradR);
        if (direction.norm() > 0.0) {
            const Vec3 dir = direction / norm(g, direction);
            if (inner(g, dir, want) < 1.0 - 1e-6)
                throw Error("shoot_curve: terminal launch direction must be parallel to -grad R");
        }
        const double delta = 1e-3 * length;
        TerminalLaunch tl = terminal_start_expansion(m, start, r, omega, delta);
        const double c = -scalar_curvature(m, start);
        std::vector<CondensateCurve::Sample> head;
        const int n_head = 8;
        for (int i = 0; i < n_head; ++i) {
            const double t = delta * i / n_head;
            head.push_back({t, tl.point_at(start, t), tl.tangent_at(t), tl.f_at(t),
                            tl.f1 + tl.f2 * t + 0.5 * tl.f3 * t * t});
        }
        const Vec3 xh = tl.point_at(start, delta);
        const Vec3 Th = tl.tangent_at(delta);
        const double fh = tl.f_at(delta);
        return integrate_curve(m, xh, Th, fh, tl.f1 + tl.f2 * delta + 0.5 * tl.f3 * delta * delta,
                               r, omega, c, delta, length, opts, std::move(head));
    }
    const Vec3 T0 = direction / norm(g, direction);
    const double c = f0 / (omega * r * r) - scalar_curvature(m, start);
    const Mat3 gs = m.eval(start);
    const Vec3 gradR0 = grad_scalar_curvature(m, start);
    return integrate_curve(m, start, T0, f0, omega * r * r * T0.dot(gs * gradR0), r, omega, c, 0.0,
                           length, opts, {});
}

Vec3 TerminalLaunch::point_at(const Vec3& p, double t) const {
    return p + t * direction + 0.5 * t * t * gamma2 + t * t * t / 6.0 * gamma3;
}
Vec3 TerminalLaunch::tangent_at(double t) const {
    return direction + t * gamma2 + 0.5 * t * t * gamma3;
}
double TerminalLaunch::f_at(double t) const {
    return f1 * t + 0.5 * f2 * t * t + f3 * t * t * t / 6.0;
}

TerminalLaunch terminal_start_expansion(const ChartMetric& m, const Vec3& p, double r,
                                        double omega, double delta) {
    const Mat3 g = metric_checked(m, p);
    const Vec3 gradR = grad_scalar_curvature(m, p);
    const double gnorm = norm(g, gradR);
    if (gnorm < 1e-12)
        throw TerminalUndefinedError("terminal_start_expansion: grad R vanishes at p");
    TerminalLaunch tl;
    tl.direction = -gradR / gnorm;
    tl.delta = delta;
    const double or2 = omega * r * r;
    tl.f1 = or2 * tl.direction.dot(g * gradR); // = -omega r^2 |grad R|
    if (tl.f1 <= 0.0)
        throw Error("terminal_start_expansion: f'(0) <= 0; the launch needs omega * <grad R, "
                    "direction> < 0 (omega sign)");

    // Collocation for the remaining series coefficients: unknowns
    // (gamma2, gamma3, f2, f3), equations from the regularized system
    //   f (T' + Gamma(T,T)) - omega r^2 (grad R)^perp = 0   (vector, 2 points)
    //   f' - omega r^2 <grad R, T> = 0                      (scalar, 2 points)
    Eigen::VectorXd u = Eigen::VectorXd::Zero(8); // g2(3), g3(3), f2, f3
    auto residual = [&](const Eigen::VectorXd& v) {
        TerminalLaunch t2 = tl;
        t2.gamma2 = Vec3(v[0], v[1], v[2]);
        t2.gamma3 = Vec3(v[3], v[4], v[5]);
        t2.f2 = v[6];
        t2.f3 = v[7];
        Eigen::VectorXd out(8);
        int row = 0;
        for (double tc : {delta / 3.0, 2.0 * delta / 3.0}) {
            const Vec3 x = t2.point_at(p, tc);
            const Vec3 T = t2.tangent_at(tc);
            const Vec3 Tp = t2.gamma2 + tc * t2.gamma3;
            const double f = t2.f_at(tc);
            const double fp = t2.f1 + t2.f2 * tc + 0.5 * t2.f3 * tc * tc;
            const Mat3 gx = m.eval(x);
            const Christoffel G = christoffel_at(m, x);
            const Vec3 gr = grad_scalar_curvature(m, x);
            const double dRT = T.dot(gx * gr) / T.dot(gx * T);
            const Vec3 perp = gr - dRT * T;
            const Vec3 veq = f * (Tp + contract(G, T, T)) - omega * r * r * perp;
            out[row++] = veq[0] / delta;
            out[row++] = veq[1] / delta;
            out[row++] = veq[2] / delta;
            out[row++] = fp - omega * r * r * T.dot(gx * gr);
        }
        return out;
    };
    for (int it = 0; it < 30; ++it) {
        Eigen::VectorXd f0v = residual(u);
        if (f0v.norm() < 1e-13) break;
        Eigen::MatrixXd J(8, 8);
        const double hstep = 1e-7;
        for (int j = 0; j < 8; ++j) {
            Eigen::VectorXd up = u, um = u;
            up[j] += hstep;
            um[j] -= hstep;
            J.col(j) = (residual(up) - residual(um)) / (2 * hstep);
        }
        u -= J.colPivHouseholderQr().solve(f0v);
    }
    tl.gamma2 = Vec3(u[0], u[1], u[2]);
    tl.gamma3 = Vec3(u[3], u[4], u[5]);
    tl.f2 = u[6];
    tl.f3 = u[7];
    return tl;
}

Vec3 vertex_balance_residual(const ChartMetric& m, const Vec3& p,
                             const std::vector<IncidentEdge>& edges, double r, double omega) {
    if (edges.size() < 2) throw Error("vertex_balance_residual: need at least 2 incident edges");
    const Mat3 g = metric_checked(m, p);
    const Vec3 gradR = grad_scalar_curvature(m, p);
    const double or3 = omega * r * r * r;
    Vec3 out = -or3 * gradR;
    for (const auto& e : edges) {
        const double coef = e.f0 + or3 * e.direction.dot(g * gradR);
        out += coef * e.direction;
    }
    return out;
}

namespace {

// derivative of sampled positions by 4th-order central differences
std::vector<Vec3> path_derivative(const SampledPath& path) {
    const int n = static_cast<int>(path.size());
    std::vector<Vec3> d(n);
    const double h = (path.back().first - path.front().first) / (n - 1);
    for (int i = 0; i < n; ++i) {
        if (i >= 2 && i + 2 < n) {
            d[i] = (-path[i + 2].second + 8 * path[i + 1].second - 8 * path[i - 1].second +
                    path[i - 2].second) /
                   (12 * h);
        } else if (i == 0) {
            d[i] = (-3 * path[0].second + 4 * path[1].second - path[2].second) / (2 * h);
        } else if (i == n - 1) {
            d[i] = (3 * path[n - 1].second - 4 * path[n - 2].second + path[n - 3].second) / (2 * h);
        } else {
            d[i] = (path[i + 1].second - path[i - 1].second) / (2 * h);
        }
    }
    return d;
}

double simpson(const std::vector<double>& vals, double h) {
    const int n = static_cast<int>(vals.size());
    double s = 0.0;
    int i = 0;
    for (; i + 2 < n; i += 2) s += h / 3.0 * (vals[i] + 4 * vals[i + 1] + vals[i + 2]);
    if (i + 1 < n) s += 0.5 * h * (vals[i] + vals[i + 1]); // trapezoid tail for even counts
    return s;
}

} // namespace

double functional_value(const ChartMetric& m, const SampledPath& path, double r, double omega,
                        double c) {
    if (path.size() < 5) throw Error("functional_value: path too sparse");
    const int n = static_cast<int>(path.size());
    const double h = (path.back().first - path.front().first) / (n - 1);
    auto d = path_derivative(path);
    std::vector<double> vals(n);
    const double w = omega * omega * r * r * r * r;
    for (int i = 0; i < n; ++i) {
        const Mat3 g = m.eval(path[i].second);
        const double Rc = scalar_curvature(m, path[i].second) + c;
        vals[i] = d[i].dot(g * d[i]) + w * Rc * Rc;
    }
    return simpson(vals, h);
}

double euler_lagrange_residual(const ChartMetric& m, const SampledPath& path, double r,
                               double omega, double c, std::uint64_t seed, int n_fields) {
    const int n = static_cast<int>(path.size());
    const double t0 = path.front().first, t1 = path.back().first;
    const double h = (t1 - t0) / (n - 1);
    num::Rng rng(seed);
    double worst = 0.0;
    for (int fld = 0; fld < n_fields; ++fld) {
        const double tc = rng.uniform(t0 + 0.15 * (t1 - t0), t0 + 0.85 * (t1 - t0));
        const double wdt = rng.uniform(0.08, 0.25) * (t1 - t0);
        const Vec3 u = rng.unit_vector();
        std::vector<Vec3> V(n, Vec3::Zero());
        double vnorm2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double s = (path[i].first - tc) / wdt;
            if (std::fabs(s) < 1.0) V[i] = u * std::exp(-1.0 / (1.0 - s * s));
            vnorm2 += V[i].squaredNorm() * h;
        }
        const double vnorm = std::sqrt(vnorm2);
        if (vnorm < 1e-14) continue;
        const double ds = 1e-3;
        SampledPath pp = path, pm = path;
        for (int i = 0; i < n; ++i) {
            pp[i].second += ds * V[i];
            pm[i].second -= ds * V[i];
        }
        const double dF =
            (functional_value(m, pp, r, omega, c) - functional_value(m, pm, r, omega, c)) /
            (2 * ds);
        worst = std::max(worst, std::fabs(dF) / vnorm);
    }
    return worst;
}

SampledPath sigma_reparametrization(const CondensateCurve& curve, int n_samples) {
    // total sigma-length S = int dt / f by fine trapezoid, then t(s) from the
    // smooth flow dt/ds = f(t) so the output has no interpolation kinks
    const int M = 8192;
    const double L = curve.length();
    double S = 0.0;
    double prev_inv = 1.0 / curve.at(0.0).f;
    for (int i = 1; i <= M; ++i) {
        const double inv = 1.0 / curve.at(L * i / M).f;
        S += 0.5 * (prev_inv + inv) * (L / M);
        prev_inv = inv;
    }
    SampledPath out;
    out.reserve(n_samples);
    auto foft = [&](double t) { return curve.at(std::clamp(t, 0.0, L)).f; };
    double t = 0.0;
    const int nsub = 8;
    const double hs = S / (n_samples - 1) / nsub;
    for (int i = 0; i < n_samples; ++i) {
        out.push_back({S * i / (n_samples - 1), curve.at(std::min(t, L)).point});
        if (i + 1 == n_samples) break;
        for (int k = 0; k < nsub; ++k) {
            const double k1 = foft(t);
            const double k2 = foft(t + 0.5 * hs * k1);
            const double k3 = foft(t + 0.5 * hs * k2);
            const double k4 = foft(t + hs * k3);
            t += hs / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        }
    }
    return out;
}

std::vector<double> nondegeneracy_spectrum(const ChartMetric& m, const CondensateCurve& curve,
                                           CurveBoundaryCondition bc, int n_nodes) {
    const double L = curve.length();
    const double h = L / (n_nodes - 1);
    std::vector<Vec3> x0(n_nodes);
    std::vector<Vec3> T0(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
        auto s = curve.at(h * i);
        x0[i] = s.point;
        T0[i] = s.tangent;
    }
    // smooth normal frame along the curve
    std::vector<Vec3> N1(n_nodes), N2(n_nodes);
    {
        const Mat3 g = metric_checked(m, x0[0]);
        Mat3 E = orthonormal_frame(m, x0[0], T0[0]);
        N1[0] = E.col(1);
        N2[0] = E.col(2);
        for (int i = 1; i < n_nodes; ++i) {
            const Mat3 gi = metric_checked(m, x0[i]);
            Vec3 t = T0[i] / norm(gi, T0[i]);
            Vec3 a = N1[i - 1] - inner(gi, N1[i - 1], t) * t;
            a /= norm(gi, a);
            Vec3 b = N2[i - 1] - inner(gi, N2[i - 1], t) * t - inner(gi, N2[i - 1], a) * a;
            b /= norm(gi, b);
            N1[i] = a;
            N2[i] = b;
        }
        (void)g;
    }

    const double or2 = curve.omega * curve.r * curve.r;
    auto residual = [&](const Eigen::VectorXd& xi) {
        std::vector<Vec3> x(n_nodes);
        for (int i = 0; i < n_nodes; ++i)
            x[i] = x0[i] + xi[2 * i] * N1[i] + xi[2 * i + 1] * N2[i];
        Eigen::VectorXd out(2 * (n_nodes - 2));
        for (int i = 1; i + 1 < n_nodes; ++i) {
            const Vec3 D1 = (x[i + 1] - x[i - 1]) / (2 * h);
            const Vec3 D2 = (x[i + 1] - 2 * x[i] + x[i - 1]) / (h * h);
            const Mat3 g = m.eval(x[i]);
            const Christoffel G = christoffel_at(m, x[i]);
            const Vec3 gradR = grad_scalar_curvature(m, x[i]);
            const double f = or2 * (scalar_curvature(m, x[i]) + curve.c);
            const double fdot = or2 * (scalar_curvature(m, x[i + 1]) -
                                       scalar_curvature(m, x[i - 1])) /
                                (2 * h);
            const Vec3 E = f * (D2 + contract(G, D1, D1)) + fdot * D1 - or2 * gradR;
            out[2 * (i - 1)] = inner(g, E, N1[i]);
            out[2 * (i - 1) + 1] = inner(g, E, N2[i]);
        }
        return out;
    };

    const int n_unknown = (bc == CurveBoundaryCondition::FixedEndpoints) ? 2 * (n_nodes - 2)
                                                                         : 2 * n_nodes;
    const int offset = (bc == CurveBoundaryCondition::FixedEndpoints) ? 2 : 0;
    Eigen::VectorXd xi = Eigen::VectorXd::Zero(2 * n_nodes);
    Eigen::VectorXd r0 = residual(xi);
    Eigen::MatrixXd J(r0.size(), n_unknown);
    const double dstep = 1e-6;
    for (int j = 0; j < n_unknown; ++j) {
        Eigen::VectorXd xp = xi, xm = xi;
        xp[offset + j] += dstep;
        xm[offset + j] -= dstep;
        J.col(j) = (residual(xp) - residual(xm)) / (2 * dstep);
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(J);
    std::vector<double> sv(svd.singularValues().data(),
                           svd.singularValues().data() + svd.singularValues().size());
    std::sort(sv.begin(), sv.end());
    return sv;
}

} // namespace cmcnet
