#include "cmcnet/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cmcnet::num {

namespace {
constexpr int kTab = 10;
constexpr double kCon = 1.4;
constexpr double kCon2 = kCon * kCon;
constexpr double kSafe = 2.0;
} // namespace

DerivResult ridders_derivative(const std::function<double(double)>& f, double x, double h0) {
    double v, e;
    auto wrap = [&](double t, double* out) { *out = f(t); };
    ridders_derivative_vec(wrap, x, h0, 1, &v, &e);
    return {v, e};
}

// Shared Ridders driver: `sample(h, out)` writes the n raw difference-quotient
// values at stencil width h; the tableau extrapolates h -> 0.
static void ridders_driver(const std::function<void(double, double*)>& sample, double h0, int n,
                           double* value, double* error) {
    std::vector<std::vector<double>> a(kTab, std::vector<double>(kTab * n));
    std::vector<double> best(n), err(n, 1e300);
    double hh = h0;
    sample(hh, &a[0][0]);
    std::memcpy(best.data(), &a[0][0], n * sizeof(double));
    std::vector<bool> frozen(n, false);
    for (int i = 1; i < kTab; ++i) {
        hh /= kCon;
        sample(hh, &a[0][i * n]);
        double fac = kCon2;
        for (int j = 1; j <= i; ++j) {
            for (int k = 0; k < n; ++k) {
                double cur = a[j - 1][i * n + k];
                double prev = a[j - 1][(i - 1) * n + k];
                double ext = (cur * fac - prev) / (fac - 1.0);
                a[j][i * n + k] = ext;
                double errt = std::max(std::fabs(ext - cur), std::fabs(ext - prev));
                if (!frozen[k] && errt <= err[k]) {
                    err[k] = errt;
                    best[k] = ext;
                }
            }
            fac *= kCon2;
        }
        for (int k = 0; k < n; ++k)
            if (std::fabs(a[i][i * n + k] - a[i - 1][(i - 1) * n + k]) >= kSafe * err[k])
                frozen[k] = true;
        if (std::all_of(frozen.begin(), frozen.end(), [](bool b) { return b; })) break;
    }
    std::memcpy(value, best.data(), n * sizeof(double));
    std::memcpy(error, err.data(), n * sizeof(double));
}

void ridders_derivative_vec(const std::function<void(double, double*)>& f, double x, double h0,
                            int n, double* value, double* error) {
    std::vector<double> fp(n), fm(n);
    auto sample = [&](double h, double* out) {
        f(x + h, fp.data());
        f(x - h, fm.data());
        for (int k = 0; k < n; ++k) out[k] = (fp[k] - fm[k]) / (2.0 * h);
    };
    ridders_driver(sample, h0, n, value, error);
}

void ridders_second_derivative_vec(const std::function<void(double, double*)>& f, double x,
                                   double h0, int n, double* value, double* error) {
    std::vector<double> fp(n), fm(n), f0(n);
    f(x, f0.data());
    auto sample = [&](double h, double* out) {
        f(x + h, fp.data());
        f(x - h, fm.data());
        for (int k = 0; k < n; ++k) out[k] = (fp[k] - 2.0 * f0[k] + fm[k]) / (h * h);
    };
    ridders_driver(sample, h0, n, value, error);
}

void ridders_mixed_derivative_vec(const std::function<void(double, double, double*)>& f,
                                  double h0, int n, double* value, double* error) {
    std::vector<double> fpp(n), fpm(n), fmp(n), fmm(n);
    auto sample = [&](double h, double* out) {
        f(h, h, fpp.data());
        f(h, -h, fpm.data());
        f(-h, h, fmp.data());
        f(-h, -h, fmm.data());
        for (int k = 0; k < n; ++k)
            out[k] = (fpp[k] - fpm[k] - fmp[k] + fmm[k]) / (4.0 * h * h);
    };
    ridders_driver(sample, h0, n, value, error);
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)
// ---------------------------------------------------------------------------

namespace {
// Butcher tableau
const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
const double a21 = 1.0 / 5;
const double a31 = 3.0 / 40, a32 = 9.0 / 40;
const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
             a54 = -212.0 / 729;
const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
             a65 = -5103.0 / 18656;
const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
             b6 = 11.0 / 84;
const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
             e6 = 22.0 / 525, e7 = -1.0 / 40;
} // namespace

OdeResult integrate(const OdeRhs& rhs, std::vector<double> y, double t0, double t1,
                    const OdeOptions& opts, const OdeObserver& observer) {
    OdeResult res;
    const int n = static_cast<int>(y.size());
    const double dir = (t1 >= t0) ? 1.0 : -1.0;
    double t = t0;
    double h = std::min(std::fabs(opts.initial_step), std::fabs(t1 - t0)) * dir;
    if (h == 0.0) {
        res.y = std::move(y);
        res.t = t0;
        res.ok = true;
        return res;
    }

    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), yt(n), ynew(n), yerr(n);
    std::vector<double> yprev(n);
    rhs(t, y.data(), k1.data());

    for (long step = 0; step < opts.max_steps; ++step) {
        if ((t - t1) * dir >= 0.0) {
            res.y = std::move(y);
            res.t = t;
            res.steps = step;
            res.ok = true;
            return res;
        }
        bool last = false;
        if ((t + h - t1) * dir > 0.0) {
            h = t1 - t;
            last = true;
        }

        for (int i = 0; i < n; ++i) yt[i] = y[i] + h * a21 * k1[i];
        rhs(t + c2 * h, yt.data(), k2.data());
        for (int i = 0; i < n; ++i) yt[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        rhs(t + c3 * h, yt.data(), k3.data());
        for (int i = 0; i < n; ++i) yt[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        rhs(t + c4 * h, yt.data(), k4.data());
        for (int i = 0; i < n; ++i)
            yt[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        rhs(t + c5 * h, yt.data(), k5.data());
        for (int i = 0; i < n; ++i)
            yt[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        rhs(t + h, yt.data(), k6.data());
        for (int i = 0; i < n; ++i)
            ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        rhs(t + h, ynew.data(), k7.data());
        for (int i = 0; i < n; ++i)
            yerr[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                           e7 * k7[i]);

        double errnorm = 0.0;
        for (int i = 0; i < n; ++i) {
            double sc = opts.atol + opts.rtol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
            double r = yerr[i] / sc;
            errnorm += r * r;
        }
        errnorm = std::sqrt(errnorm / n);

        if (errnorm <= 1.0) {
            yprev = y;
            double tprev = t;
            t += h;
            y = ynew;
            std::swap(k1, k7); // FSAL
            if (observer && !observer(tprev, yprev.data(), t, y.data())) {
                res.y = std::move(y);
                res.t = t;
                res.steps = step;
                res.ok = false;
                res.message = "aborted by observer";
                return res;
            }
            double fac = 0.9 * std::pow(std::max(errnorm, 1e-10), -0.2);
            h *= std::clamp(fac, 0.2, 5.0);
            if (last && (t - t1) * dir >= 0.0) {
                res.y = std::move(y);
                res.t = t;
                res.steps = step + 1;
                res.ok = true;
                return res;
            }
        } else {
            double fac = 0.9 * std::pow(errnorm, -0.2);
            h *= std::clamp(fac, 0.1, 1.0);
        }
        if (std::fabs(h) < opts.min_step) {
            res.y = std::move(y);
            res.t = t;
            res.steps = step;
            res.message = "step size underflow";
            return res;
        }
    }
    res.y = std::move(y);
    res.t = t;
    res.steps = opts.max_steps;
    res.message = "max step count exceeded";
    return res;
}

// ---------------------------------------------------------------------------
// Quadrature / polynomials
// ---------------------------------------------------------------------------

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / pp;
            x -= dx;
            if (std::fabs(dx) < 1e-15) break;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
}

void legendre_all(int L, double t, std::vector<double>& P) {
    P.assign(L + 1, 0.0);
    P[0] = 1.0;
    if (L >= 1) P[1] = t;
    for (int l = 2; l <= L; ++l) P[l] = ((2.0 * l - 1.0) * t * P[l - 1] - (l - 1.0) * P[l - 2]) / l;
}

double real_sph_harmonic(int l, int m, const Vec3& u) {
    // associated Legendre P_l^m(cos theta) with Condon-Shortley phase omitted
    const double ct = std::clamp(u.z(), -1.0, 1.0);
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    const int am = std::abs(m);
    // P_am^am
    double pmm = 1.0;
    for (int k = 1; k <= am; ++k) pmm *= (2.0 * k - 1.0) * st;
    double plm;
    if (l == am) {
        plm = pmm;
    } else {
        double pm1 = pmm, p = ct * (2.0 * am + 1.0) * pmm;
        for (int ll = am + 2; ll <= l; ++ll) {
            double pn = ((2.0 * ll - 1.0) * ct * p - (ll + am - 1.0) * pm1) / (ll - am);
            pm1 = p;
            p = pn;
        }
        plm = p;
    }
    double lognorm = 0.0;
    for (int k = l - am + 1; k <= l + am; ++k) lognorm += std::log(static_cast<double>(k));
    const double norm = std::sqrt((2.0 * l + 1.0) / (4.0 * M_PI) * std::exp(-lognorm));
    const double phi = std::atan2(u.y(), u.x());
    if (m == 0) return norm * plm;
    const double fac = std::sqrt(2.0) * norm * plm;
    return (m > 0) ? fac * std::cos(am * phi) : fac * std::sin(am * phi);
}

// ---------------------------------------------------------------------------
// Cutoffs
// ---------------------------------------------------------------------------

double smoothstep5(double s) {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}
double smoothstep5_d1(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return 30.0 * s * s * (1.0 - s) * (1.0 - s);
}
double smoothstep5_d2(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
}

double cutoff_chi(double s) { return 1.0 - smoothstep5(2.0 * s - 1.0); }
double cutoff_chi_d1(double s) { return -2.0 * smoothstep5_d1(2.0 * s - 1.0); }
double cutoff_chi_d2(double s) { return -4.0 * smoothstep5_d2(2.0 * s - 1.0); }

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double fit_order(const std::vector<double>& h, const std::vector<double>& err) {
    std::vector<double> lx, ly;
    for (size_t i = 0; i < h.size(); ++i) {
        if (err[i] <= 0.0) continue;
        lx.push_back(std::log(h[i]));
        ly.push_back(std::log(err[i]));
    }
    if (lx.size() < 2) return 0.0;
    return fit_slope(lx, ly);
}

// ---------------------------------------------------------------------------
// Rng: xoshiro256++ with pinned transforms
// ---------------------------------------------------------------------------

static inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

Rng::Rng(std::uint64_t seed) {
    // splitmix64 expansion
    std::uint64_t z = seed;
    for (int i = 0; i < 4; ++i) {
        z += 0x9e3779b97f4a7c15ULL;
        std::uint64_t w = z;
        w = (w ^ (w >> 30)) * 0xbf58476d1ce4e5b9ULL;
        w = (w ^ (w >> 27)) * 0x94d049bb133111ebULL;
        s_[i] = w ^ (w >> 31);
    }
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double a, double b) { return a + (b - a) * uniform(); }

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
}

Vec3 Rng::unit_vector() {
    const double z = uniform(-1.0, 1.0);
    const double phi = uniform(0.0, 2.0 * M_PI);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {s * std::cos(phi), s * std::sin(phi), z};
}

} // namespace cmcnet::num
