#include <doctest.h>

#include "cmcnet/expression.hpp"
#include "cmcnet/numerics.hpp"

#include <cmath>

using namespace cmcnet;

TEST_CASE("ridders derivative of analytic functions") {
    auto r = num::ridders_derivative([](double x) { return std::sin(x); }, 0.7, 0.1);
    CHECK(std::fabs(r.value - std::cos(0.7)) < 1e-11);

    double v, e;
    auto f = [](double x, double* out) { *out = std::exp(2.0 * x); };
    num::ridders_second_derivative_vec(f, 0.3, 0.05, 1, &v, &e);
    CHECK(std::fabs(v - 4.0 * std::exp(0.6)) < 1e-7);
}

TEST_CASE("dopri5 integrates a harmonic oscillator") {
    auto rhs = [](double, const double* y, double* dy) {
        dy[0] = y[1];
        dy[1] = -y[0];
    };
    auto res = num::integrate(rhs, {1.0, 0.0}, 0.0, 10.0);
    REQUIRE(res.ok);
    CHECK(std::fabs(res.y[0] - std::cos(10.0)) < 1e-8);
    CHECK(std::fabs(res.y[1] + std::sin(10.0)) < 1e-8);
}

TEST_CASE("gauss-legendre integrates polynomials exactly") {
    std::vector<double> x, w;
    num::gauss_legendre(8, x, w);
    double s = 0.0;
    for (int i = 0; i < 8; ++i) s += w[i] * std::pow(x[i], 14); // degree 14 < 2*8
    CHECK(std::fabs(s - 2.0 / 15.0) < 1e-14);
}

TEST_CASE("real spherical harmonics are orthonormal") {
    // quadrature: GL in cos(theta) x uniform azimuth
    const int nt = 24, np = 48;
    std::vector<double> x, w;
    num::gauss_legendre(nt, x, w);
    auto dot = [&](int l1, int m1, int l2, int m2) {
        double s = 0.0;
        for (int i = 0; i < nt; ++i) {
            const double ct = x[i], st = std::sqrt(1 - ct * ct);
            for (int j = 0; j < np; ++j) {
                const double phi = 2.0 * M_PI * j / np;
                Vec3 u(st * std::cos(phi), st * std::sin(phi), ct);
                s += w[i] * (2.0 * M_PI / np) * num::real_sph_harmonic(l1, m1, u) *
                     num::real_sph_harmonic(l2, m2, u);
            }
        }
        return s;
    };
    CHECK(std::fabs(dot(0, 0, 0, 0) - 1.0) < 1e-12);
    CHECK(std::fabs(dot(3, 2, 3, 2) - 1.0) < 1e-12);
    CHECK(std::fabs(dot(5, -4, 5, -4) - 1.0) < 1e-12);
    CHECK(std::fabs(dot(3, 2, 3, 1)) < 1e-12);
    CHECK(std::fabs(dot(4, 0, 2, 0)) < 1e-12);
}

TEST_CASE("cutoff chi profile") {
    CHECK(num::cutoff_chi(0.2) == 1.0);
    CHECK(num::cutoff_chi(0.5) == 1.0);
    CHECK(num::cutoff_chi(1.0) == 0.0);
    CHECK(num::cutoff_chi(2.0) == 0.0);
    // monotone non-increasing
    double prev = 1.0;
    for (int i = 0; i <= 100; ++i) {
        double v = num::cutoff_chi(i / 100.0 * 1.2);
        CHECK(v <= prev + 1e-15);
        prev = v;
    }
}

TEST_CASE("expression parsing, evaluation and differentiation") {
    auto e = Expression::parse("0.1*x1 + sin(x2)*x3^2 - exp(-x1/2)");
    Vec3 x(0.3, 1.1, -0.7);
    const double expect = 0.1 * 0.3 + std::sin(1.1) * 0.49 - std::exp(-0.15);
    CHECK(std::fabs(e.eval(x) - expect) < 1e-14);

    auto d2 = e.derivative(1); // cos(x2)*x3^2
    CHECK(std::fabs(d2.eval(x) - std::cos(1.1) * 0.49) < 1e-14);
    auto d1 = e.derivative(0);
    CHECK(std::fabs(d1.eval(x) - (0.1 + 0.5 * std::exp(-0.15))) < 1e-14);

    CHECK_THROWS_AS(Expression::parse("x4 + 1"), ExpressionError);
    CHECK_THROWS_AS(Expression::parse("sin(x1"), ExpressionError);
}

TEST_CASE("rng determinism") {
    num::Rng r1(42), r2(42);
    for (int i = 0; i < 100; ++i) CHECK(r1.next_u64() == r2.next_u64());
    num::Rng r3(42);
    const double a = r3.normal();
    num::Rng r4(42);
    CHECK(a == r4.normal());
}
