#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>

namespace cmcnet {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Christoffel symbols: christoffel[k](i,j) = Gamma^k_{ij}
using Christoffel = std::array<Mat3, 3>;

// Fully lowered curvature tensor R_{ijkl}
struct Riemann {
    std::array<double, 81> v{};
    double& operator()(int i, int j, int k, int l) { return v[((i * 3 + j) * 3 + k) * 3 + l]; }
    double operator()(int i, int j, int k, int l) const { return v[((i * 3 + j) * 3 + k) * 3 + l]; }
};

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct ChartDomainError : Error {
    Vec3 location;
    ChartDomainError(const std::string& what, const Vec3& x) : Error(what), location(x) {}
};

inline Vec3 contract(const Christoffel& G, const Vec3& a, const Vec3& b) {
    Vec3 out;
    for (int k = 0; k < 3; ++k) out[k] = a.dot(G[k] * b);
    return out;
}

} // namespace cmcnet
