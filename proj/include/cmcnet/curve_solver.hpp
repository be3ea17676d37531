#pragma once

#include "cmcnet/manifold.hpp"

#include <vector>

namespace cmcnet {

// Arclength-parametrized solution of the condensation-curve system
//   gamma' = T,  f nabla_T T = Omega r^2 (grad R)^perp,  f' = Omega r^2 <grad R, T>
// with the first integral f = Omega r^2 (R o gamma + c).
struct CondensateCurve {
    struct Sample {
        double t;
        Vec3 point;
        Vec3 tangent;
        double f;
        double fdot;
    };
    std::vector<Sample> samples;
    double c = 0.0;
    double r = 1.0;
    double omega = 1.0;

    double length() const { return samples.empty() ? 0.0 : samples.back().t; }
    Sample at(double t) const; // cubic Hermite between stored samples
};

struct NetworkGraph {
    struct Edge {
        Vec3 start;
        Vec3 direction;     // ignored for terminal launches
        double f0 = 0.0;    // zero only for terminal-vertex launches
        double length = 0.0;
        int start_vertex = -1;
        int end_vertex = -1;
        bool terminal_start = false;
    };
    struct Vertex {
        Vec3 position;
        std::vector<int> edges;
    };
    std::vector<Edge> edges;
    std::vector<Vertex> vertices;
};

struct CurveBlowupError : Error {
    CondensateCurve partial;
    double t_fail;
    CurveBlowupError(const std::string& w, CondensateCurve p, double tf)
        : Error(w), partial(std::move(p)), t_fail(tf) {}
};
struct TerminalUndefinedError : Error {
    explicit TerminalUndefinedError(const std::string& w) : Error(w) {}
};

CondensateCurve shoot_curve(const ChartMetric& m, const Vec3& start, const Vec3& direction,
                            double f0, double r, double omega, double length,
                            const num::OdeOptions& opts = {});

// Power-series launch off the f(0) = 0 singularity at a terminal vertex.
struct TerminalLaunch {
    Vec3 direction;        // -grad R / |grad R|
    Vec3 gamma2, gamma3;   // curve series coefficients
    double f1, f2, f3;     // neck-size series coefficients
    double delta;          // handoff parameter
    Vec3 point_at(const Vec3& p, double t) const;
    Vec3 tangent_at(double t) const;
    double f_at(double t) const;
};
TerminalLaunch terminal_start_expansion(const ChartMetric& m, const Vec3& p, double r,
                                        double omega, double delta);

// Eq. (1.3b) vertex balance: sum_i (f_i(0) + Omega r^3 <grad R(p), T_i>) T_i - Omega r^3 grad R(p).
struct IncidentEdge {
    Vec3 direction; // unit tangent at p, pointing away from p
    double f0;
};
Vec3 vertex_balance_residual(const ChartMetric& m, const Vec3& p,
                             const std::vector<IncidentEdge>& edges, double r, double omega);

// Variational functional int (|gamma'|^2 + Omega^2 r^4 (R o gamma + c)^2) dt
// over a sampled parametrized path.
using SampledPath = std::vector<std::pair<double, Vec3>>;
double functional_value(const ChartMetric& m, const SampledPath& path, double r, double omega,
                        double c);

// max_V |d/ds F(gamma + s V)|_{s=0}| / |V|_{L^2} over seeded bump fields.
double euler_lagrange_residual(const ChartMetric& m, const SampledPath& path, double r,
                               double omega, double c, std::uint64_t seed = 2025,
                               int n_fields = 32);

// Reparametrize a solution so that |sigma'| = f; critical points of the
// functional live in this parametrization.
SampledPath sigma_reparametrization(const CondensateCurve& curve, int n_samples = 801);

enum class CurveBoundaryCondition { FixedEndpoints, FreeEndpoints };

// Singular values (ascending) of the discretized linearization of the curve
// system about a solution, with respect to normal perturbation fields.
std::vector<double> nondegeneracy_spectrum(const ChartMetric& m, const CondensateCurve& curve,
                                           CurveBoundaryCondition bc, int n_nodes = 48);

} // namespace cmcnet
