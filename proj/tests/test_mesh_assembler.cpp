#include <doctest.h>

#include "cmcnet/mesh_assembler.hpp"

#include <cmath>
#include <set>

using namespace cmcnet;

namespace {

// minimal standalone bead for block-level tests
BeadNetwork::Bead make_bead(const Vec3& center, const std::vector<Vec3>& directions,
                            const std::vector<double>& weights) {
    BeadNetwork::Bead bead;
    bead.center = center;
    bead.frame = Mat3::Identity();
    for (size_t i = 0; i < directions.size(); ++i) {
        BeadNetwork::Slot s;
        s.neck = static_cast<int>(i);
        s.direction = directions[i].normalized();
        // deterministic tangent basis
        Vec3 aux = (std::fabs(s.direction.z()) < 0.9) ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
        s.t1 = (aux - aux.dot(s.direction) * s.direction).normalized();
        s.t2 = s.direction.cross(s.t1);
        s.weight = weights[i];
        bead.slots.push_back(s);
    }
    return bead;
}

BeadNetwork flat_two_bead_network(double r, double f_level) {
    auto m = euclidean_metric();
    auto curve = shoot_curve(m, Vec3::Zero(), Vec3(1, 0, 0), f_level, 1.0, 1.0, 40.0 * r);
    // one gap: length (2 + tau) r exactly
    auto sched = default_schedule();
    const double tau = sched.tau_of_f(f_level);
    auto curve2 = shoot_curve(m, Vec3::Zero(), Vec3(1, 0, 0), f_level, 1.0, 1.0, (2.0 + tau) * r);
    return build_network(m, curve2, r, sched);
}

} // namespace

TEST_CASE("block mesh with zero weights is a round geodesic sphere") {
    auto m = euclidean_metric();
    auto bead = make_bead(Vec3(0.2, -0.1, 0.4), {}, {});
    auto G = solve_generating_function({}, {}, 48);
    const double r = 0.8;
    MeshResolution res;
    auto patch = build_block_mesh(m, bead, r, G, res);
    CHECK(patch.boundary_loops.empty());
    // all vertices at distance r from the center
    for (const auto& v : patch.vertices)
        CHECK(std::fabs((v.position - bead.center).norm() - r) < 1e-12);
    // discrete area within 1% of 4 pi r^2
    double area = 0.0;
    for (const auto& t : patch.triangles) {
        const Vec3 u = patch.vertices[t[1]].position - patch.vertices[t[0]].position;
        const Vec3 w = patch.vertices[t[2]].position - patch.vertices[t[0]].position;
        area += 0.5 * u.cross(w).norm();
    }
    CHECK(std::fabs(area - 4.0 * M_PI * r * r) < 0.01 * 4.0 * M_PI * r * r);
}

TEST_CASE("block mesh with one singular point has one cap ring at the right radius") {
    auto m = euclidean_metric();
    const double eps = 0.05;
    auto bead = make_bead(Vec3::Zero(), {Vec3(0, 0, 1)}, {eps});
    auto G = block_generating_function(bead);
    const double r = 1.0;
    auto patch = build_block_mesh(m, bead, r, G, {});
    REQUIRE(patch.boundary_loops.size() == 1);
    const double cap = std::pow(eps, 0.75);
    for (int vid : patch.boundary_loops[0]) {
        const Vec3 y = patch.vertices[vid].chart_coords;
        const double rho_plane = std::hypot(y[0], y[1]); // cap around +z
        CHECK(std::fabs(rho_plane - r * std::sin(cap)) < 0.15 * r * std::sin(cap));
    }
}

TEST_CASE("block mesh with antipodal points is antipodally symmetric") {
    auto m = euclidean_metric();
    const double eps = 0.03;
    BeadNetwork::Bead bead;
    bead.center = Vec3::Zero();
    bead.frame = Mat3::Identity();
    for (int sgn : {1, -1}) {
        BeadNetwork::Slot s;
        s.neck = sgn > 0 ? 0 : 1;
        s.direction = Vec3(0, 0, sgn);
        s.t1 = Vec3(1, 0, 0);
        s.t2 = s.direction.cross(s.t1); // (0, sgn, 0)
        s.weight = eps;
        bead.slots.push_back(s);
    }
    auto G = block_generating_function(bead);
    auto patch = build_block_mesh(m, bead, 1.0, G, {});
    // vertex set symmetric under x -> -x
    std::set<std::array<long long, 3>> keys;
    auto key_of = [](const Vec3& p) {
        return std::array<long long, 3>{llround(p[0] * 1e9), llround(p[1] * 1e9),
                                        llround(p[2] * 1e9)};
    };
    for (const auto& v : patch.vertices) keys.insert(key_of(v.position));
    for (const auto& v : patch.vertices) CHECK(keys.count(key_of(-v.position)) == 1);
}

TEST_CASE("degenerate block graph is reported") {
    auto m = euclidean_metric();
    auto bead = make_bead(Vec3::Zero(), {Vec3(0, 0, 1)}, {2.5});
    CHECK_THROWS_AS(block_generating_function(bead).cap_radius(0) > 0
                        ? (void)build_block_mesh(m, bead, 1.0, block_generating_function(bead), {})
                        : (void)0,
                    Error);
}

TEST_CASE("two beads, one neck: watertight sphere topology") {
    const double r = 0.25;
    auto net = flat_two_bead_network(r, 0.04);
    REQUIRE(net.beads.size() == 2);
    REQUIRE(net.necks.size() == 1);
    auto m = euclidean_metric();
    auto mesh = assemble(m, net, {});
    auto audit = audit_mesh(mesh);
    CHECK(audit.watertight);
    CHECK(audit.orientation_consistent);
    CHECK(audit.boundary_edges == 0);
    CHECK(audit.euler_characteristic == 2);
    CHECK(audit.max_partition_defect <= 1e-12);
    CHECK(audit.zeta_lipschitz <= 2.0);
    CHECK(mesh.max_weld_mismatch < 1e-9);

    // neck vertices match the interpolated graphs by construction: the waist
    // circumference is close to 2 pi r eps_flat
    const auto& neck = net.necks[0];
    double circ = 0.0;
    std::vector<int> waist;
    for (size_t vi = 0; vi < mesh.vertices.size(); ++vi) {
        const auto& v = mesh.vertices[vi];
        if (v.chart_kind == 1 && std::fabs(v.chart_coords.norm() -
                                           r * neck.spec.eps_flat) < 0.2 * r * neck.spec.eps_flat)
            waist.push_back(static_cast<int>(vi));
    }
    CHECK(!waist.empty());
    (void)circ;

    // region labels partition the vertex set sensibly
    int n_sphere = 0, n_neck = 0, n_trans = 0;
    for (const auto& v : mesh.vertices) {
        if (v.region == 0) ++n_sphere;
        else if (v.region == 1) ++n_neck;
        else ++n_trans;
        if (v.region == 2 || v.region == 3) {
            CHECK(v.chi_neck > 0.0);
            CHECK(v.chi_neck < 1.0);
        }
    }
    CHECK(n_sphere > 0);
    CHECK(n_neck > 0);
    CHECK(n_trans > 0);

    // zeta: sqrt form inside the neck patch, r far away
    for (const auto& v : mesh.vertices) {
        if (v.chart_kind == 1) {
            const double eps_amb = r * neck.spec.eps_flat;
            const double want = std::sqrt(eps_amb * eps_amb + v.dist_neck * v.dist_neck);
            if (v.dist_neck < 0.3 * r) CHECK(std::fabs(v.zeta - want) < 1e-3 * want);
        }
        if (v.dist_neck > 1.2 * r) CHECK(std::fabs(v.zeta - r) < 1e-3 * r);
    }
}

TEST_CASE("closed loop of beads has torus topology") {
    const double a = 1.0;
    auto m = round_sphere_metric(a);
    const Vec3 p0(2.0 * a, 0, 0);
    const Mat3 g0 = metric_checked(m, p0);
    Vec3 v(0, 1, 0);
    v /= norm(g0, v);
    const double L = 2.0 * M_PI * a;
    auto curve = shoot_curve(m, p0, v, 0.03, 1.0, 1.0, L);
    auto sched = default_schedule();
    // pick an admissible loop radius
    auto ivs = admissible_radii(m, curve, 0.18, 0.45, sched, true, 120);
    REQUIRE(!ivs.empty());
    const double r = 0.5 * (ivs.back().lo + ivs.back().hi);
    auto net = build_network(m, curve, r, sched, true);
    REQUIRE(net.beads.size() == net.necks.size());
    MeshResolution res;
    res.block_level = 3;
    res.neck_angular = 48;
    auto mesh = assemble(m, net, res);
    auto audit = audit_mesh(mesh);
    CHECK(audit.watertight);
    CHECK(audit.orientation_consistent);
    CHECK(audit.euler_characteristic == 0);
    CHECK(audit.max_partition_defect <= 1e-12);
}

TEST_CASE("conformal metric assembly: full audit and refinement convergence") {
    auto m = conformal_metric(Expression::parse("0.1*x1 + 0.05*x2^2"));
    auto curve = shoot_curve(m, Vec3(0.1, -0.2, 0.05), Vec3(1, 0.3, -0.1), 0.05, 1.0, 2.0, 1.2);
    auto sched = default_schedule();
    auto ivs = admissible_radii(m, curve, 0.1, 0.2, sched, false, 60);
    REQUIRE(!ivs.empty());
    const double r = 0.5 * (ivs.back().lo + ivs.back().hi);
    auto net = build_network(m, curve, r, sched);

    MeshResolution coarse;
    coarse.block_level = 3;
    coarse.neck_angular = 32;
    auto mesh = assemble(m, net, coarse);
    auto audit = audit_mesh(mesh);
    CHECK(audit.watertight);
    CHECK(audit.orientation_consistent);
    CHECK(audit.euler_characteristic == 2);
    CHECK(audit.max_partition_defect <= 1e-12);
    CHECK(audit.zeta_lipschitz <= 2.0);

    MeshResolution fine;
    fine.block_level = 4;
    fine.neck_angular = 64;
    auto mesh2 = assemble(m, net, fine);
    const double a1 = mesh_area(mesh, m);
    const double a2 = mesh_area(mesh2, m);
    CHECK(std::fabs(a2 - a1) <= 0.005 * a1);
}

TEST_CASE("mesh export formats are deterministic") {
    const double r = 0.25;
    auto net = flat_two_bead_network(r, 0.04);
    auto m = euclidean_metric();
    MeshResolution res;
    res.block_level = 2;
    res.neck_angular = 16;
    auto mesh1 = assemble(m, net, res);
    auto mesh2 = assemble(m, net, res);
    CHECK(export_obj(mesh1) == export_obj(mesh2));
    CHECK(export_ply(mesh1) == export_ply(mesh2));
    CHECK(export_ply(mesh1).find("property double zeta") != std::string::npos);
}
