#include <doctest.h>

#include "cmcnet/network_builder.hpp"

#include <cmath>

using namespace cmcnet;

namespace {

CondensateCurve straight_flat_curve(double length) {
    auto m = euclidean_metric();
    return shoot_curve(m, Vec3::Zero(), Vec3(1, 0, 0), 1.0, 1.0, 1.0, length);
}

} // namespace

TEST_CASE("flat straight edge, exact arithmetic placement") {
    auto m = euclidean_metric();
    auto curve = straight_flat_curve(10.5);
    auto p = place_beads(m, curve, 1.0, uniform_schedule(0.1));
    REQUIRE(p.t.size() == 6); // 5 interior gaps of length 2.1
    for (size_t k = 0; k < p.t.size(); ++k) CHECK(p.t[k] == doctest::Approx(2.1 * k).epsilon(1e-12));
    CHECK(p.closing_tau == doctest::Approx(0.1).epsilon(1e-10));
}

TEST_CASE("flat straight edge, infeasible closing separation") {
    auto m = euclidean_metric();
    auto curve = straight_flat_curve(10.0);
    CHECK_THROWS_AS(place_beads(m, curve, 1.0, uniform_schedule(0.1), false, 7), PlacementError);
    try {
        place_beads(m, curve, 1.0, uniform_schedule(0.1), false, 7);
    } catch (const PlacementError& e) {
        CHECK(e.edge == 7);
        CHECK(e.closing_tau < 0.0); // 10.0 leaves a 1.6-long final gap
    }
}

TEST_CASE("round sphere edge: spacings audited with independent distances") {
    const double a = 2.0;
    auto m = round_sphere_metric(a);
    const Vec3 p0(2.0 * a, 0, 0);
    const Mat3 g = metric_checked(m, p0);
    Vec3 v(0, 1, 0);
    v /= norm(g, v);
    const double r = 0.31, tau0 = 0.12;
    const double L = 8.0 * (2.0 + tau0) * r; // eight exact gaps close the edge
    auto curve = shoot_curve(m, p0, v, 0.5, 1.0, 1.0, L);
    auto placement = place_beads(m, curve, r, uniform_schedule(tau0));
    for (size_t k = 0; k + 1 < placement.t.size(); ++k) {
        const double want = (2.0 + placement.tau[k]) * r;
        const double got =
            geodesic_distance(m, curve.at(placement.t[k]).point, curve.at(placement.t[k + 1]).point);
        CHECK(std::fabs(got - want) <= 1e-8 * r);
    }
}

TEST_CASE("admissible radii on a flat edge match the closed form") {
    auto m = euclidean_metric();
    const double L = 10.0, tau0 = 0.1;
    auto curve = straight_flat_curve(L);
    auto ivs = admissible_radii(m, curve, 0.4, 1.3, uniform_schedule(tau0), false, 120);
    REQUIRE(!ivs.empty());
    // intervals center near r = L / (k (2 + tau0)); band 0.2 tau0 gives
    // relative halfwidth ~ 0.2 tau0 / (2 + tau0)
    for (const auto& iv : ivs) {
        const double rm = 0.5 * (iv.lo + iv.hi);
        const double k = L / (rm * (2.0 + tau0));
        const double kround = std::round(k);
        CHECK(std::fabs(k - kround) < 0.05);
        CHECK(iv.bead_count == static_cast<int>(kround) + 1);
        // re-verify feasibility at midpoint and both endpoints
        for (double rr : {iv.lo + 1e-9, rm, iv.hi - 1e-9})
            CHECK_NOTHROW(place_beads(m, curve, rr, uniform_schedule(tau0)));
    }
    // halving r roughly doubles the bead count
    auto iv_small = admissible_radii(m, curve, 0.2, 0.65, uniform_schedule(tau0), false, 120);
    const int big = ivs.back().bead_count;
    bool found = false;
    for (const auto& iv : iv_small)
        if (std::abs(iv.bead_count - 2 * (big - 1) - 1) <= 1) found = true;
    CHECK(found);
}

TEST_CASE("admissible radii on a conformal edge self-audit") {
    auto m = conformal_metric(Expression::parse("0.1*x1 + 0.05*x2^2"));
    auto curve = shoot_curve(m, Vec3(0.1, -0.2, 0.05), Vec3(1, 0.3, -0.1), 0.05, 1.0, 2.0, 1.2);
    auto ivs = admissible_radii(m, curve, 0.08, 0.2, default_schedule(), false, 60);
    REQUIRE(!ivs.empty());
    int prev_count = 1 << 30;
    for (const auto& iv : ivs) {
        CHECK(iv.lo < iv.hi);
        CHECK(iv.bead_count <= prev_count); // non-increasing with r
        prev_count = iv.bead_count;
        const double rm = 0.5 * (iv.lo + iv.hi);
        CHECK_NOTHROW(place_beads(m, curve, rm, default_schedule()));
    }
}

TEST_CASE("network construction: invariants on a conformal edge") {
    auto m = conformal_metric(Expression::parse("0.1*x1 + 0.05*x2^2"));
    auto curve = shoot_curve(m, Vec3(0.1, -0.2, 0.05), Vec3(1, 0.3, -0.1), 0.05, 1.0, 2.0, 1.2);
    auto ivs = admissible_radii(m, curve, 0.08, 0.2, default_schedule(), false, 60);
    REQUIRE(!ivs.empty());
    const double r = 0.5 * (ivs.front().lo + ivs.front().hi);
    auto net = build_network(m, curve, r, default_schedule());

    CHECK(net.matching_residual < 1e-12);
    REQUIRE(net.beads.size() >= 3);
    REQUIRE(net.necks.size() == net.beads.size() - 1);

    for (const auto& neck : net.necks) {
        // spacing invariant
        const double d =
            geodesic_distance(m, net.beads[neck.bead_minus].center, net.beads[neck.bead_plus].center);
        CHECK(std::fabs(d - (2.0 + neck.spec.tau) * r) <= 1e-8 * r);
        // midpoint sits at equal geodesic distance from both ends
        const double dm = geodesic_distance(m, net.beads[neck.bead_minus].center, neck.midpoint);
        const double dp = geodesic_distance(m, net.beads[neck.bead_plus].center, neck.midpoint);
        CHECK(std::fabs(dm - (1.0 + 0.5 * neck.spec.tau) * r) <= 1e-8 * r);
        CHECK(std::fabs(dp - (1.0 + 0.5 * neck.spec.tau) * r) <= 1e-8 * r);
        // matching algebra holds exactly
        CHECK(neck.spec.eps_in == neck.spec.eps_flat / neck.spec.C_minus);
        CHECK(neck.spec.eps_out == neck.spec.eps_flat / neck.spec.C_plus);
        CHECK(std::fabs(lambda_fn(neck.spec.eps_flat, neck.spec.c_minus, neck.spec.C_minus,
                                  neck.spec.c_plus, neck.spec.C_plus) -
                        neck.spec.tau) < 1e-12 * neck.spec.tau);
        // tau = O(eps log(1/eps)) band
        const double ratio = neck.spec.tau / (neck.spec.eps_flat * std::log(1.0 / neck.spec.eps_flat));
        CHECK(ratio > 0.5);
        CHECK(ratio < 8.0);
    }
    // frames are g-orthonormal, first vector faces the incoming neck
    for (size_t b = 1; b < net.beads.size(); ++b) {
        const auto& bead = net.beads[b];
        const Mat3 g = metric_checked(m, bead.center);
        CHECK(((bead.frame.transpose() * g * bead.frame) - Mat3::Identity()).cwiseAbs().maxCoeff() <
              1e-9);
        const auto& back_slot = bead.slots[0];
        CHECK(inner(g, bead.frame.col(0), back_slot.direction) > 1.0 - 1e-9);
    }
    // determinism
    auto net2 = build_network(m, curve, r, default_schedule());
    for (size_t b = 0; b < net.beads.size(); ++b)
        CHECK((net.beads[b].center - net2.beads[b].center).norm() == 0.0);
    for (size_t k = 0; k < net.necks.size(); ++k)
        CHECK(net.necks[k].spec.eps_flat == net2.necks[k].spec.eps_flat);

    CHECK(placement_table_csv(net) == placement_table_csv(net2));
}

TEST_CASE("apply_perturbation: identity and flat translation") {
    auto flat = euclidean_metric();
    auto curve = straight_flat_curve(10.5);
    auto net = build_network(flat, curve, 1.0, uniform_schedule(0.1));

    std::vector<Vec3> W0(net.beads.size(), Vec3::Zero());
    std::vector<std::array<double, 6>> Xi0(net.necks.size(), std::array<double, 6>{});
    auto same = apply_perturbation(flat, net, W0, Xi0);
    for (size_t b = 0; b < net.beads.size(); ++b)
        CHECK((same.beads[b].center - net.beads[b].center).norm() < 1e-12);
    for (size_t k = 0; k < net.necks.size(); ++k)
        CHECK(std::fabs(same.necks[k].spec.eps_flat - net.necks[k].spec.eps_flat) <
              1e-12 * net.necks[k].spec.eps_flat);

    const Vec3 v(0.1, 0.2, -0.05);
    std::vector<Vec3> Wt(net.beads.size(), v);
    auto moved = apply_perturbation(flat, net, Wt, Xi0);
    for (size_t b = 0; b < net.beads.size(); ++b)
        CHECK((moved.beads[b].center - net.beads[b].center - net.r * v).norm() < 1e-12);
    for (size_t k = 0; k < net.necks.size(); ++k)
        CHECK(std::fabs(moved.necks[k].spec.tau - net.necks[k].spec.tau) < 1e-10);
}

TEST_CASE("apply_perturbation: random small W keeps the invariants") {
    auto m = conformal_metric(Expression::parse("0.1*x1 + 0.05*x2^2"));
    auto curve = shoot_curve(m, Vec3(0.1, -0.2, 0.05), Vec3(1, 0.3, -0.1), 0.05, 1.0, 2.0, 1.2);
    auto ivs = admissible_radii(m, curve, 0.08, 0.2, default_schedule(), false, 60);
    const double r = 0.5 * (ivs.front().lo + ivs.front().hi);
    auto net = build_network(m, curve, r, default_schedule());

    num::Rng rng(31);
    std::vector<Vec3> W;
    for (size_t b = 0; b < net.beads.size(); ++b) W.push_back(0.05 * rng.unit_vector());
    std::vector<std::array<double, 6>> Xi(net.necks.size(), std::array<double, 6>{});
    for (auto& x : Xi)
        for (double& c : x) c = 0.01 * rng.uniform(-1.0, 1.0);
    auto pert = apply_perturbation(m, net, W, Xi);
    CHECK(pert.matching_residual < 1e-12);
    for (const auto& neck : pert.necks) {
        const double d = geodesic_distance(m, pert.beads[neck.bead_minus].center,
                                           pert.beads[neck.bead_plus].center);
        CHECK(std::fabs(d - (2.0 + neck.spec.tau) * r) <= 1e-8 * r);
        CHECK(neck.spec.eps_in == neck.spec.eps_flat / neck.spec.C_minus);
        // deformation parameters are carried through
        bool any = false;
        for (double c : neck.spec.deformation) any = any || c != 0.0;
        CHECK(any);
    }
    // centers moved to exp_q(r W)
    for (size_t b = 0; b < net.beads.size(); ++b) {
        const Vec3 expect = geodesic_flow(m, net.beads[b].center, r * W[b], 1.0).point;
        CHECK((pert.beads[b].center - expect).norm() < 1e-12);
    }

    // oversized W is rejected
    std::vector<Vec3> Wbig(net.beads.size(), Vec3(0.7, 0, 0));
    CHECK_THROWS(apply_perturbation(m, net, Wbig, Xi));
}

TEST_CASE("closed loop placement on the round sphere") {
    const double a = 1.0;
    auto m = round_sphere_metric(a);
    const Vec3 p0(2.0 * a, 0, 0);
    const Mat3 g = metric_checked(m, p0);
    Vec3 v(0, 1, 0);
    v /= norm(g, v);
    const double L = 2.0 * M_PI * a;
    auto curve = shoot_curve(m, p0, v, 0.5, 1.0, 1.0, L);
    CHECK((curve.at(L).point - p0).norm() < 1e-6);
    // find an admissible radius for the loop, then build
    auto ivs = admissible_radii(m, curve, 0.2, 0.4, uniform_schedule(0.15, 0.5), true, 80);
    REQUIRE(!ivs.empty());
    const double r = 0.5 * (ivs.front().lo + ivs.front().hi);
    auto net = build_network(m, curve, r, uniform_schedule(0.15, 0.5), true);
    CHECK(net.necks.size() == net.beads.size()); // loop: as many necks as beads
    for (const auto& bead : net.beads) CHECK(bead.slots.size() == 2);
}
