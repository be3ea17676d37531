#include "cmcnet/network_builder.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cmcnet {

namespace {

// parallel transport of chart vectors along the geodesic from p with initial
// velocity v (unit time), integrated jointly with the geodesic
std::vector<Vec3> transport_along(const ChartMetric& m, const Vec3& p, const Vec3& v,
                                  const std::vector<Vec3>& vecs, double tend = 1.0) {
    const int k = static_cast<int>(vecs.size());
    std::vector<double> y0(6 + 3 * k);
    for (int i = 0; i < 3; ++i) {
        y0[i] = p[i];
        y0[3 + i] = v[i];
    }
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < 3; ++i) y0[6 + 3 * j + i] = vecs[j][i];
    auto rhs = [&m, k](double, const double* y, double* dy) {
        const Vec3 x(y[0], y[1], y[2]);
        const Vec3 vel(y[3], y[4], y[5]);
        const Christoffel G = christoffel_at(m, x);
        const Vec3 acc = -contract(G, vel, vel);
        for (int i = 0; i < 3; ++i) {
            dy[i] = vel[i];
            dy[3 + i] = acc[i];
        }
        for (int j = 0; j < k; ++j) {
            const Vec3 w(y[6 + 3 * j], y[6 + 3 * j + 1], y[6 + 3 * j + 2]);
            for (int i = 0; i < 3; ++i) dy[6 + 3 * j + i] = -vel.dot(G[i] * w);
        }
    };
    auto res = num::integrate(rhs, y0, 0.0, tend);
    if (!res.ok) throw Error("transport_along: " + res.message);
    std::vector<Vec3> out(k);
    for (int j = 0; j < k; ++j)
        out[j] = Vec3(res.y[6 + 3 * j], res.y[6 + 3 * j + 1], res.y[6 + 3 * j + 2]);
    return out;
}

double self_consistent_constants(double eps_ref, double* c_out, double* C_out) {
    double c = 0.0753, C = 0.1592;
    for (int it = 0; it < 4; ++it) {
        auto G = solve_generating_function({Vec3(0, 0, 1)}, {eps_ref}, 48);
        auto e = expand_near_singularity(G, 0);
        c = e.c;
        C = e.C;
    }
    *c_out = c;
    *C_out = C;
    return C;
}

} // namespace

double TauSchedule::tau_of_f(double f) const {
    if (uniform) return uniform_tau;
    if (f <= 0.0) throw Error("tau schedule: neck-size function must be positive");
    const double eps_flat = C_ref * f;
    const double thresh = lambda_monotone_threshold(c_ref, C_ref, c_ref, C_ref);
    if (eps_flat > 0.8 * thresh)
        throw MatchDomainError("tau schedule: f too large for the separation law");
    return lambda_fn(eps_flat, c_ref, C_ref, c_ref, C_ref);
}

TauSchedule default_schedule() {
    TauSchedule s;
    self_consistent_constants(0.01, &s.c_ref, &s.C_ref);
    return s;
}

TauSchedule uniform_schedule(double tau, double band) {
    TauSchedule s;
    s.uniform = true;
    s.uniform_tau = tau;
    s.band = band;
    return s;
}

namespace {

// distance from a fixed point to curve.at(t)
double dist_to(const ChartMetric& m, const Vec3& from, const CondensateCurve& curve, double t) {
    return log_map(m, from, curve.at(t).point).distance;
}

// find t with dist(from, curve(t)) = target; lo must satisfy dist <= target,
// the upper end expands locally until the target is bracketed
double solve_spacing(const ChartMetric& m, const Vec3& from, const CondensateCurve& curve,
                     double lo, double tmax, double target) {
    double flo = dist_to(m, from, curve, lo) - target;
    if (flo > 0.0) return lo; // degenerate; caller checks
    double hi = std::min(tmax, lo + 0.25 * target);
    double fhi = dist_to(m, from, curve, hi) - target;
    while (fhi < 0.0 && hi < tmax) {
        hi = std::min(tmax, hi + 0.25 * target);
        fhi = dist_to(m, from, curve, hi) - target;
    }
    if (fhi < 0.0) throw Error("solve_spacing: bracket failure");
    double a = lo, b = hi, fa = flo, fb = fhi;
    double t = 0.5 * (a + b);
    for (int it = 0; it < 80; ++it) {
        // secant proposal within the bracket, bisection fallback
        double prop = b - fb * (b - a) / (fb - fa);
        if (!(prop > a && prop < b)) prop = 0.5 * (a + b);
        const double fp = dist_to(m, from, curve, prop) - target;
        if (std::fabs(fp) < 1e-13 * std::max(1.0, target)) return prop;
        if (fp < 0.0) {
            a = prop;
            fa = fp;
        } else {
            b = prop;
            fb = fp;
        }
        t = 0.5 * (a + b);
        if (b - a < 1e-14 * std::max(1.0, target)) break;
    }
    return t;
}

} // namespace

namespace {

EdgePlacement place_beads_raw(const ChartMetric& m, const CondensateCurve& curve, double r,
                              const TauSchedule& schedule, bool closed_loop) {
    const double L = curve.length();
    EdgePlacement out;
    out.closed_loop = closed_loop;
    out.t.push_back(0.0);
    const Vec3 end_point = curve.at(L).point;

    double t_prev = 0.0;
    for (;;) {
        // separation from the schedule at the prospective gap midpoint
        double tau = schedule.uniform ? schedule.uniform_tau
                                      : schedule.tau_of_f(curve.at(t_prev).f);
        for (int it = 0; it < 3 && !schedule.uniform; ++it) {
            const double tmid = std::min(L, t_prev + (1.0 + 0.5 * tau) * r);
            tau = schedule.tau_of_f(curve.at(tmid).f);
        }
        const double target = (2.0 + tau) * r;
        const Vec3 q_prev = curve.at(t_prev).point;
        if (t_prev + target > L) break;
        if (!closed_loop && L - t_prev <= 3.0 * target) {
            // near the end: decide by geodesic distance
            if (log_map(m, q_prev, end_point).distance <= target) break;
        }
        const double lo = std::min(L, t_prev + target * (1.0 - 1e-12));
        const double t_next = solve_spacing(m, q_prev, curve, lo, L, target);
        out.t.push_back(t_next);
        out.tau.push_back(tau);
        t_prev = t_next;
    }

    // closing gap: to the edge end (open) or back to the first bead (loop)
    const Vec3 q_last = curve.at(t_prev).point;
    const Vec3 q_close = closed_loop ? curve.at(0.0).point : end_point;
    const double closing_dist = log_map(m, q_last, q_close).distance;
    out.closing_tau = closing_dist / r - 2.0;
    double tau_target = schedule.uniform ? schedule.uniform_tau
                                         : schedule.tau_of_f(curve.at(std::min(
                                               L, t_prev + (1.0 + 0.5 * out.closing_tau) * r)).f);
    out.closing_target = tau_target;
    if (!closed_loop) {
        out.t.push_back(L);
        out.tau.push_back(out.closing_tau);
    } else {
        out.tau.push_back(out.closing_tau);
    }
    return out;
}

} // namespace

EdgePlacement place_beads(const ChartMetric& m, const CondensateCurve& curve, double r,
                          const TauSchedule& schedule, bool closed_loop, int edge_id) {
    auto out = place_beads_raw(m, curve, r, schedule, closed_loop);
    if (std::fabs(out.closing_tau - out.closing_target) > schedule.band * out.closing_target)
        throw PlacementError("placement infeasible on edge " + std::to_string(edge_id) +
                                 ": closing separation " + std::to_string(out.closing_tau) +
                                 " outside the band around " + std::to_string(out.closing_target),
                             out.closing_tau, out.closing_target, edge_id);
    return out;
}

std::vector<RadiusInterval> admissible_radii(const ChartMetric& m, const CondensateCurve& curve,
                                             double r_lo, double r_hi, const TauSchedule& schedule,
                                             bool closed_loop, int grid) {
    if (r_lo <= 0.0 || r_hi <= r_lo) throw Error("admissible_radii: bad search interval");
    struct Probe {
        int count = -1;
        double misfit = 0.0; // closing_tau - target, band units applied by caller
        double band = 0.0;
    };
    auto probe = [&](double r) -> Probe {
        Probe p;
        try {
            auto pl = place_beads_raw(m, curve, r, schedule, closed_loop);
            p.count = static_cast<int>(pl.t.size());
            p.misfit = pl.closing_tau - pl.closing_target;
            p.band = schedule.band * pl.closing_target;
        } catch (const Error&) {
            p.count = -1;
        }
        return p;
    };
    // the closing separation decreases continuously in r on a fixed-count
    // branch and jumps where the count changes; walk the branches
    std::vector<std::pair<double, Probe>> pts;
    for (int i = 0; i <= grid; ++i) {
        const double r = r_lo + (r_hi - r_lo) * i / grid;
        pts.push_back({r, probe(r)});
    }
    // split cells until adjacent probes share a branch or are too narrow
    for (size_t i = 0; i + 1 < pts.size();) {
        const auto& a = pts[i];
        const auto& b = pts[i + 1];
        const bool same_branch = a.second.count == b.second.count;
        if (same_branch || b.first - a.first < 1e-10 * std::max(1.0, b.first)) {
            ++i;
            continue;
        }
        const double mid = 0.5 * (a.first + b.first);
        pts.insert(pts.begin() + i + 1, {mid, probe(mid)});
    }
    // collect feasibility windows |misfit| <= band on each branch
    auto feasible = [](const Probe& p) {
        return p.count > 0 && std::fabs(p.misfit) <= p.band;
    };
    auto edge_between = [&](double ra, double rb) {
        // bisect the feasibility boundary in (ra, rb); ra infeasible, rb feasible
        for (int it = 0; it < 50; ++it) {
            const double mid = 0.5 * (ra + rb);
            if (feasible(probe(mid))) rb = mid;
            else ra = mid;
            if (rb - ra < 1e-13 * std::max(1.0, rb)) break;
        }
        return rb;
    };
    std::vector<RadiusInterval> out;
    size_t i = 0;
    while (i < pts.size()) {
        if (!feasible(pts[i].second)) {
            // a window may hide between two infeasible probes on one branch
            if (i + 1 < pts.size() && pts[i].second.count == pts[i + 1].second.count &&
                pts[i].second.count > 0 && pts[i].second.misfit > pts[i].second.band &&
                pts[i + 1].second.misfit < -pts[i + 1].second.band) {
                const double lo = edge_between(pts[i].first, 0.5 * (pts[i].first + pts[i + 1].first));
                // ensure the midpoint probe is feasible before trusting the window
                if (feasible(probe(lo))) {
                    const double hi =
                        2.0 * edge_between(pts[i + 1].first, lo) - lo; // symmetric refine
                    RadiusInterval iv;
                    iv.lo = lo;
                    iv.hi = edge_between(pts[i + 1].first, lo);
                    iv.bead_count = probe(0.5 * (iv.lo + iv.hi)).count;
                    (void)hi;
                    if (iv.lo < iv.hi) out.push_back(iv);
                }
            }
            ++i;
            continue;
        }
        size_t j = i;
        while (j + 1 < pts.size() && feasible(pts[j + 1].second)) ++j;
        RadiusInterval iv;
        iv.lo = (i == 0) ? pts[0].first : edge_between(pts[i - 1].first, pts[i].first);
        iv.hi = (j + 1 == pts.size()) ? pts.back().first
                                      : edge_between(pts[j + 1].first, pts[j].first);
        iv.bead_count = pts[(i + j) / 2].second.count;
        out.push_back(iv);
        i = j + 1;
    }
    return out;
}

namespace {

struct SegmentData {
    Vec3 log_v;       // log of bead k+1 at bead k
    Vec3 dir_fwd;     // unit direction at bead k toward the neck
    Vec3 dir_bwd;     // unit direction at bead k+1 toward the neck
    Vec3 midpoint;
    Vec3 axis;        // unit tangent at the midpoint toward the plus side
    double dist;
};

SegmentData make_segment(const ChartMetric& m, const Vec3& a, const Vec3& b) {
    SegmentData s;
    auto lr = log_map(m, a, b);
    s.log_v = lr.v;
    s.dist = lr.distance;
    const Mat3 ga = metric_checked(m, a);
    s.dir_fwd = lr.v / norm(ga, lr.v);
    auto mid = geodesic_flow(m, a, 0.5 * lr.v, 1.0);
    s.midpoint = mid.point;
    const Mat3 gm = metric_checked(m, s.midpoint);
    s.axis = mid.velocity / norm(gm, mid.velocity);
    auto endst = geodesic_flow(m, a, lr.v, 1.0);
    const Mat3 gb = metric_checked(m, endst.point);
    s.dir_bwd = -endst.velocity / norm(gb, endst.velocity);
    return s;
}

void orthonormalize_frame(const Mat3& g, Mat3& E) {
    Vec3 e0 = E.col(0);
    e0 /= std::sqrt(e0.dot(g * e0));
    Vec3 e1 = E.col(1) - e0.dot(g * E.col(1)) * e0;
    e1 /= std::sqrt(e1.dot(g * e1));
    Vec3 e2 = E.col(2) - e0.dot(g * E.col(2)) * e0 - e1.dot(g * E.col(2)) * e1;
    e2 /= std::sqrt(e2.dot(g * e2));
    E.col(0) = e0;
    E.col(1) = e1;
    E.col(2) = e2;
}

// assemble a chain/loop network from bead positions along a curve
BeadNetwork assemble_network(const ChartMetric& m, const std::vector<Vec3>& centers,
                             const std::vector<double>& ts, const std::vector<double>& taus,
                             bool closed_loop, int edge_id, double r, double omega,
                             const TauSchedule& schedule) {
    const int nb = static_cast<int>(centers.size());
    const int nn = closed_loop ? nb : nb - 1;
    BeadNetwork net;
    net.r = r;
    net.omega = omega;

    std::vector<SegmentData> segs(nn);
    for (int k = 0; k < nn; ++k)
        segs[k] = make_segment(m, centers[k], centers[(k + 1) % nb]);

    // beads with frames: first frame vector faces the incoming neck
    for (int k = 0; k < nb; ++k) {
        BeadNetwork::Bead bead;
        bead.center = centers[k];
        bead.edge = edge_id;
        bead.t = ts[k];
        bead.is_vertex = !closed_loop && (k == 0 || k == nb - 1);
        const Mat3 g = metric_checked(m, centers[k]);
        Vec3 e1;
        if (k == 0 && !closed_loop) e1 = segs[0].dir_fwd;
        else e1 = segs[(k - 1 + nn) % nn].dir_bwd;
        Mat3 E;
        if (k == 0) {
            E = orthonormal_frame(m, centers[k], e1);
        } else {
            // transport the previous frame's second vector along the segment
            const int ks = (k - 1 + nn) % nn;
            auto moved = transport_along(m, centers[(k - 1 + nb) % nb], segs[ks].log_v,
                                         {net.beads[k - 1].frame.col(1)});
            E.col(0) = e1;
            E.col(1) = moved[0];
            E.col(2) = E.col(0).cross(E.col(1)); // seed; orthonormalized below
            orthonormalize_frame(g, E);
            if (E.determinant() < 0) E.col(2) = -E.col(2);
        }
        bead.frame = E;
        net.beads.push_back(bead);
    }

    // necks with frames and slot geometry
    for (int k = 0; k < nn; ++k) {
        BeadNetwork::Neck neck;
        neck.bead_minus = k;
        neck.bead_plus = (k + 1) % nb;
        neck.edge = edge_id;
        neck.t_mid = ts[k] + 0.5 * segs[k].dist;
        neck.midpoint = segs[k].midpoint;
        const Mat3 gm = metric_checked(m, neck.midpoint);
        Mat3 F;
        F.col(0) = segs[k].axis;
        // transverse directions transported from the minus bead
        auto half = transport_along(m, centers[k], 0.5 * segs[k].log_v,
                                    {net.beads[k].frame.col(1), net.beads[k].frame.col(2)});
        F.col(1) = half[0];
        F.col(2) = half[1];
        orthonormalize_frame(gm, F);
        if (F.determinant() < 0) F.col(2) = -F.col(2);
        neck.frame = F;
        neck.spec.tau = taus[k];

        // slots on the two beads
        auto add_slot = [&](int bead_id, const Vec3& direction, int neck_id) {
            BeadNetwork::Slot slot;
            slot.neck = neck_id;
            slot.direction = direction;
            net.beads[bead_id].slots.push_back(slot);
            return static_cast<int>(net.beads[bead_id].slots.size()) - 1;
        };
        neck.slot_minus = add_slot(neck.bead_minus, segs[k].dir_fwd, k);
        neck.slot_plus = add_slot(neck.bead_plus, segs[k].dir_bwd, k);
        net.necks.push_back(neck);
    }

    // slot tangent bases: transport the neck transverse frame to each bead and
    // orthonormalize against the slot direction
    for (int k = 0; k < nn; ++k) {
        auto& neck = net.necks[k];
        auto fix_slot = [&](int bead_id, int slot_id, double sign) {
            auto& bead = net.beads[bead_id];
            auto& slot = bead.slots[slot_id];
            const Mat3 g = metric_checked(m, bead.center);
            // path from midpoint to bead: half segment, reversed for minus side
            const Vec3 start = neck.midpoint;
            Vec3 v;
            if (sign < 0) {
                auto lr = log_map(m, start, net.beads[neck.bead_minus].center);
                v = lr.v;
            } else {
                auto lr = log_map(m, start, net.beads[neck.bead_plus].center);
                v = lr.v;
            }
            auto moved = transport_along(m, start, v, {neck.frame.col(1), neck.frame.col(2)});
            Vec3 t1 = moved[0] - inner(g, moved[0], slot.direction) * slot.direction;
            t1 /= norm(g, t1);
            Vec3 t2 = moved[1] - inner(g, moved[1], slot.direction) * slot.direction -
                      inner(g, moved[1], t1) * t1;
            t2 /= norm(g, t2);
            slot.t1 = t1;
            slot.t2 = t2;
        };
        fix_slot(neck.bead_minus, neck.slot_minus, -1.0);
        fix_slot(neck.bead_plus, neck.slot_plus, +1.0);
    }

    // matching pass: weights and expansion constants to a fixed point
    const int max_iter = 40;
    double resid = 0.0;
    int used = 0;
    {
        // initial weights from the reference constants
        for (int k = 0; k < nn; ++k) {
            const double e0 =
                invert_lambda(net.necks[k].spec.tau, schedule.c_ref, schedule.C_ref,
                              schedule.c_ref, schedule.C_ref);
            net.beads[net.necks[k].bead_minus].slots[net.necks[k].slot_minus].weight =
                e0 / schedule.C_ref;
            net.beads[net.necks[k].bead_plus].slots[net.necks[k].slot_plus].weight =
                e0 / schedule.C_ref;
        }
        for (used = 1; used <= max_iter; ++used) {
            // expansion constants per bead
            for (auto& bead : net.beads) {
                std::vector<Vec3> pts;
                std::vector<double> ws;
                for (const auto& s : bead.slots) {
                    const Mat3 Einv = bead.frame.inverse();
                    pts.push_back((Einv * s.direction).normalized());
                    ws.push_back(s.weight);
                }
                auto G = solve_generating_function(pts, ws, 48);
                for (size_t si = 0; si < bead.slots.size(); ++si) {
                    auto e = expand_near_singularity(G, static_cast<int>(si));
                    bead.slots[si].c = e.c;
                    bead.slots[si].C = e.C;
                }
            }
            // re-match each neck at fixed tau
            resid = 0.0;
            for (auto& neck : net.necks) {
                auto& sm = net.beads[neck.bead_minus].slots[neck.slot_minus];
                auto& sp = net.beads[neck.bead_plus].slots[neck.slot_plus];
                if (sm.C <= 0.0 || sp.C <= 0.0)
                    throw MatchDomainError(
                        "neck matching outside the asymptotic regime: a block expansion "
                        "produced a non-positive log coefficient (neck weights too large)");
                const double ef = invert_lambda(neck.spec.tau, sm.c, sm.C, sp.c, sp.C);
                const double new_m = ef / sm.C, new_p = ef / sp.C;
                resid = std::max(resid, std::fabs(new_m - sm.weight) / new_m);
                resid = std::max(resid, std::fabs(new_p - sp.weight) / new_p);
                sm.weight = new_m;
                sp.weight = new_p;
                neck.spec.eps_flat = ef;
                neck.spec.eps_in = new_m;
                neck.spec.eps_out = new_p;
                neck.spec.c_minus = sm.c;
                neck.spec.C_minus = sm.C;
                neck.spec.c_plus = sp.c;
                neck.spec.C_plus = sp.C;
                neck.spec.d_flat = 0.5 * (sp.c / sp.C - sm.c / sm.C);
            }
            if (resid < 1e-13) break;
        }
    }
    net.matching_iterations = std::min(used, max_iter);
    net.matching_residual = resid;
    return net;
}

} // namespace

BeadNetwork build_network(const ChartMetric& m, const CondensateCurve& curve, double r,
                          const TauSchedule& schedule, bool closed_loop, int edge_id) {
    auto placement = place_beads(m, curve, r, schedule, closed_loop, edge_id);
    std::vector<Vec3> centers;
    for (double t : placement.t) centers.push_back(curve.at(t).point);
    return assemble_network(m, centers, placement.t, placement.tau, closed_loop, edge_id, r,
                            curve.omega, schedule);
}

BeadNetwork apply_perturbation(const ChartMetric& m, const BeadNetwork& network,
                               const std::vector<Vec3>& W,
                               const std::vector<std::array<double, 6>>& Xi, double w_max) {
    if (W.size() != network.beads.size())
        throw Error("apply_perturbation: one W vector per bead required");
    if (Xi.size() != network.necks.size())
        throw Error("apply_perturbation: one Xi vector per neck required");
    const bool closed_loop = network.necks.size() == network.beads.size();

    std::vector<Vec3> centers;
    std::vector<double> ts;
    for (size_t k = 0; k < network.beads.size(); ++k) {
        const auto& bead = network.beads[k];
        const Mat3 g = metric_checked(m, bead.center);
        if (norm(g, W[k]) > w_max)
            throw Error("apply_perturbation: |W| exceeds the bound " + std::to_string(w_max));
        centers.push_back(W[k].norm() == 0.0
                              ? bead.center
                              : geodesic_flow(m, bead.center, network.r * W[k], 1.0).point);
        ts.push_back(bead.t);
    }

    // re-derive separations from the new geodesic distances
    std::vector<double> taus;
    for (size_t k = 0; k < network.necks.size(); ++k) {
        const auto& neck = network.necks[k];
        const double d = log_map(m, centers[neck.bead_minus], centers[neck.bead_plus]).distance;
        const double tau = d / network.r - 2.0;
        if (tau <= 0.0)
            throw Error("apply_perturbation: separation collapsed on neck " + std::to_string(k));
        taus.push_back(tau);
    }

    TauSchedule sched = default_schedule();
    BeadNetwork out = assemble_network(m, centers, ts, taus, closed_loop,
                                       network.beads.empty() ? 0 : network.beads.front().edge,
                                       network.r, network.omega, sched);

    // the excluded set: two segment directions at a bead must not coincide
    for (const auto& bead : out.beads) {
        const Mat3 g = metric_checked(m, bead.center);
        for (size_t i = 0; i < bead.slots.size(); ++i)
            for (size_t j = i + 1; j < bead.slots.size(); ++j) {
                const double cosang = inner(g, bead.slots[i].direction, bead.slots[j].direction);
                if (cosang > 1.0 - 1e-6)
                    throw DeltaViolationError(
                        "perturbation folds two segment tangents at a bead anti-parallel");
            }
    }
    for (size_t k = 0; k < out.necks.size(); ++k) out.necks[k].spec.deformation = Xi[k];
    return out;
}

std::string placement_table_csv(const BeadNetwork& network) {
    std::ostringstream os;
    os << "bead,edge,t,slot,neck,tau,eps,dir_x,dir_y,dir_z\n";
    char buf[512];
    for (size_t b = 0; b < network.beads.size(); ++b) {
        const auto& bead = network.beads[b];
        for (size_t s = 0; s < bead.slots.size(); ++s) {
            const auto& slot = bead.slots[s];
            const double tau = slot.neck >= 0 ? network.necks[slot.neck].spec.tau : 0.0;
            std::snprintf(buf, sizeof(buf), "%zu,%d,%.17g,%zu,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          b, bead.edge, bead.t, s, slot.neck, tau, slot.weight, slot.direction[0],
                          slot.direction[1], slot.direction[2]);
            os << buf;
        }
    }
    return os.str();
}

} // namespace cmcnet
