#include "cmcnet/mesh_assembler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

namespace cmcnet {

namespace {

struct SphereMesh {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> tris;
};

SphereMesh icosphere(int level) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    SphereMesh s;
    const double n = std::sqrt(1.0 + phi * phi);
    auto add = [&](double a, double b, double c) { s.verts.push_back(Vec3(a, b, c) / n); };
    add(-1, phi, 0); add(1, phi, 0); add(-1, -phi, 0); add(1, -phi, 0);
    add(0, -1, phi); add(0, 1, phi); add(0, -1, -phi); add(0, 1, -phi);
    add(phi, 0, -1); add(phi, 0, 1); add(-phi, 0, -1); add(-phi, 0, 1);
    s.tris = {{0, 11, 5},  {0, 5, 1},   {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
              {1, 5, 9},   {5, 11, 4},  {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
              {3, 9, 4},   {3, 4, 2},   {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
              {4, 9, 5},   {2, 4, 11},  {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const Vec3 v = (s.verts[a] + s.verts[b]).normalized();
            s.verts.push_back(v);
            const int idx = static_cast<int>(s.verts.size()) - 1;
            midpoint[key] = idx;
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(s.tris.size() * 4);
        for (const auto& t : s.tris) {
            const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
            next.push_back({t[0], ab, ca});
            next.push_back({t[1], bc, ab});
            next.push_back({t[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        s.tris = std::move(next);
    }
    return s;
}

Vec3 bead_chart_position(const ChartMetric& m, const BeadNetwork::Bead& bead,
                         const Vec3& chart_coords) {
    return geodesic_flow(m, bead.center, bead.frame * chart_coords, 1.0).point;
}

Vec3 neck_chart_position(const ChartMetric& m, const BeadNetwork::Neck& neck,
                         const Vec3& chart_coords) {
    return geodesic_flow(m, neck.midpoint, neck.frame * chart_coords, 1.0).point;
}

// azimuth-sorted loop of vertex indices
void sort_loop_by_azimuth(std::vector<int>& loop, const std::vector<double>& psi) {
    std::sort(loop.begin(), loop.end(), [&](int a, int b) { return psi[a] < psi[b]; });
}

} // namespace

GeneratingFunction block_generating_function(const BeadNetwork::Bead& bead, int band_limit) {
    std::vector<Vec3> pts;
    std::vector<double> ws;
    const Mat3 Einv = bead.frame.inverse();
    for (const auto& s : bead.slots) {
        pts.push_back((Einv * s.direction).normalized());
        ws.push_back(s.weight);
    }
    return solve_generating_function(pts, ws, band_limit);
}

MeshPatch build_block_mesh(const ChartMetric& m, const BeadNetwork::Bead& bead, double r,
                           const GeneratingFunction& G, const MeshResolution& res) {
    MeshPatch patch;
    const Mat3 Einv = bead.frame.inverse();
    const int M = res.neck_angular;
    const int nslots = static_cast<int>(bead.slots.size());

    // slot geometry in frame coordinates
    std::vector<Vec3> q(nslots), t1(nslots), t2(nslots);
    std::vector<double> phi_cap(nslots), phi_outer(nslots), collar(nslots);
    const double h_icosa = 1.1071 / std::pow(2.0, res.block_level);
    for (int i = 0; i < nslots; ++i) {
        q[i] = (Einv * bead.slots[i].direction).normalized();
        t1[i] = (Einv * bead.slots[i].t1).normalized();
        t2[i] = (Einv * bead.slots[i].t2).normalized();
        phi_cap[i] = G.cap_radius(i);
        phi_outer[i] = std::max(2.2 * phi_cap[i], phi_cap[i] + 1.2 * h_icosa);
        collar[i] = phi_outer[i] + 0.7 * h_icosa;
        if (collar[i] > 0.45 * M_PI)
            throw Error("build_block_mesh: cap collar too large for the block");
    }
    for (int i = 0; i < nslots; ++i)
        for (int j = i + 1; j < nslots; ++j)
            if (std::acos(std::clamp(q[i].dot(q[j]), -1.0, 1.0)) < collar[i] + collar[j])
                throw Error("build_block_mesh: exclusion caps overlap");

    auto radial = [&](const Vec3& theta) {
        const double rho = 1.0 - G.evaluate_unrestricted(theta);
        if (rho <= 1e-3)
            throw DegenerateGraphError("block graph degenerate: 1 - G <= 0 on the sphere");
        return rho;
    };
    auto make_vertex = [&](const Vec3& theta) {
        MeshVertex v;
        v.chart_kind = 0;
        v.chart_owner = bead.edge; // unknown mesh-global bead id here; fixed by assemble
        v.chart_coords = r * radial(theta) * theta;
        v.position = bead_chart_position(m, bead, v.chart_coords);
        return v;
    };

    // icosa zone
    SphereMesh ico = icosphere(res.block_level);
    const int n_ico = static_cast<int>(ico.verts.size());
    std::vector<int> keep_map(n_ico, -1);
    std::vector<bool> removed(n_ico, false);
    for (int v = 0; v < n_ico; ++v)
        for (int i = 0; i < nslots; ++i)
            if (std::acos(std::clamp(ico.verts[v].dot(q[i]), -1.0, 1.0)) < collar[i])
                removed[v] = true;
    for (int v = 0; v < n_ico; ++v) {
        if (removed[v]) continue;
        keep_map[v] = static_cast<int>(patch.vertices.size());
        patch.vertices.push_back(make_vertex(ico.verts[v]));
    }
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& t : ico.tris) {
        if (removed[t[0]] || removed[t[1]] || removed[t[2]]) continue;
        patch.triangles.push_back({keep_map[t[0]], keep_map[t[1]], keep_map[t[2]]});
        for (int e = 0; e < 3; ++e) {
            auto key = std::minmax(keep_map[t[e]], keep_map[t[(e + 1) % 3]]);
            edge_count[key]++;
        }
    }

    // structured cap zones and the zipper to the icosa boundary
    for (int i = 0; i < nslots; ++i) {
        // jagged hole boundary: edges adjacent to exactly one kept triangle
        // whose vertices sit near this slot
        std::vector<int> jag;
        {
            std::map<int, int> seen;
            for (const auto& kv : edge_count)
                if (kv.second == 1) {
                    seen[kv.first.first]++;
                    seen[kv.first.second]++;
                }
            for (const auto& kv : seen) {
                const Vec3 theta = patch.vertices[kv.first].chart_coords.normalized();
                const double ang = std::acos(std::clamp(theta.dot(q[i]), -1.0, 1.0));
                if (ang < collar[i] + 2.5 * h_icosa) jag.push_back(kv.first);
            }
        }
        if (jag.empty()) throw Error("build_block_mesh: no hole boundary found for a slot");

        // azimuth of the jagged vertices around the slot
        std::vector<double> psi_of(patch.vertices.size() + (res.cap_rings + 1) * M, 0.0);
        auto azimuth = [&](const Vec3& chart_coords) {
            const Vec3 theta = chart_coords.normalized();
            const double a = theta.dot(t1[i]), b = theta.dot(t2[i]);
            double psi = std::atan2(b, a);
            if (psi < 0) psi += 2.0 * M_PI;
            return psi;
        };
        for (int vid : jag) psi_of[vid] = azimuth(patch.vertices[vid].chart_coords);
        sort_loop_by_azimuth(jag, psi_of);

        // structured rings from the cap outward (geometric in colatitude)
        std::vector<std::vector<int>> rings(res.cap_rings + 1);
        for (int k = 0; k <= res.cap_rings; ++k) {
            const double phi =
                phi_cap[i] * std::pow(phi_outer[i] / phi_cap[i],
                                      static_cast<double>(k) / res.cap_rings);
            for (int a = 0; a < M; ++a) {
                const double psi = 2.0 * M_PI * a / M;
                const Vec3 theta = std::cos(phi) * q[i] +
                                   std::sin(phi) * (std::cos(psi) * t1[i] + std::sin(psi) * t2[i]);
                const int vid = static_cast<int>(patch.vertices.size());
                patch.vertices.push_back(make_vertex(theta.normalized()));
                psi_of.resize(std::max(psi_of.size(), static_cast<size_t>(vid + 1)), 0.0);
                psi_of[vid] = psi;
                rings[k].push_back(vid);
            }
        }
        // bands between structured rings
        for (int k = 0; k + 1 <= res.cap_rings; ++k) {
            for (int a = 0; a < M; ++a) {
                const int a1 = (a + 1) % M;
                patch.triangles.push_back({rings[k][a], rings[k + 1][a], rings[k + 1][a1]});
                patch.triangles.push_back({rings[k][a], rings[k + 1][a1], rings[k][a1]});
            }
        }
        // zipper between the outer structured ring and the jagged boundary:
        // walk both azimuth-ordered loops, always advancing the pointer whose
        // next vertex has the smaller unwrapped azimuth
        {
            const auto& ring = rings[res.cap_rings];
            const int nj = static_cast<int>(jag.size());
            auto psi_ring = [&](int k) { return 2.0 * M_PI * k / M; };
            auto psi_jag = [&](int k) {
                return psi_of[jag[k % nj]] + 2.0 * M_PI * (k / nj);
            };
            int ir = 0, ij = 0;
            while (ir < M || ij < nj) {
                if (ij >= nj || (ir < M && psi_ring(ir + 1) <= psi_jag(ij + 1))) {
                    patch.triangles.push_back({jag[ij % nj], ring[ir % M], ring[(ir + 1) % M]});
                    ++ir;
                } else {
                    patch.triangles.push_back({jag[ij % nj], ring[ir % M], jag[(ij + 1) % nj]});
                    ++ij;
                }
            }
        }
        patch.boundary_loops.push_back(rings[0]);
        patch.boundary_loop_tags.push_back(i);
    }
    return patch;
}

MeshPatch build_neck_mesh(const ChartMetric& m, const BeadNetwork& network, int neck_id,
                          const MeshResolution& res) {
    const auto& neck = network.necks[neck_id];
    const auto& bm = network.beads[neck.bead_minus];
    const auto& bp = network.beads[neck.bead_plus];
    const double r = network.r;
    const int M = res.neck_angular;

    GeneratingFunction Gm = block_generating_function(bm);
    GeneratingFunction Gp = block_generating_function(bp);

    // flat-picture sphere graphs of the two blocks over the neck plane
    const Mat3 Em_inv = bm.frame.inverse();
    const Mat3 Ep_inv = bp.frame.inverse();
    const auto& sm = bm.slots[neck.slot_minus];
    const auto& sp = bp.slots[neck.slot_plus];
    BlockNeckGraph sph_minus(&Gm, neck.slot_minus, -1, neck.spec.tau,
                             (Em_inv * sm.t1).normalized(), (Em_inv * sm.t2).normalized());
    BlockNeckGraph sph_plus(&Gp, neck.slot_plus, +1, neck.spec.tau,
                            (Ep_inv * sp.t1).normalized(), (Ep_inv * sp.t2).normalized());

    MeshPatch patch;
    auto make_vertex = [&](const Vec3& x /*rescaled picture coords*/) {
        MeshVertex v;
        v.chart_kind = 1;
        v.chart_owner = neck_id;
        v.chart_coords = r * x;
        v.position = neck_chart_position(m, neck, v.chart_coords);
        return v;
    };

    // waist ring (shared by both sheets)
    std::vector<int> waist(M);
    std::vector<double> rho_w(M), psi_w(M);
    for (int a = 0; a < M; ++a) {
        const double psi = 2.0 * M_PI * a / M;
        const Vec3 w = neck_waist_point(neck.spec, psi);
        waist[a] = static_cast<int>(patch.vertices.size());
        patch.vertices.push_back(make_vertex(w));
        rho_w[a] = std::hypot(w[1], w[2]);
        psi_w[a] = psi;
    }

    for (int side : {-1, +1}) {
        const auto& sphg = (side < 0) ? sph_minus : sph_plus;
        const double phi_cap = (side < 0) ? Gm.cap_radius(neck.slot_minus)
                                          : Gp.cap_radius(neck.slot_plus);
        // ring radii per azimuth and radial level count
        std::vector<double> rho_ring(M);
        double max_ratio = 1.0;
        for (int a = 0; a < M; ++a) {
            const double psi = 2.0 * M_PI * a / M;
            const double phi = phi_cap;
            // the cap circle maps to plane radius (1 - G) sin(phi_cap)
            const Vec3 qv = (side < 0) ? (Em_inv * sm.direction).normalized()
                                       : (Ep_inv * sp.direction).normalized();
            const Vec3 tt1 = (side < 0) ? (Em_inv * sm.t1).normalized()
                                        : (Ep_inv * sp.t1).normalized();
            const Vec3 tt2 = (side < 0) ? (Em_inv * sm.t2).normalized()
                                        : (Ep_inv * sp.t2).normalized();
            const Vec3 theta =
                std::cos(phi) * qv + std::sin(phi) * (std::cos(psi) * tt1 + std::sin(psi) * tt2);
            const double radial =
                1.0 - ((side < 0) ? Gm.evaluate_unrestricted(theta) : Gp.evaluate_unrestricted(theta));
            rho_ring[a] = radial * std::sin(phi);
            max_ratio = std::max(max_ratio, rho_ring[a] / rho_w[a]);
        }
        const int K = std::max(8, static_cast<int>(std::ceil(
                                      std::log(max_ratio) / std::log(res.neck_radial_growth))));

        auto neckg = [&](double x2, double x3) { return neck_graph(neck.spec, side, x2, x3); };
        auto F = make_interpolant(neck.spec, side, neckg,
                                  [&](double x2, double x3) { return sphg(x2, x3); });

        std::vector<std::vector<int>> rings(K + 1);
        rings[0] = waist;
        for (int k = 1; k <= K; ++k) {
            rings[k].resize(M);
            for (int a = 0; a < M; ++a) {
                const double psi = 2.0 * M_PI * a / M;
                const double rho =
                    rho_w[a] * std::pow(rho_ring[a] / rho_w[a], static_cast<double>(k) / K);
                const double x2 = rho * std::cos(psi), x3 = rho * std::sin(psi);
                const double x1 = (k == K) ? sphg(x2, x3) : F(x2, x3);
                rings[k][a] = static_cast<int>(patch.vertices.size());
                patch.vertices.push_back(make_vertex(Vec3(x1, x2, x3)));
            }
        }
        for (int k = 0; k < K; ++k) {
            for (int a = 0; a < M; ++a) {
                const int a1 = (a + 1) % M;
                patch.triangles.push_back({rings[k][a], rings[k + 1][a], rings[k + 1][a1]});
                patch.triangles.push_back({rings[k][a], rings[k + 1][a1], rings[k][a1]});
            }
        }
        patch.boundary_loops.push_back(rings[K]);
        patch.boundary_loop_tags.push_back(side);
    }
    return patch;
}

double neck_cutoff_value(double dist, double sigma) { return num::cutoff_chi(dist / sigma); }

namespace {

void orient_and_audit(std::vector<MeshVertex>& vertices,
                      std::vector<std::array<int, 3>>& triangles, bool* consistent) {
    // adjacency over undirected edges
    std::map<std::pair<int, int>, std::vector<int>> edge_tris;
    for (size_t t = 0; t < triangles.size(); ++t)
        for (int e = 0; e < 3; ++e)
            edge_tris[std::minmax(triangles[t][e], triangles[t][(e + 1) % 3])].push_back(
                static_cast<int>(t));
    std::vector<int> state(triangles.size(), 0); // 0 unvisited, 1 queued, 2 done
    std::vector<int> stack;
    *consistent = true;
    auto has_directed_edge = [&](const std::array<int, 3>& tri, int a, int b) {
        for (int e = 0; e < 3; ++e)
            if (tri[e] == a && tri[(e + 1) % 3] == b) return true;
        return false;
    };
    for (size_t seed = 0; seed < triangles.size(); ++seed) {
        if (state[seed]) continue;
        stack.push_back(static_cast<int>(seed));
        state[seed] = 1;
        while (!stack.empty()) {
            const int t = stack.back();
            stack.pop_back();
            state[t] = 2;
            for (int e = 0; e < 3; ++e) {
                const int a = triangles[t][e], b = triangles[t][(e + 1) % 3];
                for (int t2 : edge_tris[std::minmax(a, b)]) {
                    if (t2 == t) continue;
                    const bool same_dir = has_directed_edge(triangles[t2], a, b);
                    if (state[t2] == 0) {
                        if (same_dir) std::swap(triangles[t2][1], triangles[t2][2]);
                        state[t2] = 1;
                        stack.push_back(t2);
                    } else if (same_dir) {
                        *consistent = false;
                    }
                }
            }
        }
    }
    // outward orientation by signed volume
    double vol = 0.0;
    for (const auto& t : triangles) {
        const Vec3 &p0 = vertices[t[0]].position, &p1 = vertices[t[1]].position,
                   &p2 = vertices[t[2]].position;
        vol += p0.dot(p1.cross(p2)) / 6.0;
    }
    if (vol < 0.0)
        for (auto& t : triangles) std::swap(t[1], t[2]);
}

} // namespace

GluedSurfaceMesh assemble(const ChartMetric& m, const BeadNetwork& network,
                          const MeshResolution& res) {
    GluedSurfaceMesh mesh;
    mesh.network = network;
    mesh.r = network.r;
    mesh.sigma1 = network.r / 32.0;
    mesh.sigma2 = network.r / 16.0;
    mesh.sigma3 = network.r / 8.0;
    mesh.sigma4 = network.r / 4.0;
    const double weld_tol =
        (res.weld_tolerance > 0) ? res.weld_tolerance
                                 : 1e-9 + network.r * network.r * network.r;

    // blocks
    std::vector<std::vector<std::vector<int>>> block_rings(network.beads.size());
    for (size_t b = 0; b < network.beads.size(); ++b) {
        auto G = block_generating_function(network.beads[b]);
        MeshPatch patch = build_block_mesh(m, network.beads[b], network.r, G, res);
        const int base = static_cast<int>(mesh.vertices.size());
        mesh.block_vertex_begin.push_back(base);
        for (auto v : patch.vertices) {
            v.chart_owner = static_cast<int>(b);
            mesh.vertices.push_back(v);
        }
        mesh.block_vertex_end.push_back(static_cast<int>(mesh.vertices.size()));
        for (auto t : patch.triangles)
            mesh.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
        block_rings[b].resize(network.beads[b].slots.size());
        for (size_t l = 0; l < patch.boundary_loops.size(); ++l) {
            std::vector<int> ring;
            for (int vid : patch.boundary_loops[l]) ring.push_back(vid + base);
            block_rings[b][patch.boundary_loop_tags[l]] = ring;
        }
    }

    // necks, welded onto the block cap rings by index identification
    for (size_t n = 0; n < network.necks.size(); ++n) {
        const auto& neck = network.necks[n];
        MeshPatch patch = build_neck_mesh(m, network, static_cast<int>(n), res);
        const auto& ring_m = block_rings[neck.bead_minus][neck.slot_minus];
        const auto& ring_p = block_rings[neck.bead_plus][neck.slot_plus];
        // local ring indices per side
        std::vector<int> local_ring_m, local_ring_p;
        for (size_t l = 0; l < patch.boundary_loops.size(); ++l) {
            if (patch.boundary_loop_tags[l] < 0) local_ring_m = patch.boundary_loops[l];
            else local_ring_p = patch.boundary_loops[l];
        }
        if (local_ring_m.size() != ring_m.size() || local_ring_p.size() != ring_p.size())
            throw WeldError("assemble: boundary loop vertex counts do not match");
        std::vector<int> remap(patch.vertices.size(), -1);
        for (size_t k = 0; k < local_ring_m.size(); ++k) {
            const double d = (patch.vertices[local_ring_m[k]].position -
                              mesh.vertices[ring_m[k]].position)
                                 .norm();
            mesh.max_weld_mismatch = std::max(mesh.max_weld_mismatch, d);
            if (d > weld_tol)
                throw WeldError("assemble: ring positions out of weld tolerance (" +
                                std::to_string(d) + " > " + std::to_string(weld_tol) + ")");
            remap[local_ring_m[k]] = ring_m[k];
        }
        for (size_t k = 0; k < local_ring_p.size(); ++k) {
            const double d = (patch.vertices[local_ring_p[k]].position -
                              mesh.vertices[ring_p[k]].position)
                                 .norm();
            mesh.max_weld_mismatch = std::max(mesh.max_weld_mismatch, d);
            if (d > weld_tol)
                throw WeldError("assemble: ring positions out of weld tolerance (" +
                                std::to_string(d) + " > " + std::to_string(weld_tol) + ")");
            remap[local_ring_p[k]] = ring_p[k];
        }
        const int base = static_cast<int>(mesh.vertices.size());
        mesh.neck_vertex_begin.push_back(base);
        for (size_t v = 0; v < patch.vertices.size(); ++v) {
            if (remap[v] >= 0) continue;
            remap[v] = static_cast<int>(mesh.vertices.size());
            auto mv = patch.vertices[v];
            mv.chart_owner = static_cast<int>(n);
            mesh.vertices.push_back(mv);
        }
        mesh.neck_vertex_end.push_back(static_cast<int>(mesh.vertices.size()));
        for (const auto& t : patch.triangles)
            mesh.triangles.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
    }

    // region labels, partition of unity, weight function
    // chart positions of neck midpoints in each bead chart
    std::vector<std::vector<Vec3>> neck_in_bead(network.beads.size());
    for (size_t b = 0; b < network.beads.size(); ++b) {
        const auto& bead = network.beads[b];
        neck_in_bead[b].resize(bead.slots.size());
        for (size_t s = 0; s < bead.slots.size(); ++s) {
            const auto& neck = network.necks[bead.slots[s].neck];
            auto lr = log_map(m, bead.center, neck.midpoint);
            neck_in_bead[b][s] = lr.v; // chart components at the bead
        }
    }
    for (auto& v : mesh.vertices) {
        v.dist_neck = std::numeric_limits<double>::infinity();
        if (v.chart_kind == 1) {
            v.dist_neck = v.chart_coords.norm();
            v.nearest_neck = v.chart_owner;
        } else {
            const auto& bead = network.beads[v.chart_owner];
            for (size_t s = 0; s < bead.slots.size(); ++s) {
                const double d = (v.chart_coords - neck_in_bead[v.chart_owner][s]).norm();
                if (d < v.dist_neck) {
                    v.dist_neck = d;
                    v.nearest_neck = bead.slots[s].neck;
                }
            }
        }
        // partition values at sigma_4
        if (v.nearest_neck >= 0) {
            v.chi_neck = neck_cutoff_value(v.dist_neck, mesh.sigma4);
            v.chi_sph = 1.0 - v.chi_neck;
        } else {
            v.chi_neck = 0.0;
            v.chi_sph = 1.0;
        }
        // region label
        if (v.nearest_neck >= 0 && v.dist_neck <= 0.5 * mesh.sigma4) {
            v.region = 1;
            v.region_owner = v.nearest_neck;
        } else if (v.nearest_neck >= 0 && v.dist_neck <= mesh.sigma4) {
            // transition, signed by the side of the neck
            const auto& neck = network.necks[v.nearest_neck];
            double side;
            if (v.chart_kind == 1) {
                side = v.chart_coords[0] >= 0 ? 1.0 : -1.0;
            } else {
                side = (v.chart_owner == neck.bead_plus) ? 1.0 : -1.0;
            }
            v.region = side > 0 ? 2 : 3;
            v.region_owner = v.nearest_neck;
        } else {
            v.region = 0;
            v.region_owner = (v.chart_kind == 0) ? v.chart_owner
                                                 : network.necks[v.chart_owner].bead_minus;
        }
        // weight function: neck scale near waists, r on sphere regions,
        // slope <= 1 throughout
        if (v.nearest_neck >= 0) {
            const double eps_amb = mesh.r * network.necks[v.nearest_neck].spec.eps_flat;
            const double raw = std::sqrt(eps_amb * eps_amb + v.dist_neck * v.dist_neck);
            const double k = 40.0 / mesh.r;
            // smooth minimum of (raw, r); slope stays <= 1 in the distance
            const double lo = std::min(raw, mesh.r), hi = std::max(raw, mesh.r);
            v.zeta = lo - std::log1p(std::exp(-k * (hi - lo))) / k;
        } else {
            v.zeta = mesh.r;
        }
    }

    bool consistent = false;
    orient_and_audit(mesh.vertices, mesh.triangles, &consistent);
    if (!consistent) throw Error("assemble: mesh orientation is inconsistent");
    return mesh;
}

MeshAudit audit_mesh(const GluedSurfaceMesh& mesh) {
    MeshAudit a;
    std::map<std::pair<int, int>, int> edge_count;
    std::map<std::pair<int, int>, int> directed;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            edge_count[std::minmax(t[e], t[(e + 1) % 3])]++;
            directed[{t[e], t[(e + 1) % 3]}]++;
        }
    a.watertight = true;
    a.orientation_consistent = true;
    for (const auto& kv : edge_count) {
        if (kv.second != 2) {
            a.watertight = false;
            if (kv.second == 1) a.boundary_edges++;
        }
    }
    for (const auto& kv : directed)
        if (kv.second > 1) a.orientation_consistent = false;
    const int V = static_cast<int>(mesh.vertices.size());
    const int E = static_cast<int>(edge_count.size());
    const int F = static_cast<int>(mesh.triangles.size());
    a.euler_characteristic = V - E + F;

    for (const auto& v : mesh.vertices) {
        double total = v.chi_sph + v.chi_neck;
        a.max_partition_defect = std::max(a.max_partition_defect, std::fabs(total - 1.0));
    }
    for (const auto& kv : edge_count) {
        const auto& v0 = mesh.vertices[kv.first.first];
        const auto& v1 = mesh.vertices[kv.first.second];
        const double len = (v0.position - v1.position).norm();
        if (len > 1e-14)
            a.zeta_lipschitz = std::max(a.zeta_lipschitz, std::fabs(v0.zeta - v1.zeta) / len);
    }
    return a;
}

double mesh_area(const GluedSurfaceMesh& mesh, const ChartMetric& m) {
    double area = 0.0;
    for (const auto& t : mesh.triangles) {
        const Vec3 &p0 = mesh.vertices[t[0]].position, &p1 = mesh.vertices[t[1]].position,
                   &p2 = mesh.vertices[t[2]].position;
        const Mat3 g = m.eval((p0 + p1 + p2) / 3.0);
        const Vec3 u = p1 - p0, v = p2 - p0;
        const double uu = u.dot(g * u), vv = v.dot(g * v), uv = u.dot(g * v);
        area += 0.5 * std::sqrt(std::max(0.0, uu * vv - uv * uv));
    }
    return area;
}

std::string export_obj(const GluedSurfaceMesh& mesh) {
    std::ostringstream os;
    os << "# glued surface mesh, " << mesh.vertices.size() << " vertices, "
       << mesh.triangles.size() << " triangles\n";
    os << "# region codes: 0 sphere, 1 neck, 2 transition+, 3 transition-\n";
    char buf[256];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.position[0], v.position[1],
                      v.position[2]);
        os << buf;
        std::snprintf(buf, sizeof(buf), "# region %d owner %d\n", v.region, v.region_owner);
        os << buf;
    }
    for (const auto& t : mesh.triangles) {
        std::snprintf(buf, sizeof(buf), "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
        os << buf;
    }
    return os.str();
}

std::string export_ply(const GluedSurfaceMesh& mesh) {
    std::ostringstream os;
    os << "ply\nformat ascii 1.0\n";
    os << "element vertex " << mesh.vertices.size() << "\n";
    os << "property double x\nproperty double y\nproperty double z\n";
    os << "property int region\nproperty double chi_sph\nproperty double chi_neck\n";
    os << "property double zeta\n";
    os << "element face " << mesh.triangles.size() << "\n";
    os << "property list uchar int vertex_indices\nend_header\n";
    char buf[512];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %d %.17g %.17g %.17g\n", v.position[0],
                      v.position[1], v.position[2], v.region, v.chi_sph, v.chi_neck, v.zeta);
        os << buf;
    }
    for (const auto& t : mesh.triangles) {
        std::snprintf(buf, sizeof(buf), "3 %d %d %d\n", t[0], t[1], t[2]);
        os << buf;
    }
    return os.str();
}

} // namespace cmcnet
