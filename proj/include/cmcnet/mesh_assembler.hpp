#pragma once

#include "cmcnet/network_builder.hpp"

#include <array>
#include <limits>
#include <string>
#include <vector>

namespace cmcnet {

struct MeshResolution {
    int block_level = 4;            // icosahedral subdivision level
    int neck_angular = 64;          // azimuthal samples on necks and cap rings
    double neck_radial_growth = 1.3;
    int cap_rings = 4;              // structured rings between cap and icosa zone
    double weld_tolerance = -1.0;   // <0: use 1e-9 + r^3 (chart-transition bound)
};

struct MeshVertex {
    Vec3 position; // global chart coordinates
    int chart_kind = 0; // 0 = bead normal chart, 1 = neck midpoint chart
    int chart_owner = -1;
    Vec3 chart_coords; // physical units in the construction chart
    int region = 0;     // 0 sphere, 1 neck, 2 transition +, 3 transition -
    int region_owner = -1;
    double chi_sph = 1.0, chi_neck = 0.0; // partition values at sigma_4
    double zeta = 0.0;
    double dist_neck = std::numeric_limits<double>::infinity();
    int nearest_neck = -1;
};

struct MeshPatch {
    std::vector<MeshVertex> vertices;
    std::vector<std::array<int, 3>> triangles;
    // ordered boundary loops; block patches carry one per incident neck,
    // neck patches one per side
    std::vector<std::vector<int>> boundary_loops;
    std::vector<int> boundary_loop_tags; // slot / side identifier per loop
};

struct DegenerateGraphError : Error {
    explicit DegenerateGraphError(const std::string& w) : Error(w) {}
};
struct WeldError : Error {
    explicit WeldError(const std::string& w) : Error(w) {}
};

// Triangulated block surface r (1 - G(theta)) theta over the sphere minus the
// exclusion caps, mapped to the manifold by the bead's normal chart.
MeshPatch build_block_mesh(const ChartMetric& m, const BeadNetwork::Bead& bead, double r,
                           const GeneratingFunction& G, const MeshResolution& res = {});

// Triangulated neck: both interpolated graphs over the midpoint chart plane,
// joined at the waist, extended outward to the adjacent blocks' cap rings.
MeshPatch build_neck_mesh(const ChartMetric& m, const BeadNetwork& network, int neck_id,
                          const MeshResolution& res = {});

struct GluedSurfaceMesh {
    std::vector<MeshVertex> vertices;
    std::vector<std::array<int, 3>> triangles;
    BeadNetwork network;
    double r = 0.0;
    double sigma1 = 0.0, sigma2 = 0.0, sigma3 = 0.0, sigma4 = 0.0;
    double max_weld_mismatch = 0.0;

    // first vertex index of each block / neck patch (diagnostics bookkeeping)
    std::vector<int> block_vertex_begin, block_vertex_end;
    std::vector<int> neck_vertex_begin, neck_vertex_end;
};

GluedSurfaceMesh assemble(const ChartMetric& m, const BeadNetwork& network,
                          const MeshResolution& res = {});

struct MeshAudit {
    bool watertight = false;
    bool orientation_consistent = false;
    int boundary_edges = 0;
    int euler_characteristic = 0;
    double max_partition_defect = 0.0;
    double zeta_lipschitz = 0.0;
};
MeshAudit audit_mesh(const GluedSurfaceMesh& mesh);

// discrete surface area with respect to the ambient metric
double mesh_area(const GluedSurfaceMesh& mesh, const ChartMetric& m);

// partition profile used for both region labels and diagnostics cutoffs:
// 1 inside sigma/2, smooth monotone decay to 0 at sigma
double neck_cutoff_value(double dist, double sigma);

std::string export_obj(const GluedSurfaceMesh& mesh);
std::string export_ply(const GluedSurfaceMesh& mesh);

// solve the block generating function from a bead's slots
GeneratingFunction block_generating_function(const BeadNetwork::Bead& bead, int band_limit = 48);

} // namespace cmcnet
