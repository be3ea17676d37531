#pragma once

#include "cmcnet/curve_solver.hpp"
#include "cmcnet/gluing.hpp"
#include "cmcnet/manifold.hpp"

#include <string>
#include <vector>

namespace cmcnet {

struct PlacementError : Error {
    double closing_tau;
    double target_tau;
    int edge;
    PlacementError(const std::string& w, double ct, double tt, int e)
        : Error(w), closing_tau(ct), target_tau(tt), edge(e) {}
};
struct DeltaViolationError : Error {
    explicit DeltaViolationError(const std::string& w) : Error(w) {}
};

// Separation schedule tau(t) along an edge: either derived from the curve's
// neck-size function via eps-matching and the separation law, or uniform.
struct TauSchedule {
    bool uniform = false;
    double uniform_tau = 0.1;
    // reference expansion constants for the schedule (self-consistent
    // single-source values are computed by default_schedule)
    double c_ref = 0.0753;
    double C_ref = 0.1592;
    double band = 0.2; // closing-separation admissibility band

    double tau_of_f(double f) const;
};

TauSchedule default_schedule();
TauSchedule uniform_schedule(double tau, double band = 0.2);

struct EdgePlacement {
    std::vector<double> t;        // bead arclengths (last one at the edge end)
    std::vector<double> tau;      // per-gap separations, tau[k] between beads k, k+1
    double closing_tau = 0.0;     // measured separation of the final gap
    double closing_target = 0.0;  // schedule value it is compared against
    bool closed_loop = false;
};

EdgePlacement place_beads(const ChartMetric& m, const CondensateCurve& curve, double r,
                          const TauSchedule& schedule, bool closed_loop = false, int edge_id = 0);

struct RadiusInterval {
    double lo, hi;
    int bead_count;
};

std::vector<RadiusInterval> admissible_radii(const ChartMetric& m, const CondensateCurve& curve,
                                             double r_lo, double r_hi, const TauSchedule& schedule,
                                             bool closed_loop = false, int grid = 240);

struct BeadNetwork {
    struct Slot {
        int neck = -1;      // incident neck id
        Vec3 direction;     // unit vector at the bead toward the neck (chart components)
        Vec3 t1, t2;        // tangent basis at the singular point, aligned with the neck frame
        double weight = 0.0; // singular weight eps_i
        double c = 0.0, C = 0.0; // expansion constants of this block at this point
    };
    struct Bead {
        Vec3 center;
        Mat3 frame; // g-orthonormal columns; col 0 faces the incoming neck
        std::vector<Slot> slots;
        int edge = -1;
        double t = 0.0;
        bool is_vertex = false;
    };
    struct Neck {
        int bead_minus = -1, bead_plus = -1;
        int slot_minus = 0, slot_plus = 0;
        Vec3 midpoint;
        Mat3 frame; // col 0 = axis (tangent toward the plus side), cols 1,2 transverse
        NeckSpec spec;
        int edge = -1;
        double t_mid = 0.0;
    };
    std::vector<Bead> beads;
    std::vector<Neck> necks;
    double r = 0.0;
    double omega = 1.0;
    int matching_iterations = 0;
    double matching_residual = 0.0;
};

// Build the bead network for one edge (open chain or closed loop).
BeadNetwork build_network(const ChartMetric& m, const CondensateCurve& curve, double r,
                          const TauSchedule& schedule, bool closed_loop = false, int edge_id = 0);

// Move bead centers to exp_q(r W_q), re-join with geodesic segments,
// recompute frames, separations and neck matchings, and store the neck
// deformation parameters Xi.
BeadNetwork apply_perturbation(const ChartMetric& m, const BeadNetwork& network,
                               const std::vector<Vec3>& W,
                               const std::vector<std::array<double, 6>>& Xi,
                               double w_max = 0.5);

// Placement table (CSV): bead id, edge id, arclength t, tau, eps, directions.
std::string placement_table_csv(const BeadNetwork& network);

} // namespace cmcnet
