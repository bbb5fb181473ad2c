// Lipschitz graph patches over low-dimensional balls: the objects counted by
// the dimensional preimage entropies. A patch is a graph over a max-norm ball
// in an l-dimensional subspace: ambient(X) = anchor + base X + complement V(X).
// Values come from an exact evaluator closure; lattices are sampled from it
// for audits, volumes and serialization. l = 0 is a point, l = k is the ball
// itself (empty complement).
#ifndef PENTROPY_GRAPH_PATCH_HPP
#define PENTROPY_GRAPH_PATCH_HPP

#include <functional>
#include <iosfwd>
#include <optional>

#include "pentropy/chart.hpp"

namespace pentropy {

using Evaluator = std::function<CVec(const CVec&)>;

// Affine value rule c + L X; carried alongside the evaluator when the patch
// is exactly affine so transforms can stay closed-form.
struct AffineValues {
    CVec c;
    CMat L;
};

struct Admissibility {
    double delta = 0.0;
    int n = 0;
    double min_singular = std::numeric_limits<double>::infinity();
    double forward_residual = 0.0; // max residual of f^n(samples) against the target patch
    bool filled = false;
};

struct GraphPatch {
    Mode mode = Mode::Complex;
    int k = 0;
    int l = 0;
    CVec anchor;      // ambient point at base coordinate 0
    CMat base;        // k x l, orthonormal columns
    CMat complement;  // k x (k-l), orthonormal columns, orthogonal to base
    std::vector<double> radii; // per-base-axis radius (polydisk/box, max norm)
    double lip_bound = 0.0;
    double nominal_delta = 0.0; // the delta of the admissibility class
    Evaluator values;           // base coords -> complement values
    std::optional<AffineValues> affine;
    Admissibility admissibility;
    int grid_resolution = 17;

    double radius() const { return radii.empty() ? 0.0 : *std::min_element(radii.begin(), radii.end()); }
    CVec value(const CVec& x) const;
    CVec center_value() const { return value(CVec::Zero(l)); }
    CVec ambient(const CVec& x) const;

    // Full lattice of base coordinates: per complex axis a polar grid (rings x
    // angles, center included), per real axis an odd uniform grid. Row-major
    // tensor order.
    std::vector<CVec> base_nodes() const;
    // Sparse subset for pairwise audits: center, boundary and mid rings.
    std::vector<CVec> audit_base_nodes() const;

    std::vector<CVec> ambient_nodes() const;
    std::vector<CVec> ambient_audit_nodes() const;

    // Max Lipschitz quotient of the value rule over lattice node pairs.
    double sampled_lip() const;
};

GraphPatch point_patch(const CVec& anchor, int k, Mode mode, double delta);
// Flat patch: values identically zero over the given ball.
GraphPatch flat_patch(const CVec& anchor, const CMat& base, const CMat& complement,
                      const std::vector<double>& radii, Mode mode);
// Full-dimensional patch: the ball itself.
GraphPatch ball_patch(const CVec& anchor, int k, Mode mode, double radius);
// Patch in block coordinates (anchor 0, canonical frames); the graph-transform
// module works on these.
GraphPatch block_graph(int k1, int k2, Mode mode, const std::vector<double>& radii,
                       double lip_bound, Evaluator values,
                       std::optional<AffineValues> affine = std::nullopt);
// Graph (psi(Y), Y) over the second block: base spans the k2 side.
GraphPatch stable_block_graph(int k1, int k2, Mode mode, const std::vector<double>& radii,
                              double lip_bound, Evaluator values,
                              std::optional<AffineValues> affine = std::nullopt);

// Membership checks for the two admissibility classes.
bool qualifies_target_class(const GraphPatch& p, double tol = 1e-9); // center value 0, lip <= 1
bool qualifies_preimage_class(const GraphPatch& p, double delta, int n, double tol = 1e-9);

// Restriction to a smaller concentric ball (per-axis clamp).
GraphPatch cutoff(const GraphPatch& graph, double radius);

// Fixes the last base coordinate at the center value and re-houses it as the
// first complement coordinate: l -> l-1. Output nodes are a subset of the
// input nodes, values bit-identical.
GraphPatch slice_graph(const GraphPatch& w);

// Adjoins the first complement direction to the base: m -> m+1. The output
// contains the input; containment is verified on the sample grid to 1e-9.
GraphPatch extend_graph(const GraphPatch& delta_patch);

// Max over inner's lattice of the distance from the node to outer's graph
// (re-expressed through outer's frames).
double containment_residual(const GraphPatch& inner, const GraphPatch& outer);

// Distance from one ambient point to the patch: base-coordinate excess beyond
// the ball plus complement mismatch (max of the two).
double patch_point_distance(const GraphPatch& p, const CVec& point, const Atlas& atlas);

// Graph volume by quadrature over the base ball: complex mode integrates
// det(I + DV^H DV) (real 2l-volume), real mode sqrt(det(I + DV^T DV)).
double graph_volume(const GraphPatch& w);

// Injectivity margin of a centered local map on the max-norm ball:
// 1/2 - sup_z ||I - Dg(0)^{-1} Dg(z)||. Positive margin certifies one-to-one.
double check_local_injectivity(const Evaluator& g, int k, double radius);

// Plain-text tabular serialization (documented in the README).
void write_patch(const GraphPatch& p, std::ostream& out);
GraphPatch read_patch(std::istream& in);

} // namespace pentropy

#endif
