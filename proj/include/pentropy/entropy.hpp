// Entropy estimators: topological (separated point counts), Brin-Katok metric
// (Bowen-ball frequencies), pointwise preimage (separated leaves of preimage
// trees) and the dimensional preimage entropies h_(m,l) (separated graph
// patches inside f^{-n} of admissible targets).
//
// Every reported value is a lower-bound estimate: the sup over targets is
// replaced by a max over sampled and pigeonhole-selected targets, and greedy
// maximal families bound the maximal count between delta and 2 delta.
#ifndef PENTROPY_ENTROPY_HPP
#define PENTROPY_ENTROPY_HPP

#include "pentropy/graph_patch.hpp"
#include "pentropy/separated.hpp"
#include "pentropy/system.hpp"

namespace pentropy {

struct EstimateRow {
    double delta = 0.0;
    int n = 0;
    double count = 0.0; // integer-valued for counting estimators; the metric
                        // estimator stores the inverse Bowen-ball frequency
    double rate = 0.0;  // log(count) / n
};

struct EntropyEstimate {
    std::string quantity; // top | metric | preimage | dim
    int m = -1, l = -1;
    std::string system;
    std::uint64_t seed = 0;
    std::vector<EstimateRow> rows; // delta-major (schedule order), n ascending
    std::vector<double> per_delta_slope; // LS slope of log count vs n, top half window
    double extrapolated = 0.0;           // slope at the smallest delta
    double delta_spread = 0.0;           // max - min over per-delta slopes
    // diagnostics
    long candidates = 0;
    long rejected_singular = 0;
    long rejected_domain = 0;
    long budget_hits = 0;
    std::vector<std::string> warnings;

    const EstimateRow* row(double delta, int n) const;
};

struct EntropyParams {
    std::vector<double> delta_schedule; // strictly decreasing
    std::vector<int> n_schedule;        // strictly increasing
    std::uint64_t seed = 1;
    int samples = 30000;      // candidate budget for separated-point counts
    int targets = 3;          // sampled admissible targets per (delta, n)
    long budget = 200000;     // preimage tree node cap / enumeration cap
    int backward_burn = 24;   // backward-cloud refinement depth
    long orbit_length = 200000; // Brin-Katok orbit length
    int base_points = 32;       // Brin-Katok base point count
    int grid = 17;
    double containment_tol = 1e-8; // forward-image containment for enumerated graphs
};

// Candidate points with stored forward orbits of length n_max, generated per
// the system's sampler hint (lattice + random, plus backward-refined or
// attractor-orbit candidates). Deterministic for a fixed seed.
struct CandidateCloud {
    std::vector<std::vector<CVec>> orbits; // each has n_max + 1 entries
    long rejected_singular = 0;
    long rejected_domain = 0;
};
CandidateCloud candidate_cloud(const MapSystem& system, int n_max, int samples,
                               int backward_burn, std::uint64_t seed);

EntropyEstimate estimate_htop(const MapSystem& system, const EntropyParams& params);

EntropyEstimate estimate_metric_entropy(const MapSystem& system, const EntropyParams& params);

EntropyEstimate estimate_pointwise_preimage_entropy(const MapSystem& system,
                                                    const EntropyParams& params);

EntropyEstimate estimate_dimensional_entropy(const MapSystem& system, int m, int l,
                                             const EntropyParams& params);

// Random admissible targets: flat and low-Lipschitz graphs with center value 0
// and lip <= 1 over balls of radius delta; m = 0 gives points, m = k balls.
std::vector<GraphPatch> sample_admissible_targets(const MapSystem& system, int m, double delta,
                                                  int count, std::uint64_t seed);

// Max-occupancy cube of a chart subdivision, returned as a full-dimensional
// patch whose ball circumscribes the cube. Ties resolve to the
// lexicographically smallest cube index.
std::pair<GraphPatch, long> cube_select_target(const MapSystem& system,
                                               const std::vector<CVec>& forward_images,
                                               double cube_size);

// All admissible l-dimensional graphs found inside f^{-n}(target): preimage
// tree leaves for l = 0, branch-chain pullbacks refitted over tangent-aligned
// balls of radius e^{-delta n} for l >= 1. An empty result is valid.
struct EnumerationResult {
    std::vector<GraphPatch> graphs;
    // For l = 0: forward orbits of the leaves (tree paths), parallel to graphs.
    std::vector<std::vector<CVec>> point_orbits;
    long budget_hits = 0;
    long rejected = 0; // lip / containment / admissibility failures
};
EnumerationResult enumerate_preimage_graphs(const MapSystem& system, const GraphPatch& target,
                                            int l, int n, double delta, long budget,
                                            std::uint64_t seed,
                                            double containment_tol = 1e-8);

// Preimage tree of one point, pruned near the singular set; leaves carry their
// forward path. Level sizes are capped by the node budget (reported).
struct PreimageTree {
    std::vector<std::vector<CVec>> leaf_orbits; // forward orbits, length depth+1
    std::vector<double> leaf_min_singular;
    long budget_hits = 0;
    long pruned_singular = 0;
};
PreimageTree preimage_tree(const MapSystem& system, const CVec& x, int depth, long budget);

// Iterated audit clouds of a patch for separation tests.
PatchOrbitData patch_orbit_data(const MapSystem& system, const GraphPatch& patch, int n);

} // namespace pentropy

#endif
