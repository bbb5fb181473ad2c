// Greedy maximal (n, delta)-separated families. Greedy maximality brackets
// the true maximum: a maximal delta-separated family dominates the maximum
// count at 2 delta, so counts are reported at both scales by the estimators.
#ifndef PENTROPY_SEPARATED_HPP
#define PENTROPY_SEPARATED_HPP

#include <functional>

#include "pentropy/chart.hpp"

namespace pentropy {

struct SeparatedFamily {
    std::vector<int> accepted;                 // candidate indices, insertion order
    std::vector<std::pair<int, int>> audit;    // rejected candidate -> accepted witness
    int n = 0;
    double delta = 0.0;
    double pairwise_min = std::numeric_limits<double>::infinity();
    bool pairwise_min_exact = false; // exact min recomputed only for small families
    std::uint64_t seed = 0;

    int count() const { return static_cast<int>(accepted.size()); }
};

// Generic greedy driver: the oracle answers "is d_n(i, j) >= delta". Candidates
// are visited in input order; deterministic for a fixed order.
SeparatedFamily greedy_separated(size_t candidate_count, int n, double delta,
                                 const std::function<bool(int, int)>& separated_predicate,
                                 const std::function<double(int, int)>& distance = nullptr);

// Fast path for point candidates with precomputed forward orbits: a spatial
// hash on the last-iterate coordinates prunes the witness search (a rejecting
// witness is within delta at iterate n-1, hence in a neighboring cell).
SeparatedFamily greedy_separated_orbits(const Atlas& atlas,
                                        const std::vector<std::vector<CVec>>& orbits, int n,
                                        double delta);

// Patch families: sampled iterate clouds with an anchor-based lower bound to
// skip exact set-distance work for far pairs.
struct PatchOrbitData {
    std::vector<CVec> anchor_orbit;          // iterates of the anchor
    std::vector<std::vector<CVec>> clouds;   // iterates of the audit samples
    std::vector<double> spread;              // max dist(cloud_i, anchor_i) per iterate
    bool valid = true;
};

SeparatedFamily greedy_separated_patches(const Atlas& atlas,
                                         const std::vector<PatchOrbitData>& items, int n,
                                         double delta);

// Exact d_n between two cloud sequences: max over iterates of the sampled set
// distance.
double cloud_orbit_distance(const Atlas& atlas, const PatchOrbitData& a, const PatchOrbitData& b,
                            int n);

} // namespace pentropy

#endif
