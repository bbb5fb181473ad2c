#include "pentropy/orbit.hpp"

#include <algorithm>

namespace pentropy {

static OrbitSegment backward_orbit(const MapSystem& system, const CVec& x0, int n,
                                   std::uint64_t seed) {
    if (!system.has_inverse())
        raise(ErrorKind::NoBranchRule, system.name + ": backward sampling needs inverse branches");
    std::mt19937_64 rng = rng_stream(seed, 0x6f72626974ull);
    std::vector<CVec> chain;
    chain.push_back(x0);
    CVec x = x0;
    for (int i = 0; i < n; ++i) {
        std::vector<CVec> branches = inverse_images(system, x);
        // Branches landing on A cannot continue the history.
        branches.erase(std::remove_if(branches.begin(), branches.end(),
                                      [&](const CVec& y) {
                                          return system.singular_distance(y) <= kSingularTolerance;
                                      }),
                       branches.end());
        if (branches.empty())
            raise(ErrorKind::SingularOrbit,
                  system.name + ": all inverse branches near A at depth " + std::to_string(i));
        std::uniform_int_distribution<size_t> pick(0, branches.size() - 1);
        x = branches[pick(rng)];
        chain.push_back(x);
    }
    OrbitSegment orbit;
    orbit.n = n;
    for (size_t i = chain.size(); i-- > 0;) {
        const CVec& p = chain[i];
        orbit.min_singular_distance = std::min(orbit.min_singular_distance, system.singular_distance(p));
        orbit.points.push_back(p);
        if (i > 0) orbit.jacobians.push_back(differential(system, p));
    }
    return orbit;
}

OrbitSegment sample_orbit(const MapSystem& system, const CVec& x0, int n, Direction direction,
                          std::uint64_t seed) {
    if (direction == Direction::Forward) return forward_orbit(system, x0, n);
    return backward_orbit(system, x0, n, seed);
}

} // namespace pentropy
