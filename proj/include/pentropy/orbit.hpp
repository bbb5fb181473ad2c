// Orbit sampling, forward and backward. Backward orbits realize natural
// extension sampling: at each step one inverse branch is chosen uniformly at
// random (seeded), so a backward segment is a random orbit history.
#ifndef PENTROPY_ORBIT_HPP
#define PENTROPY_ORBIT_HPP

#include "pentropy/system.hpp"

namespace pentropy {

enum class Direction { Forward, Backward };

// Forward: points x0, f(x0), ..., f^n(x0).
// Backward: points y_n, ..., y_1, x0 with f(y_{i+1}) = y_i and y_1 ... chosen
// by seeded uniform branch choice; the returned segment is ordered forward
// (points[i+1] = f(points[i]), points.back() = x0).
OrbitSegment sample_orbit(const MapSystem& system, const CVec& x0, int n, Direction direction,
                          std::uint64_t seed = 0);

} // namespace pentropy

#endif
