// Dynamical systems: evaluation rule, differential, inverse branches and the
// distance to the singular set A = I u C (indeterminacy + critical loci).
#ifndef PENTROPY_SYSTEM_HPP
#define PENTROPY_SYSTEM_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pentropy/chart.hpp"

namespace pentropy {

// Points whose distance to A falls below this are treated as on A.
constexpr double kSingularTolerance = 1e-8;
// Residual budget for inverse branches: ||f(y) - x|| must not exceed this.
constexpr double kBranchResidual = 1e-9;

struct ReferenceValues {
    std::optional<double> h_top;
    std::optional<double> h_mu;  // entropy of the named reference measure
    std::vector<double> exponents;
};

// How estimators should produce candidate points close to the relevant
// invariant set of the system.
enum class SamplerHint { BackwardCloud, ForwardOrbit, BoxLattice };

struct MapSystem {
    std::string name;
    int k = 1;
    Mode mode = Mode::Complex;
    Atlas atlas;

    std::function<CVec(const CVec&)> evaluate_rule;
    std::function<CMat(const CVec&)> differential_rule;
    // All solutions of f(y) = x, already wrapped into chart coordinates.
    std::function<std::vector<CVec>(const CVec&)> inverse_rule;
    std::function<double(const CVec&)> singular_distance_rule;

    int degree = 1;  // expected branch count
    ReferenceValues reference;
    SamplerHint sampler = SamplerHint::BoxLattice;
    CVec basin_point;        // a point whose forward orbit is well behaved
    double sampling_radius = 1.0;  // box used for lattice/random candidates

    bool has_inverse() const { return static_cast<bool>(inverse_rule); }
    double singular_distance(const CVec& p) const {
        return singular_distance_rule ? singular_distance_rule(p)
                                      : std::numeric_limits<double>::infinity();
    }
};

struct OrbitSegment {
    std::vector<CVec> points;    // x_0 .. x_n
    std::vector<CMat> jacobians; // Df(x_0) .. Df(x_{n-1})
    double min_singular_distance = std::numeric_limits<double>::infinity();
    int n = 0;
};

ChartPoint evaluate(const MapSystem& system, const ChartPoint& p);
CVec evaluate(const MapSystem& system, const CVec& p);

CMat differential(const MapSystem& system, const ChartPoint& p);
CMat differential(const MapSystem& system, const CVec& p);

// Central finite differences of the evaluation rule; the oracle against which
// differential_rule is validated.
CMat differential_fd(const MapSystem& system, const CVec& p, double h = 1e-6);

std::vector<ChartPoint> inverse_images(const MapSystem& system, const ChartPoint& p);
std::vector<CVec> inverse_images(const MapSystem& system, const CVec& p);

// min over sample pairs of the max-norm distance (finite-sample surrogate for
// the inf over the two sets).
double set_distance(const Atlas& atlas, const std::vector<CVec>& a, const std::vector<CVec>& b);

// d_n(a, b) = max_{0 <= i <= n-1} dist(f^i a, f^i b).
double orbit_distance(const MapSystem& system, const ChartPoint& a, const ChartPoint& b, int n);

// Forward orbit of length n (points 0..n with jacobians at 0..n-1).
OrbitSegment forward_orbit(const MapSystem& system, const CVec& x0, int n);

} // namespace pentropy

#endif
