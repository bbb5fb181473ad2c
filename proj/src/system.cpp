#include "pentropy/system.hpp"

#include <cmath>

namespace pentropy {

static void check_not_singular(const MapSystem& system, const CVec& p) {
    if (system.singular_distance(p) <= kSingularTolerance)
        raise(ErrorKind::SingularPoint, system.name + ": point within tolerance of A");
}

CVec evaluate(const MapSystem& system, const CVec& p) {
    check_not_singular(system, p);
    CVec image = system.atlas.wrap(system.evaluate_rule(p));
    if (!system.atlas.locate(image))
        raise(ErrorKind::OutOfDomain, system.name + ": image leaves all charts");
    return image;
}

ChartPoint evaluate(const MapSystem& system, const ChartPoint& p) {
    CVec image = evaluate(system, p.coords);
    return ChartPoint{*system.atlas.locate(image), image};
}

CMat differential(const MapSystem& system, const CVec& p) {
    check_not_singular(system, p);
    return system.differential_rule(p);
}

CMat differential(const MapSystem& system, const ChartPoint& p) {
    return differential(system, p.coords);
}

CMat differential_fd(const MapSystem& system, const CVec& p, double h) {
    const int k = system.k;
    CMat j(k, k);
    for (int col = 0; col < k; ++col) {
        CVec hi = p, lo = p;
        hi[col] += h;
        lo[col] -= h;
        CVec d = (system.evaluate_rule(hi) - system.evaluate_rule(lo)) / (2.0 * h);
        j.col(col) = d;
    }
    return j;
}

std::vector<CVec> inverse_images(const MapSystem& system, const CVec& p) {
    if (!system.has_inverse())
        raise(ErrorKind::NoBranchRule, system.name + ": no inverse branch rule");
    std::vector<CVec> raw = system.inverse_rule(p);
    std::vector<CVec> out;
    out.reserve(raw.size());
    for (CVec& y : raw) {
        y = system.atlas.wrap(y);
        if (!system.atlas.locate(y)) continue;
        double residual = system.atlas.distance(system.atlas.wrap(system.evaluate_rule(y)), p);
        if (residual > kBranchResidual)
            raise(ErrorKind::RootFindingFailure,
                  system.name + ": branch residual " + std::to_string(residual));
        out.push_back(y);
    }
    return out;
}

std::vector<ChartPoint> inverse_images(const MapSystem& system, const ChartPoint& p) {
    std::vector<ChartPoint> out;
    for (const CVec& y : inverse_images(system, p.coords))
        out.push_back(ChartPoint{*system.atlas.locate(y), y});
    return out;
}

double set_distance(const Atlas& atlas, const std::vector<CVec>& a, const std::vector<CVec>& b) {
    if (a.empty() || b.empty()) raise(ErrorKind::EmptySet, "set_distance with empty sample set");
    double best = std::numeric_limits<double>::infinity();
    for (const CVec& x : a)
        for (const CVec& y : b) best = std::min(best, atlas.distance(x, y));
    return best;
}

double orbit_distance(const MapSystem& system, const ChartPoint& a, const ChartPoint& b, int n) {
    CVec x = a.coords, y = b.coords;
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        d = std::max(d, system.atlas.distance(x, y));
        if (i + 1 < n) {
            x = evaluate(system, x);
            y = evaluate(system, y);
        }
    }
    return d;
}

OrbitSegment forward_orbit(const MapSystem& system, const CVec& x0, int n) {
    OrbitSegment orbit;
    orbit.n = n;
    orbit.points.reserve(static_cast<size_t>(n) + 1);
    orbit.jacobians.reserve(static_cast<size_t>(n));
    CVec x = x0;
    for (int i = 0; i <= n; ++i) {
        double sd = system.singular_distance(x);
        orbit.min_singular_distance = std::min(orbit.min_singular_distance, sd);
        if (sd <= kSingularTolerance)
            raise(ErrorKind::SingularOrbit, system.name + ": orbit hits A at step " + std::to_string(i));
        orbit.points.push_back(x);
        if (i < n) {
            orbit.jacobians.push_back(differential(system, x));
            x = evaluate(system, x);
        }
    }
    return orbit;
}

} // namespace pentropy
