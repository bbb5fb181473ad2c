// Charts and points. An atlas is a finite list of axis-aligned boxes in a
// shared coordinate space (charts differ by translation only, so transport is
// the identity on coordinates). Coordinates may be periodic (torus systems);
// the metric is the max norm of per-coordinate moduli with periodic wrap.
#ifndef PENTROPY_CHART_HPP
#define PENTROPY_CHART_HPP

#include <optional>
#include <vector>

#include "pentropy/error.hpp"
#include "pentropy/linalg.hpp"

namespace pentropy {

enum class Mode { Complex, Real };

struct Chart {
    // Box bounds per coordinate, applied to |Re| and |Im| separately.
    std::vector<double> half_width;
    // Period per coordinate (0 = not periodic). Periodic coordinates live in
    // [0, period) on the real axis.
    std::vector<double> period;

    int dim() const { return static_cast<int>(half_width.size()); }
    bool contains(const CVec& coords, double slack = 0.0) const;
};

struct ChartPoint {
    int chart_id = 0;
    CVec coords;

    int dim() const { return static_cast<int>(coords.size()); }
};

struct Atlas {
    std::vector<Chart> charts;
    Mode mode = Mode::Complex;

    const Chart& chart(int id) const { return charts.at(static_cast<size_t>(id)); }

    // Smallest-index chart containing the coordinates, if any.
    std::optional<int> locate(const CVec& coords) const;

    bool periodic() const;

    // Wraps periodic coordinates into their fundamental domain.
    CVec wrap(const CVec& coords) const;

    // Per-coordinate displacement p - q with periodic wrap to the nearest
    // representative.
    CVec displacement(const CVec& p, const CVec& q) const;

    double distance(const CVec& p, const CVec& q) const;
    // Errors with OutOfDomain if the two points share no chart.
    double distance(const ChartPoint& p, const ChartPoint& q) const;
};

Atlas single_box_atlas(int k, double half_width, Mode mode);
Atlas torus_atlas(int k, double period, Mode mode);

} // namespace pentropy

#endif
