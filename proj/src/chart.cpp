#include "pentropy/chart.hpp"

#include <cmath>

namespace pentropy {

bool Chart::contains(const CVec& coords, double slack) const {
    if (coords.size() != dim()) return false;
    for (int j = 0; j < dim(); ++j) {
        if (period[static_cast<size_t>(j)] > 0.0) continue; // periodic: always inside
        double hw = half_width[static_cast<size_t>(j)] + slack;
        if (std::abs(coords[j].real()) > hw) return false;
        if (std::abs(coords[j].imag()) > hw) return false;
    }
    return true;
}

std::optional<int> Atlas::locate(const CVec& coords) const {
    for (size_t i = 0; i < charts.size(); ++i)
        if (charts[i].contains(coords)) return static_cast<int>(i);
    return std::nullopt;
}

bool Atlas::periodic() const {
    for (const Chart& c : charts)
        for (double p : c.period)
            if (p > 0.0) return true;
    return false;
}

CVec Atlas::wrap(const CVec& coords) const {
    if (!periodic()) return coords;
    const Chart& c = charts.front();
    CVec out = coords;
    for (int j = 0; j < c.dim(); ++j) {
        double p = c.period[static_cast<size_t>(j)];
        if (p <= 0.0) continue;
        double re = std::fmod(out[j].real(), p);
        if (re < 0.0) re += p;
        out[j] = Complex(re, out[j].imag());
    }
    return out;
}

CVec Atlas::displacement(const CVec& p, const CVec& q) const {
    CVec d = p - q;
    if (!periodic()) return d;
    const Chart& c = charts.front();
    for (int j = 0; j < c.dim(); ++j) {
        double per = c.period[static_cast<size_t>(j)];
        if (per <= 0.0) continue;
        double re = std::remainder(d[j].real(), per);
        d[j] = Complex(re, d[j].imag());
    }
    return d;
}

double Atlas::distance(const CVec& p, const CVec& q) const {
    return max_norm(displacement(p, q));
}

double Atlas::distance(const ChartPoint& p, const ChartPoint& q) const {
    // Translated charts share coordinates, so transport is the identity; we
    // only demand that some chart sees both points.
    if (p.chart_id != q.chart_id) {
        bool common = false;
        for (size_t i = 0; i < charts.size(); ++i)
            if (charts[i].contains(p.coords) && charts[i].contains(q.coords)) {
                common = true;
                break;
            }
        if (!common)
            raise(ErrorKind::OutOfDomain, "points share no chart; distance undefined");
    }
    return distance(p.coords, q.coords);
}

Atlas single_box_atlas(int k, double half_width, Mode mode) {
    Chart c;
    c.half_width.assign(static_cast<size_t>(k), half_width);
    c.period.assign(static_cast<size_t>(k), 0.0);
    Atlas a;
    a.charts.push_back(c);
    a.mode = mode;
    return a;
}

Atlas torus_atlas(int k, double period, Mode mode) {
    Chart c;
    c.half_width.assign(static_cast<size_t>(k), period);
    c.period.assign(static_cast<size_t>(k), period);
    Atlas a;
    a.charts.push_back(c);
    a.mode = mode;
    return a;
}

} // namespace pentropy
