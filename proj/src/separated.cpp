#include "pentropy/separated.hpp"

#include <cmath>
#include <unordered_map>

namespace pentropy {

SeparatedFamily greedy_separated(size_t candidate_count, int n, double delta,
                                 const std::function<bool(int, int)>& separated_predicate,
                                 const std::function<double(int, int)>& distance) {
    SeparatedFamily family;
    family.n = n;
    family.delta = delta;
    for (size_t i = 0; i < candidate_count; ++i) {
        int witness = -1;
        for (int j : family.accepted) {
            if (!separated_predicate(static_cast<int>(i), j)) {
                witness = j;
                break;
            }
        }
        if (witness >= 0)
            family.audit.emplace_back(static_cast<int>(i), witness);
        else
            family.accepted.push_back(static_cast<int>(i));
    }
    if (distance && family.accepted.size() <= 1500) {
        for (size_t a = 0; a < family.accepted.size(); ++a)
            for (size_t b = a + 1; b < family.accepted.size(); ++b)
                family.pairwise_min =
                    std::min(family.pairwise_min, distance(family.accepted[a], family.accepted[b]));
        family.pairwise_min_exact = true;
    } else {
        family.pairwise_min = delta; // certified lower bound
    }
    return family;
}

namespace {

struct CellKey {
    std::vector<int32_t> cells;
    bool operator==(const CellKey& o) const { return cells == o.cells; }
};

struct CellKeyHash {
    size_t operator()(const CellKey& k) const {
        size_t h = 1469598103934665603ull;
        for (int32_t c : k.cells) {
            h ^= static_cast<size_t>(static_cast<uint32_t>(c));
            h *= 1099511628211ull;
        }
        return h;
    }
};

// Quantized coordinates of one point; periodic axes wrap modulo their cell
// count so neighboring cells stay adjacent across the seam.
CellKey cell_of(const Atlas& atlas, const CVec& p, double delta, std::vector<int32_t>& cells_per_axis) {
    const Chart& chart = atlas.charts.front();
    CellKey key;
    const bool complex_mode = atlas.mode == Mode::Complex;
    for (int j = 0; j < chart.dim(); ++j) {
        double period = chart.period[static_cast<size_t>(j)];
        double re = p[j].real();
        if (period > 0.0) {
            int32_t ncells = std::max<int32_t>(1, static_cast<int32_t>(std::ceil(period / delta)));
            double wrapped = std::fmod(re, period);
            if (wrapped < 0) wrapped += period;
            int32_t c = std::min<int32_t>(static_cast<int32_t>(wrapped / (period / ncells)), ncells - 1);
            key.cells.push_back(c);
            cells_per_axis.push_back(ncells);
        } else {
            key.cells.push_back(static_cast<int32_t>(std::floor(re / delta)));
            cells_per_axis.push_back(0);
        }
        if (complex_mode) {
            key.cells.push_back(static_cast<int32_t>(std::floor(p[j].imag() / delta)));
            cells_per_axis.push_back(0);
        }
    }
    return key;
}

} // namespace

SeparatedFamily greedy_separated_orbits(const Atlas& atlas,
                                        const std::vector<std::vector<CVec>>& orbits, int n,
                                        double delta) {
    SeparatedFamily family;
    family.n = n;
    family.delta = delta;
    if (orbits.empty()) return family;

    auto dn_below = [&](int a, int b) {
        // True when d_n(a, b) < delta.
        for (int i = 0; i < n; ++i)
            if (atlas.distance(orbits[static_cast<size_t>(a)][static_cast<size_t>(i)],
                               orbits[static_cast<size_t>(b)][static_cast<size_t>(i)]) >= delta)
                return false;
        return true;
    };

    std::unordered_map<CellKey, std::vector<int>, CellKeyHash> buckets;
    const int last = n - 1;

    std::vector<int32_t> axes_cells;
    for (size_t i = 0; i < orbits.size(); ++i) {
        axes_cells.clear();
        CellKey key = cell_of(atlas, orbits[i][static_cast<size_t>(last)], delta, axes_cells);
        const int dims = static_cast<int>(key.cells.size());

        int witness = -1;
        // 3^dims neighboring cells cover every point within delta at the last
        // iterate; a rejecting witness must live there.
        std::vector<int> offset(static_cast<size_t>(dims), -1);
        while (witness < 0) {
            CellKey probe = key;
            for (int d = 0; d < dims; ++d) {
                int32_t c = key.cells[static_cast<size_t>(d)] + offset[static_cast<size_t>(d)];
                int32_t ncells = axes_cells[static_cast<size_t>(d)];
                if (ncells > 0) c = static_cast<int32_t>(((c % ncells) + ncells) % ncells);
                probe.cells[static_cast<size_t>(d)] = c;
            }
            auto it = buckets.find(probe);
            if (it != buckets.end()) {
                for (int j : it->second) {
                    if (dn_below(static_cast<int>(i), j)) {
                        witness = j;
                        break;
                    }
                }
            }
            int d = dims - 1;
            while (d >= 0 && ++offset[static_cast<size_t>(d)] == 2) {
                offset[static_cast<size_t>(d)] = -1;
                --d;
            }
            if (d < 0) break;
        }

        if (witness >= 0) {
            family.audit.emplace_back(static_cast<int>(i), witness);
        } else {
            family.accepted.push_back(static_cast<int>(i));
            buckets[key].push_back(static_cast<int>(i));
        }
    }

    if (family.accepted.size() <= 1500) {
        for (size_t a = 0; a < family.accepted.size(); ++a)
            for (size_t b = a + 1; b < family.accepted.size(); ++b) {
                double d = 0.0;
                for (int i = 0; i < n; ++i)
                    d = std::max(d, atlas.distance(
                                        orbits[static_cast<size_t>(family.accepted[a])][static_cast<size_t>(i)],
                                        orbits[static_cast<size_t>(family.accepted[b])][static_cast<size_t>(i)]));
                family.pairwise_min = std::min(family.pairwise_min, d);
            }
        family.pairwise_min_exact = true;
    } else {
        family.pairwise_min = delta;
    }
    return family;
}

double cloud_orbit_distance(const Atlas& atlas, const PatchOrbitData& a, const PatchOrbitData& b,
                            int n) {
    double dn = 0.0;
    for (int i = 0; i < n; ++i) {
        double sd = std::numeric_limits<double>::infinity();
        for (const CVec& x : a.clouds[static_cast<size_t>(i)])
            for (const CVec& y : b.clouds[static_cast<size_t>(i)])
                sd = std::min(sd, atlas.distance(x, y));
        dn = std::max(dn, sd);
    }
    return dn;
}

SeparatedFamily greedy_separated_patches(const Atlas& atlas,
                                         const std::vector<PatchOrbitData>& items, int n,
                                         double delta) {
    SeparatedFamily family;
    family.n = n;
    family.delta = delta;

    auto separated = [&](int ia, int ib) {
        const PatchOrbitData& a = items[static_cast<size_t>(ia)];
        const PatchOrbitData& b = items[static_cast<size_t>(ib)];
        // Anchor lower bound skips the set-distance scan for far pairs.
        for (int i = 0; i < n; ++i) {
            double lb = atlas.distance(a.anchor_orbit[static_cast<size_t>(i)],
                                       b.anchor_orbit[static_cast<size_t>(i)]) -
                        a.spread[static_cast<size_t>(i)] - b.spread[static_cast<size_t>(i)];
            if (lb >= delta) return true;
        }
        for (int i = 0; i < n; ++i) {
            bool all_pairs_far = true;
            for (const CVec& x : a.clouds[static_cast<size_t>(i)]) {
                for (const CVec& y : b.clouds[static_cast<size_t>(i)]) {
                    if (atlas.distance(x, y) < delta) {
                        all_pairs_far = false;
                        break;
                    }
                }
                if (!all_pairs_far) break;
            }
            if (all_pairs_far) return true; // this iterate's set distance >= delta
        }
        return false;
    };

    for (size_t i = 0; i < items.size(); ++i) {
        if (!items[i].valid) continue;
        int witness = -1;
        for (int j : family.accepted) {
            if (!separated(static_cast<int>(i), j)) {
                witness = j;
                break;
            }
        }
        if (witness >= 0)
            family.audit.emplace_back(static_cast<int>(i), witness);
        else
            family.accepted.push_back(static_cast<int>(i));
    }

    if (family.accepted.size() <= 600) {
        for (size_t a = 0; a < family.accepted.size(); ++a)
            for (size_t b = a + 1; b < family.accepted.size(); ++b)
                family.pairwise_min = std::min(
                    family.pairwise_min,
                    cloud_orbit_distance(atlas, items[static_cast<size_t>(family.accepted[a])],
                                         items[static_cast<size_t>(family.accepted[b])], n));
        family.pairwise_min_exact = true;
    } else {
        family.pairwise_min = delta;
    }
    return family;
}

} // namespace pentropy
