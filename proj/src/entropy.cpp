#include "pentropy/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pentropy/newton.hpp"
#include "pentropy/orbit.hpp"

namespace pentropy {

const EstimateRow* EntropyEstimate::row(double delta, int n) const {
    for (const EstimateRow& r : rows)
        if (r.n == n && std::abs(r.delta - delta) < 1e-12) return &r;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Table assembly

namespace {

double ls_slope(const std::vector<std::pair<double, double>>& xy) {
    if (xy.size() < 2) return 0.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : xy) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double n = static_cast<double>(xy.size());
    double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-14) return 0.0;
    return (n * sxy - sx * sy) / denom;
}

void finalize_estimate(EntropyEstimate& est, const std::vector<double>& deltas,
                       const std::vector<int>& ns) {
    est.per_delta_slope.clear();
    for (double d : deltas) {
        std::vector<std::pair<double, double>> xy;
        // Top-half window of the n schedule: the early rows carry transients.
        size_t start = ns.size() / 2;
        if (ns.size() >= 2 && start > ns.size() - 2) start = ns.size() - 2;
        for (size_t i = start; i < ns.size(); ++i) {
            const EstimateRow* r = est.row(d, ns[i]);
            if (r) xy.emplace_back(static_cast<double>(r->n), std::log(std::max(r->count, 1.0)));
        }
        est.per_delta_slope.push_back(ls_slope(xy));
    }
    if (!est.per_delta_slope.empty()) {
        est.extrapolated = est.per_delta_slope.back(); // smallest delta
        double lo = *std::min_element(est.per_delta_slope.begin(), est.per_delta_slope.end());
        double hi = *std::max_element(est.per_delta_slope.begin(), est.per_delta_slope.end());
        est.delta_spread = hi - lo;
    }
}

// A (n, delta)-separated family witnesses every smaller delta, so counts may
// be propagated down the (strictly decreasing) delta schedule. This keeps the
// table's delta-monotonicity exact, which raw greedy counts do not guarantee.
void enforce_delta_monotonicity(EntropyEstimate& est, const std::vector<double>& deltas,
                                const std::vector<int>& ns) {
    for (int n : ns) {
        double running = 0.0;
        for (double d : deltas) {
            for (EstimateRow& r : est.rows) {
                if (r.n != n || std::abs(r.delta - d) > 1e-12) continue;
                running = std::max(running, r.count);
                r.count = running;
                r.rate = r.count > 0 ? std::log(r.count) / n : 0.0;
            }
        }
    }
}

void validate_schedules(const EntropyParams& params) {
    if (params.delta_schedule.empty() || params.n_schedule.empty())
        raise(ErrorKind::ValidationError, "empty delta or n schedule");
    for (size_t i = 1; i < params.delta_schedule.size(); ++i)
        if (params.delta_schedule[i] >= params.delta_schedule[i - 1])
            raise(ErrorKind::ValidationError, "delta schedule must be strictly decreasing");
    for (size_t i = 1; i < params.n_schedule.size(); ++i)
        if (params.n_schedule[i] <= params.n_schedule[i - 1])
            raise(ErrorKind::ValidationError, "n schedule must be strictly increasing");
}

} // namespace

// ---------------------------------------------------------------------------
// Candidate generation

CandidateCloud candidate_cloud(const MapSystem& system, int n_max, int samples, int backward_burn,
                               std::uint64_t seed) {
    CandidateCloud cloud;
    const Chart& chart = system.atlas.charts.front();
    const double r = system.sampling_radius;
    const bool complex_mode = system.mode == Mode::Complex;
    const int real_dims = system.k * (complex_mode ? 2 : 1);

    auto try_add_forward = [&](const CVec& x0) {
        std::vector<CVec> orbit;
        orbit.reserve(static_cast<size_t>(n_max) + 1);
        CVec x = system.atlas.wrap(x0);
        for (int i = 0; i <= n_max; ++i) {
            if (system.singular_distance(x) <= kSingularTolerance) {
                ++cloud.rejected_singular;
                return;
            }
            orbit.push_back(x);
            if (i < n_max) {
                CVec next = system.atlas.wrap(system.evaluate_rule(x));
                if (!system.atlas.locate(next)) {
                    ++cloud.rejected_domain;
                    return;
                }
                x = next;
            }
        }
        cloud.orbits.push_back(std::move(orbit));
    };

    if (system.sampler == SamplerHint::ForwardOrbit) {
        // Candidates ride a long attractor orbit; each keeps its n_max-window.
        const int burn = 500;
        std::vector<CVec> master;
        master.reserve(static_cast<size_t>(samples + burn + n_max) + 1);
        CVec x = system.basin_point;
        for (int i = 0; i < samples + burn + n_max; ++i) {
            master.push_back(x);
            x = system.atlas.wrap(system.evaluate_rule(x));
            if (!system.atlas.locate(x)) {
                ++cloud.rejected_domain;
                break;
            }
        }
        master.push_back(x);
        for (int t = burn; t + n_max < static_cast<int>(master.size()) &&
                           static_cast<int>(cloud.orbits.size()) < samples;
             ++t) {
            cloud.orbits.emplace_back(master.begin() + t, master.begin() + t + n_max + 1);
        }
        return cloud;
    }

    // Lattice candidates.
    int lattice_budget = std::max(16, samples / 8);
    int res = std::max(2, static_cast<int>(std::floor(std::pow(double(lattice_budget), 1.0 / real_dims))));
    {
        std::vector<int> idx(static_cast<size_t>(real_dims), 0);
        while (true) {
            CVec x0(system.k);
            for (int j = 0; j < system.k; ++j) {
                double re, im = 0.0;
                if (chart.period[static_cast<size_t>(j)] > 0.0) {
                    double p = chart.period[static_cast<size_t>(j)];
                    re = (idx[static_cast<size_t>(complex_mode ? 2 * j : j)] + 0.5) * p / res;
                } else {
                    re = -r + 2.0 * r * (idx[static_cast<size_t>(complex_mode ? 2 * j : j)] + 0.5) / res;
                }
                if (complex_mode) im = -r + 2.0 * r * (idx[static_cast<size_t>(2 * j + 1)] + 0.5) / res;
                x0[j] = Complex(re, im);
            }
            try_add_forward(x0);
            int d = real_dims - 1;
            while (d >= 0 && ++idx[static_cast<size_t>(d)] == res) {
                idx[static_cast<size_t>(d)] = 0;
                --d;
            }
            if (d < 0) break;
        }
    }

    // Random candidates.
    {
        std::mt19937_64 rng = rng_stream(seed, 0x72616e64ull);
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        int budget = std::max(16, samples / 8);
        for (int s = 0; s < budget; ++s) {
            CVec x0(system.k);
            for (int j = 0; j < system.k; ++j) {
                double p = chart.period[static_cast<size_t>(j)];
                double re = p > 0.0 ? 0.5 * p * (unif(rng) + 1.0) : r * unif(rng);
                double im = complex_mode ? r * unif(rng) : 0.0;
                x0[j] = Complex(re, im);
            }
            try_add_forward(x0);
        }
    }

    // Backward-refined candidates: random branch walks concentrate on the
    // relevant repeller, where lattice and random points cannot resolve the
    // required orbit density.
    if (system.sampler == SamplerHint::BackwardCloud && system.has_inverse()) {
        std::mt19937_64 rng = rng_stream(seed, 0x6261636bull);
        int remaining = samples - static_cast<int>(cloud.orbits.size());
        const int depth = backward_burn + n_max;
        for (int w = 0; w < remaining; ++w) {
            std::vector<CVec> path;
            path.push_back(system.basin_point);
            CVec x = system.basin_point;
            bool ok = true;
            for (int j = 0; j < depth; ++j) {
                std::vector<CVec> branches;
                try {
                    branches = inverse_images(system, x);
                } catch (const Error&) {
                    ok = false;
                    break;
                }
                branches.erase(std::remove_if(branches.begin(), branches.end(),
                                              [&](const CVec& y) {
                                                  return system.singular_distance(y) <=
                                                         kSingularTolerance;
                                              }),
                               branches.end());
                if (branches.empty()) {
                    ok = false;
                    break;
                }
                std::uniform_int_distribution<size_t> pick(0, branches.size() - 1);
                x = branches[pick(rng)];
                path.push_back(x);
            }
            if (!ok) {
                ++cloud.rejected_singular;
                continue;
            }
            // The walk itself is the forward orbit of its endpoint; using the
            // stored points avoids re-amplifying rounding through f^i.
            std::vector<CVec> orbit;
            orbit.reserve(static_cast<size_t>(n_max) + 1);
            for (int i = 0; i <= n_max; ++i) orbit.push_back(path[static_cast<size_t>(depth - i)]);
            cloud.orbits.push_back(std::move(orbit));
        }
    }
    return cloud;
}

// ---------------------------------------------------------------------------
// Topological entropy

EntropyEstimate estimate_htop(const MapSystem& system, const EntropyParams& params) {
    validate_schedules(params);
    EntropyEstimate est;
    est.quantity = "top";
    est.system = system.name;
    est.seed = params.seed;

    const int n_max = params.n_schedule.back();
    CandidateCloud cloud =
        candidate_cloud(system, n_max, params.samples, params.backward_burn, params.seed);
    est.candidates = static_cast<long>(cloud.orbits.size());
    est.rejected_singular = cloud.rejected_singular;
    est.rejected_domain = cloud.rejected_domain;
    if (cloud.orbits.empty()) {
        est.warnings.push_back("no candidates survived; table empty");
        return est;
    }

    for (double delta : params.delta_schedule)
        for (int n : params.n_schedule) {
            SeparatedFamily family = greedy_separated_orbits(system.atlas, cloud.orbits, n, delta);
            EstimateRow row;
            row.delta = delta;
            row.n = n;
            row.count = static_cast<double>(family.count());
            row.rate = row.count > 0 ? std::log(row.count) / n : 0.0;
            est.rows.push_back(row);
        }
    enforce_delta_monotonicity(est, params.delta_schedule, params.n_schedule);
    finalize_estimate(est, params.delta_schedule, params.n_schedule);
    return est;
}

// ---------------------------------------------------------------------------
// Brin-Katok metric entropy

EntropyEstimate estimate_metric_entropy(const MapSystem& system, const EntropyParams& params) {
    validate_schedules(params);
    EntropyEstimate est;
    est.quantity = "metric";
    est.system = system.name;
    est.seed = params.seed;

    const int n_max = params.n_schedule.back();
    const long want = params.orbit_length;
    if (want < 50L * n_max)
        raise(ErrorKind::InsufficientOrbit, "orbit length below 50 x n_max");

    const int burn = 200;
    std::vector<CVec> orbit;
    orbit.reserve(static_cast<size_t>(want + burn));
    CVec x = system.basin_point;
    for (long i = 0; i < want + burn; ++i) {
        orbit.push_back(x);
        x = system.atlas.wrap(system.evaluate_rule(x));
        if (!system.atlas.locate(x)) break;
    }
    if (static_cast<long>(orbit.size()) < want / 2)
        raise(ErrorKind::InsufficientOrbit, "orbit left the chart domain early");
    const long T = static_cast<long>(orbit.size());
    // Heuristic coverage check: the orbit must outnumber e^{h n} many times.
    est.candidates = T;

    std::vector<long> bases;
    long stride = std::max<long>(1, (T - burn - n_max) / params.base_points);
    for (long b = burn; b + n_max < T && static_cast<int>(bases.size()) < params.base_points;
         b += stride)
        bases.push_back(b);

    for (double delta : params.delta_schedule) {
        for (int n : params.n_schedule) {
            double freq_sum = 0.0;
            long freq_n = 0;
            for (long b : bases) {
                long hits = 0, total = 0;
                for (long t = burn; t + n < T; ++t) {
                    ++total;
                    bool inside = true;
                    for (int i = 0; i < n; ++i) {
                        if (system.atlas.distance(orbit[static_cast<size_t>(b + i)],
                                                  orbit[static_cast<size_t>(t + i)]) >= delta) {
                            inside = false;
                            break;
                        }
                    }
                    if (inside) ++hits;
                }
                if (total > 0) {
                    if (hits == 0) {
                        hits = 1; // resolution floor: the ball holds its center
                        if (est.warnings.empty())
                            est.warnings.push_back("Bowen-ball frequency hit the orbit resolution");
                    }
                    freq_sum += static_cast<double>(hits) / total;
                    ++freq_n;
                }
            }
            double freq = freq_n > 0 ? freq_sum / freq_n : 1.0;
            EstimateRow row;
            row.delta = delta;
            row.n = n;
            row.count = 1.0 / freq;
            row.rate = std::log(row.count) / n;
            est.rows.push_back(row);
        }
    }
    finalize_estimate(est, params.delta_schedule, params.n_schedule);
    return est;
}

// ---------------------------------------------------------------------------
// Preimage trees

PreimageTree preimage_tree(const MapSystem& system, const CVec& x, int depth, long budget) {
    if (!system.has_inverse())
        raise(ErrorKind::NoBranchRule, system.name + ": preimage tree needs inverse branches");
    PreimageTree tree;

    struct Node {
        CVec point;
        int parent = -1;
        double min_singular = std::numeric_limits<double>::infinity();
    };
    std::vector<std::vector<Node>> levels(1);
    levels[0].push_back(Node{x, -1, system.singular_distance(x)});
    long total = 1;

    for (int d = 0; d < depth; ++d) {
        std::vector<Node> next;
        for (size_t pi = 0; pi < levels[static_cast<size_t>(d)].size(); ++pi) {
            const Node& parent = levels[static_cast<size_t>(d)][pi];
            std::vector<CVec> branches;
            try {
                branches = inverse_images(system, parent.point);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::RootFindingFailure) {
                    ++tree.pruned_singular;
                    continue;
                }
                throw;
            }
            for (const CVec& y : branches) {
                double sd = system.singular_distance(y);
                if (sd <= kSingularTolerance) {
                    ++tree.pruned_singular;
                    continue;
                }
                if (total >= budget) {
                    ++tree.budget_hits;
                    continue;
                }
                next.push_back(Node{y, static_cast<int>(pi), std::min(parent.min_singular, sd)});
                ++total;
            }
        }
        levels.push_back(std::move(next));
    }

    // Leaves carry their forward path: leaf, parent, ..., root.
    const auto& leaves = levels[static_cast<size_t>(depth)];
    for (size_t li = 0; li < leaves.size(); ++li) {
        std::vector<CVec> orbit(static_cast<size_t>(depth) + 1);
        int idx = static_cast<int>(li);
        for (int d = depth; d >= 0; --d) {
            const Node& node = levels[static_cast<size_t>(d)][static_cast<size_t>(idx)];
            orbit[static_cast<size_t>(depth - d)] = node.point;
            idx = node.parent;
        }
        tree.leaf_orbits.push_back(std::move(orbit));
        tree.leaf_min_singular.push_back(leaves[li].min_singular);
    }
    return tree;
}

// ---------------------------------------------------------------------------
// Targets

std::vector<GraphPatch> sample_admissible_targets(const MapSystem& system, int m, double delta,
                                                  int count, std::uint64_t seed) {
    if (m < 0 || m > system.k)
        raise(ErrorKind::ValidationError, "target dimension m out of range");
    std::mt19937_64 rng = rng_stream(seed, 0x74617267ull);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const Chart& chart = system.atlas.charts.front();
    std::vector<GraphPatch> out;

    for (int c = 0; c < count; ++c) {
        CVec center(system.k);
        for (int j = 0; j < system.k; ++j) {
            double p = chart.period[static_cast<size_t>(j)];
            double re = p > 0.0 ? 0.5 * p * (unif(rng) + 1.0) : system.sampling_radius * unif(rng);
            double im = system.mode == Mode::Complex ? system.sampling_radius * unif(rng) : 0.0;
            center[j] = Complex(re, im);
        }
        if (m == 0) {
            GraphPatch p = point_patch(center, system.k, system.mode, delta);
            p.mode = system.mode;
            p.nominal_delta = delta;
            out.push_back(p);
            continue;
        }
        if (m == system.k) {
            GraphPatch p = ball_patch(center, system.k, system.mode, delta);
            p.nominal_delta = delta;
            out.push_back(p);
            continue;
        }
        CMat frame = system.mode == Mode::Complex ? random_unitary(system.k, rng)
                                                  : random_rotation(system.k, rng);
        CMat base = frame.leftCols(m);
        CMat comp = frame.rightCols(system.k - m);
        GraphPatch p = flat_patch(center, base, comp,
                                  std::vector<double>(static_cast<size_t>(m), delta), system.mode);
        p.nominal_delta = delta;
        if (c % 2 == 1) {
            // Low-Lipschitz linear graph: ||L||_inf <= 0.5 keeps lip below 1.
            CMat lmat(system.k - m, m);
            for (int i = 0; i < system.k - m; ++i)
                for (int j = 0; j < m; ++j)
                    lmat(i, j) = system.mode == Mode::Complex
                                     ? Complex(0.25 * unif(rng), 0.25 * unif(rng))
                                     : Complex(0.25 * unif(rng), 0.0);
            lmat /= std::max(1.0, 2.0 * op_norm_inf(lmat));
            AffineValues aff{CVec::Zero(system.k - m), lmat};
            p.values = [aff](const CVec& x) { return CVec(aff.c + aff.L * x); };
            p.affine = aff;
            p.lip_bound = op_norm_inf(lmat);
        }
        out.push_back(p);
    }
    return out;
}

std::pair<GraphPatch, long> cube_select_target(const MapSystem& system,
                                               const std::vector<CVec>& forward_images,
                                               double cube_size) {
    if (forward_images.empty()) raise(ErrorKind::EmptyInput, "cube_select_target with no points");
    const Chart& chart = system.atlas.charts.front();
    const bool complex_mode = system.mode == Mode::Complex;

    std::map<std::vector<int32_t>, long> occupancy;
    for (const CVec& p : forward_images) {
        std::vector<int32_t> idx;
        for (int j = 0; j < system.k; ++j) {
            double per = chart.period[static_cast<size_t>(j)];
            double lo = per > 0.0 ? 0.0 : -chart.half_width[static_cast<size_t>(j)];
            double re = p[j].real();
            if (per > 0.0) {
                re = std::fmod(re, per);
                if (re < 0) re += per;
            }
            idx.push_back(static_cast<int32_t>(std::floor((re - lo) / cube_size)));
            if (complex_mode)
                idx.push_back(static_cast<int32_t>(
                    std::floor((p[j].imag() + chart.half_width[static_cast<size_t>(j)]) / cube_size)));
        }
        occupancy[idx] += 1;
    }
    // std::map order makes the tie-break the lexicographically smallest index.
    std::vector<int32_t> best_idx;
    long best = -1;
    for (const auto& [idx, count] : occupancy)
        if (count > best) {
            best = count;
            best_idx = idx;
        }

    CVec center(system.k);
    int pos = 0;
    for (int j = 0; j < system.k; ++j) {
        double per = chart.period[static_cast<size_t>(j)];
        double lo = per > 0.0 ? 0.0 : -chart.half_width[static_cast<size_t>(j)];
        double re = lo + (best_idx[static_cast<size_t>(pos++)] + 0.5) * cube_size;
        double im = 0.0;
        if (complex_mode)
            im = -chart.half_width[static_cast<size_t>(j)] +
                 (best_idx[static_cast<size_t>(pos++)] + 0.5) * cube_size;
        center[j] = Complex(re, im);
    }
    // The ball circumscribes the cube so every counted point lies inside.
    double radius = complex_mode ? cube_size * std::sqrt(0.5) : 0.5 * cube_size;
    GraphPatch patch = ball_patch(center, system.k, system.mode, radius);
    patch.nominal_delta = radius;
    return {patch, best};
}

// ---------------------------------------------------------------------------
// Preimage graph enumeration

namespace {

// A piece of f^{-j}(target slice) tracked by its branch chain: anchors[i] is
// the pullback of the slice center at depth i, and the piece is the pullback
// of the slice over the source ball around `center`.
struct ChainPiece {
    std::vector<CVec> anchors; // length depth + 1
    CVec center;               // base coords on the source slice
    double radius;             // source ball radius
};

CVec nearest_branch(const MapSystem& system, const std::vector<CVec>& branches, const CVec& ref) {
    double best = std::numeric_limits<double>::infinity();
    const CVec* pick = nullptr;
    for (const CVec& y : branches) {
        double d = system.atlas.distance(y, ref);
        if (d < best) {
            best = d;
            pick = &y;
        }
    }
    return *pick;
}

// Pullback of slice.ambient(x) through the piece's branch chain; branch
// choices follow the stored anchors for continuity.
CVec chain_pull(const MapSystem& system, const GraphPatch& slice, const std::vector<CVec>& anchors,
                const CVec& x) {
    CVec p = system.atlas.wrap(slice.ambient(x));
    for (size_t i = 1; i < anchors.size(); ++i) {
        std::vector<CVec> branches = inverse_images(system, p);
        if (branches.empty()) raise(ErrorKind::SingularOrbit, "branch chain broke");
        p = nearest_branch(system, branches, anchors[i]);
    }
    return p;
}

// k x l derivative of the chain map at x, seam-safe on periodic charts.
CMat chain_jacobian(const MapSystem& system, const GraphPatch& slice,
                    const std::vector<CVec>& anchors, const CVec& x, double h) {
    const int l = slice.l;
    CMat j(system.k, l);
    for (int col = 0; col < l; ++col) {
        CVec hi = x, lo = x;
        hi[col] += h;
        lo[col] -= h;
        CVec d = system.atlas.displacement(chain_pull(system, slice, anchors, hi),
                                           chain_pull(system, slice, anchors, lo));
        j.col(col) = d / (2.0 * h);
    }
    return j;
}

std::vector<CVec> subdivision_offsets(Mode mode, int l, double radius) {
    // Overlapping cover of the ball: duplicates are harmless, the separation
    // audit removes them. Complex axes: center + 8 spokes; real: two halves.
    std::vector<std::vector<Complex>> axes;
    for (int j = 0; j < l; ++j) {
        std::vector<Complex> a;
        if (mode == Mode::Complex) {
            a.push_back(Complex(0.0, 0.0));
            for (int t = 0; t < 8; ++t) a.push_back(std::polar(0.6 * radius, 2.0 * M_PI * t / 8));
        } else {
            a.push_back(Complex(-0.45 * radius, 0.0));
            a.push_back(Complex(0.45 * radius, 0.0));
        }
        axes.push_back(a);
    }
    std::vector<CVec> out;
    std::vector<size_t> idx(static_cast<size_t>(l), 0);
    while (true) {
        CVec o(l);
        for (int j = 0; j < l; ++j) o[j] = axes[static_cast<size_t>(j)][idx[static_cast<size_t>(j)]];
        out.push_back(o);
        int j = l - 1;
        while (j >= 0 && ++idx[static_cast<size_t>(j)] == axes[static_cast<size_t>(j)].size()) {
            idx[static_cast<size_t>(j)] = 0;
            --j;
        }
        if (j < 0) break;
    }
    return out;
}

} // namespace

EnumerationResult enumerate_preimage_graphs(const MapSystem& system, const GraphPatch& target,
                                            int l, int n, double delta, long budget,
                                            std::uint64_t seed, double containment_tol) {
    (void)seed;
    if (l > target.l)
        raise(ErrorKind::ValidationError, "l exceeds the target dimension");
    if (!system.has_inverse())
        raise(ErrorKind::NoBranchRule, system.name + ": enumeration needs inverse branches");

    EnumerationResult result;
    const double target_radius = std::exp(-delta * n);

    if (l == 0) {
        // Leaves of preimage trees rooted at sampled points of the target.
        std::vector<CVec> samples = target.ambient_audit_nodes();
        const size_t sample_cap = 3;
        if (samples.size() > sample_cap) samples.resize(sample_cap);
        for (const CVec& s : samples) {
            PreimageTree tree = preimage_tree(system, s, n, budget);
            result.budget_hits += tree.budget_hits;
            result.rejected += tree.pruned_singular;
            for (size_t li = 0; li < tree.leaf_orbits.size(); ++li) {
                GraphPatch leaf =
                    point_patch(tree.leaf_orbits[li].front(), system.k, system.mode, delta);
                leaf.mode = system.mode;
                leaf.nominal_delta = delta;
                leaf.admissibility.delta = delta;
                leaf.admissibility.n = n;
                leaf.admissibility.min_singular = tree.leaf_min_singular[li];
                leaf.admissibility.forward_residual =
                    patch_point_distance(target, s, system.atlas);
                leaf.admissibility.filled = true;
                result.graphs.push_back(std::move(leaf));
                result.point_orbits.push_back(tree.leaf_orbits[li]);
            }
        }
        return result;
    }

    // Slice the target down to l dimensions, then pull the slice back through
    // branch chains with per-step subdivision so pieces refit over balls of
    // radius e^{-delta n}.
    GraphPatch slice = target;
    while (slice.l > l) slice = slice_graph(slice);

    std::vector<ChainPiece> pieces;
    pieces.push_back(
        ChainPiece{{system.atlas.wrap(slice.ambient(CVec::Zero(l)))}, CVec::Zero(l), slice.radius()});
    long touched = 1;

    const double jac_h = 1e-6;
    for (int depth = 0; depth < n; ++depth) {
        std::vector<ChainPiece> next;
        for (const ChainPiece& piece : pieces) {
            std::vector<CVec> branches;
            try {
                branches = inverse_images(system, piece.anchors.back());
            } catch (const Error&) {
                ++result.rejected;
                continue;
            }
            for (const CVec& y : branches) {
                if (system.singular_distance(y) <= kSingularTolerance) {
                    ++result.rejected;
                    continue;
                }
                if (touched >= budget) {
                    ++result.budget_hits;
                    continue;
                }
                ChainPiece advanced = piece;
                advanced.anchors.push_back(y);
                // Split until the pulled image extent matches the final ball.
                std::vector<ChainPiece> stack{advanced};
                while (!stack.empty()) {
                    ChainPiece cur = stack.back();
                    stack.pop_back();
                    CMat v = chain_jacobian(system, slice, cur.anchors, cur.center,
                                            jac_h * std::max(1.0, cur.radius));
                    double stretch = op_norm_inf(v);
                    if (stretch * cur.radius > 1.6 * target_radius && cur.radius > 1e-7) {
                        for (const CVec& off : subdivision_offsets(system.mode, l, cur.radius)) {
                            if (touched >= budget) {
                                ++result.budget_hits;
                                break;
                            }
                            ChainPiece sub = cur;
                            sub.center = cur.center + off;
                            sub.radius = system.mode == Mode::Complex ? 0.52 * cur.radius
                                                                      : 0.56 * cur.radius;
                            // Re-anchor the chain at the new center.
                            bool ok = true;
                            std::vector<CVec> anchors{
                                system.atlas.wrap(slice.ambient(sub.center))};
                            for (size_t level = 1; level < cur.anchors.size(); ++level) {
                                std::vector<CVec> bs;
                                try {
                                    bs = inverse_images(system, anchors.back());
                                } catch (const Error&) {
                                    ok = false;
                                    break;
                                }
                                if (bs.empty()) {
                                    ok = false;
                                    break;
                                }
                                anchors.push_back(nearest_branch(system, bs, cur.anchors[level]));
                            }
                            if (!ok) {
                                ++result.rejected;
                                continue;
                            }
                            sub.anchors = anchors;
                            stack.push_back(sub);
                            ++touched;
                        }
                    } else {
                        next.push_back(cur);
                        ++touched;
                    }
                }
            }
        }
        pieces = std::move(next);
        if (pieces.empty()) break;
    }

    // Refit each surviving piece as a graph over a tangent-aligned ball.
    for (const ChainPiece& piece : pieces) {
        CVec anchor = piece.anchors.back();
        CMat v = chain_jacobian(system, slice, piece.anchors, piece.center, jac_h);
        if (!v.allFinite()) {
            ++result.rejected;
            continue;
        }
        Eigen::HouseholderQR<CMat> qr(v);
        CMat q = qr.householderQ() * CMat::Identity(system.k, system.k);
        CMat new_base = q.leftCols(l);
        CMat new_comp = q.rightCols(system.k - l);

        // Shooting evaluator: solve for the source coordinate whose pullback
        // projects to the requested base coordinate.
        MapSystem sys = system;
        GraphPatch slice_copy = slice;
        std::vector<CVec> anchors = piece.anchors;
        CVec center = piece.center;
        CMat vt = v;
        CVec anchor_copy = anchor;
        auto solve_source = [sys, slice_copy, anchors, center, vt, anchor_copy,
                             new_base](const CVec& xp) {
            auto f = [&](const CVec& src) {
                CVec pulled = chain_pull(sys, slice_copy, anchors, CVec(center + src));
                return CVec(new_base.adjoint() * sys.atlas.displacement(pulled, anchor_copy) - xp);
            };
            CMat m = new_base.adjoint() * vt;
            CVec init = m.fullPivLu().solve(xp);
            NewtonResult r = newton_solve(f, init, 1e-12, 30);
            if (!r.converged || r.residual > 1e-9)
                raise(ErrorKind::NewtonDivergence, "piece refit solve failed");
            return CVec(center + r.x);
        };
        Evaluator ev = [sys, slice_copy, anchors, new_comp, anchor_copy,
                        solve_source](const CVec& xp) {
            CVec src = solve_source(xp);
            CVec pulled = chain_pull(sys, slice_copy, anchors, src);
            return CVec(new_comp.adjoint() * sys.atlas.displacement(pulled, anchor_copy));
        };

        GraphPatch patch;
        patch.mode = system.mode;
        patch.k = system.k;
        patch.l = l;
        patch.anchor = anchor;
        patch.base = new_base;
        patch.complement = new_comp;
        patch.radii.assign(static_cast<size_t>(l), target_radius);
        patch.nominal_delta = delta;
        patch.values = ev;
        patch.grid_resolution = 9; // audit-scale lattice; values stay exact

        // Admissibility: lip, forward containment, distance to the singular
        // set along the forward path of the audit nodes.
        bool keep = true;
        double lip = 0.0;
        double fwd_residual = 0.0;
        double min_sing = std::numeric_limits<double>::infinity();
        std::vector<CVec> nodes = patch.audit_base_nodes();
        std::vector<CVec> amb, vals;
        try {
            for (const CVec& x : nodes) {
                vals.push_back(patch.value(x));
                amb.push_back(patch.ambient(x));
            }
        } catch (const Error&) {
            ++result.rejected;
            continue;
        }
        for (size_t a = 0; a < nodes.size() && keep; ++a)
            for (size_t b = a + 1; b < nodes.size(); ++b) {
                double dx = max_norm(CVec(nodes[a] - nodes[b]));
                if (dx < 1e-14) continue;
                lip = std::max(lip, max_norm(CVec(vals[a] - vals[b])) / dx);
            }
        if (lip > 1.0 + 1e-9) keep = false;
        if (keep) {
            for (const CVec& p0 : amb) {
                CVec p = system.atlas.wrap(p0);
                bool escaped = false;
                for (int i = 0; i < n; ++i) {
                    min_sing = std::min(min_sing, system.singular_distance(p));
                    if (min_sing <= kSingularTolerance) {
                        escaped = true;
                        break;
                    }
                    p = system.atlas.wrap(system.evaluate_rule(p));
                    if (!system.atlas.locate(p)) {
                        escaped = true;
                        break;
                    }
                }
                if (escaped) {
                    keep = false;
                    break;
                }
                fwd_residual = std::max(fwd_residual, patch_point_distance(target, p, system.atlas));
            }
        }
        if (keep && fwd_residual > containment_tol) keep = false;
        if (!keep) {
            ++result.rejected;
            continue;
        }
        patch.lip_bound = lip;
        patch.admissibility.delta = delta;
        patch.admissibility.n = n;
        patch.admissibility.min_singular = min_sing;
        patch.admissibility.forward_residual = fwd_residual;
        patch.admissibility.filled = true;
        result.graphs.push_back(std::move(patch));
    }
    return result;
}

PatchOrbitData patch_orbit_data(const MapSystem& system, const GraphPatch& patch, int n) {
    PatchOrbitData data;
    data.anchor_orbit.reserve(static_cast<size_t>(n));
    std::vector<CVec> cloud = patch.ambient_audit_nodes();
    for (CVec& p : cloud) p = system.atlas.wrap(p);
    CVec anchor = system.atlas.wrap(patch.anchor);
    for (int i = 0; i < n; ++i) {
        data.anchor_orbit.push_back(anchor);
        data.clouds.push_back(cloud);
        double spread = 0.0;
        for (const CVec& p : cloud) spread = std::max(spread, system.atlas.distance(p, anchor));
        data.spread.push_back(spread);
        if (i + 1 < n) {
            try {
                anchor = evaluate(system, anchor);
                for (CVec& p : cloud) p = evaluate(system, p);
            } catch (const Error&) {
                data.valid = false;
                break;
            }
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Dimensional preimage entropy

namespace {

EntropyEstimate dimensional_core(const MapSystem& system, int m, int l,
                                 const EntropyParams& params, const std::string& quantity) {
    validate_schedules(params);
    if (l > m || m > system.k)
        raise(ErrorKind::ValidationError, "need 0 <= l <= m <= k");
    EntropyEstimate est;
    est.quantity = quantity;
    est.m = m;
    est.l = l;
    est.system = system.name;
    est.seed = params.seed;

    const int n_max = params.n_schedule.back();
    // The pigeonhole target needs forward images of the same candidate cloud
    // the separated-point estimator uses (matched seeds couple the two).
    CandidateCloud cloud;
    if (m == system.k) {
        cloud = candidate_cloud(system, n_max, params.samples, params.backward_burn, params.seed);
        est.candidates = static_cast<long>(cloud.orbits.size());
        est.rejected_singular = cloud.rejected_singular;
        est.rejected_domain = cloud.rejected_domain;
    }

    for (double delta : params.delta_schedule) {
        std::vector<GraphPatch> targets =
            sample_admissible_targets(system, m, delta, params.targets, params.seed);
        for (int n : params.n_schedule) {
            std::vector<GraphPatch> all_targets = targets;
            if (m == system.k && !cloud.orbits.empty()) {
                std::vector<CVec> images;
                images.reserve(cloud.orbits.size());
                for (const auto& orbit : cloud.orbits) images.push_back(orbit[static_cast<size_t>(n)]);
                double cube = system.mode == Mode::Complex ? delta * std::sqrt(2.0) : 2.0 * delta;
                all_targets.push_back(cube_select_target(system, images, cube).first);
            }
            double best = 0.0;
            for (const GraphPatch& target : all_targets) {
                EnumerationResult enumd;
                try {
                    enumd = enumerate_preimage_graphs(system, target, l, n, delta, params.budget,
                                                      params.seed, params.containment_tol);
                } catch (const Error& e) {
                    if (e.kind() == ErrorKind::NoBranchRule) throw;
                    est.warnings.push_back(std::string("enumeration: ") + e.what());
                    continue;
                }
                est.budget_hits += enumd.budget_hits;
                long count = 0;
                if (l == 0) {
                    // Leaf orbits are the stored tree paths.
                    count = greedy_separated_orbits(system.atlas, enumd.point_orbits, n, delta)
                                .count();
                } else {
                    std::vector<PatchOrbitData> items;
                    items.reserve(enumd.graphs.size());
                    for (const GraphPatch& g : enumd.graphs)
                        items.push_back(patch_orbit_data(system, g, n));
                    count = greedy_separated_patches(system.atlas, items, n, delta).count();
                }
                best = std::max(best, static_cast<double>(count));
            }
            EstimateRow row;
            row.delta = delta;
            row.n = n;
            row.count = best;
            row.rate = best > 0 ? std::log(best) / n : 0.0;
            est.rows.push_back(row);
        }
    }
    enforce_delta_monotonicity(est, params.delta_schedule, params.n_schedule);
    finalize_estimate(est, params.delta_schedule, params.n_schedule);
    return est;
}

} // namespace

EntropyEstimate estimate_pointwise_preimage_entropy(const MapSystem& system,
                                                    const EntropyParams& params) {
    // Definitionally the (0,0) dimensional entropy; sharing the code path
    // keeps matched-seed runs identical row for row.
    return dimensional_core(system, 0, 0, params, "preimage");
}

EntropyEstimate estimate_dimensional_entropy(const MapSystem& system, int m, int l,
                                             const EntropyParams& params) {
    return dimensional_core(system, m, l, params, "dim");
}

} // namespace pentropy
