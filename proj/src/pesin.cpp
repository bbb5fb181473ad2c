#include "pentropy/pesin.hpp"

#include <cmath>

namespace pentropy {

static CMat window_product(const OrbitSegment& orbit, int first, int count) {
    const int k = static_cast<int>(orbit.jacobians.front().rows());
    CMat prod = CMat::Identity(k, k);
    for (int j = 0; j < count; ++j) prod = orbit.jacobians[static_cast<size_t>(first + j)] * prod;
    return prod;
}

OseledetsFrame frames_at(const MapSystem& system, const OrbitSegment& orbit, int t,
                         const LyapunovSpectrum& spectrum, double delta, int window) {
    (void)system;
    const int k = static_cast<int>(orbit.jacobians.front().rows());
    const int n = static_cast<int>(orbit.jacobians.size());
    const int du = spectrum.s + spectrum.l1;

    OseledetsFrame frame;
    frame.base_point = orbit.points[static_cast<size_t>(t)];
    frame.delta = delta;

    CMat u_frame, s_frame;
    if (du > 0) {
        int w = std::min(window, t);
        if (w == 0) w = std::min(window, n - t); // no past: fall back to the future window
        CMat before;
        if (std::min(window, t) > 0)
            before = window_product(orbit, t - w, w);
        else
            before = window_product(orbit, t, w).adjoint();
        Eigen::JacobiSVD<CMat> svd(before, Eigen::ComputeFullU);
        u_frame = svd.matrixU().leftCols(du);
    } else {
        u_frame = CMat(k, 0);
    }
    if (du < k) {
        int w = std::min(window, n - t);
        if (w == 0) w = std::min(window, t);
        CMat after;
        if (std::min(window, n - t) > 0)
            after = window_product(orbit, t, w);
        else
            after = window_product(orbit, t - w, w).adjoint();
        Eigen::JacobiSVD<CMat> svd(after, Eigen::ComputeFullV);
        s_frame = svd.matrixV().rightCols(k - du);
    } else {
        s_frame = CMat(k, 0);
    }

    frame.Eu1 = u_frame.leftCols(spectrum.s);
    frame.Eu2 = u_frame.rightCols(du - spectrum.s);
    frame.Es = s_frame;
    frame.C = CMat(k, k);
    if (spectrum.s > 0) frame.C.leftCols(spectrum.s) = frame.Eu1;
    if (du > spectrum.s) frame.C.middleCols(spectrum.s, du - spectrum.s) = frame.Eu2;
    if (k > du) frame.C.rightCols(k - du) = frame.Es;
    frame.condition = condition_inf(frame.C);
    return frame;
}

OseledetsFrame oseledets_frames(const MapSystem& system, const OrbitSegment& orbit, double delta) {
    LyapunovSpectrum spectrum = lyapunov_qr(orbit);
    const int k = static_cast<int>(spectrum.exponents.size());
    const int du = spectrum.s + spectrum.l1;
    // The frame split is only meaningful when the spectrum resolves it.
    auto gap_ok = [&](int hi, int lo) {
        double gap = spectrum.exponents[static_cast<size_t>(hi)] - spectrum.exponents[static_cast<size_t>(lo)];
        double err = spectrum.stderrs[static_cast<size_t>(hi)] + spectrum.stderrs[static_cast<size_t>(lo)];
        return gap > 4.0 * err;
    };
    if (du > 0 && du < k && !gap_ok(du - 1, du))
        raise(ErrorKind::NoGap, "unstable/stable gap below resolution");
    if (spectrum.s > 0 && spectrum.s < k && !gap_ok(spectrum.s - 1, spectrum.s))
        raise(ErrorKind::NoGap, "positive/nonpositive gap below resolution");
    return frames_at(system, orbit, orbit.n / 2, spectrum, delta);
}

std::vector<double> temper_sequence(const std::vector<double>& values, double delta) {
    if (delta <= 0.0) raise(ErrorKind::NonPositiveInput, "temper_sequence needs delta > 0");
    for (double v : values)
        if (!(v > 0.0)) raise(ErrorKind::NonPositiveInput, "temper_sequence needs positive values");
    const size_t n = values.size();
    if (n == 0) return {};
    const double q = std::exp(-delta);
    std::vector<double> fwd(values), bwd(values), out(n);
    for (size_t i = 1; i < n; ++i) fwd[i] = std::max(values[i], fwd[i - 1] * q);
    for (size_t i = n - 1; i-- > 0;) bwd[i] = std::max(values[i], bwd[i + 1] * q);
    for (size_t i = 0; i < n; ++i) out[i] = std::max(fwd[i], bwd[i]);
    return out;
}

CMat closure_differential(const std::function<CVec(const CVec&)>& g, const CVec& w, int k, double h) {
    CMat j(k, k);
    for (int col = 0; col < k; ++col) {
        CVec hi = w, lo = w;
        hi[col] += h;
        lo[col] -= h;
        j.col(col) = (g(hi) - g(lo)) / (2.0 * h);
    }
    return j;
}

// Sampled sup of ||D^2 g|| over the max-norm ball of the given radius,
// via second differences along coordinate and mixed directions.
static double sampled_second_derivative(const std::function<CVec(const CVec&)>& g, int k,
                                        double radius, std::mt19937_64& rng) {
    double h = std::max(1e-5 * radius, 1e-9);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    double worst = 0.0;
    const int samples = 12;
    for (int s = 0; s < samples; ++s) {
        CVec z(k);
        for (int i = 0; i < k; ++i) {
            double scale = (s == 0) ? 0.0 : radius * 0.95;
            z[i] = Complex(scale * unif(rng), scale * unif(rng));
        }
        if (max_norm(z) > radius) z *= (radius * 0.95) / max_norm(z);
        for (int i = 0; i < k; ++i) {
            for (int j = i; j < k; ++j) {
                CVec zi = CVec::Zero(k), zj = CVec::Zero(k);
                zi[i] = h;
                zj[j] = h;
                CVec dd = (g(z + zi + zj) - g(z + zi - zj) - g(z - zi + zj) + g(z - zi - zj)) /
                          (4.0 * h * h);
                worst = std::max(worst, max_norm(dd));
            }
        }
    }
    return worst;
}

LocalMap normalized_local_map(const MapSystem& system, const OseledetsFrame& frame_x,
                              const OseledetsFrame& frame_fx) {
    if (frame_x.condition > 1e8 || frame_fx.condition > 1e8)
        raise(ErrorKind::IllConditionedFrame, "frame condition exceeds 1e8");
    const CVec x = frame_x.base_point;
    const CVec fx_expected = evaluate(system, x);
    if (system.atlas.distance(fx_expected, frame_fx.base_point) > 1e-8)
        raise(ErrorKind::ValidationError, "frame_fx is not anchored at f(x)");

    const int k = system.k;
    LocalMap map;
    map.k = k;
    map.linear_part = frame_fx.C.inverse() * differential(system, x) * frame_x.C;

    CMat cx = frame_x.C, cfx_inv = frame_fx.C.inverse(), cx_inv = frame_x.C.inverse();
    CVec fx = fx_expected;
    const Atlas atlas = system.atlas;
    auto eval_rule = system.evaluate_rule;
    map.eval = [cx, cfx_inv, x, fx, atlas, eval_rule](const CVec& w) {
        CVec image = eval_rule(x + cx * w);
        return CVec(cfx_inv * atlas.displacement(image, fx));
    };
    if (system.has_inverse()) {
        MapSystem sys = system; // keep branch access alive in the closure
        CMat cfx = frame_fx.C;
        map.eval_inverse = [sys, cfx, cx_inv, x, fx](const CVec& w) {
            CVec target = fx + cfx * w;
            std::vector<CVec> branches = inverse_images(sys, target);
            if (branches.empty()) raise(ErrorKind::SingularOrbit, "no branch continues the history");
            // Continuity selects the branch: nearest preimage to x.
            double best = std::numeric_limits<double>::infinity();
            CVec pick = branches.front();
            for (const CVec& y : branches) {
                double d = sys.atlas.distance(y, x);
                if (d < best) {
                    best = d;
                    pick = y;
                }
            }
            return CVec(cx_inv * sys.atlas.displacement(pick, x));
        };
    }

    // Chart room limits the radius: x + C_x w must stay in the chart.
    const Chart& chart = system.atlas.charts.front();
    double room = std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
        if (chart.period[static_cast<size_t>(j)] > 0.0) {
            room = std::min(room, 0.25 * chart.period[static_cast<size_t>(j)]);
            continue;
        }
        double hw = chart.half_width[static_cast<size_t>(j)];
        room = std::min(room, hw - std::abs(x[j].real()));
        room = std::min(room, hw - std::abs(x[j].imag()));
    }
    double cap = std::max(1e-6, std::min(1.0, room / std::max(1.0, op_norm_inf(frame_x.C))));

    auto fit_radius = [&](const std::function<CVec(const CVec&)>& g, double& bound_out) {
        std::mt19937_64 rng = rng_stream(0xb10c5, static_cast<std::uint64_t>(k));
        double r = cap;
        for (int it = 0; it < 40; ++it) {
            double m2 = 1.25 * sampled_second_derivative(g, k, r, rng);
            if (m2 * r <= 1.0) {
                bound_out = m2;
                return r;
            }
            r = std::min(0.9 / m2, 0.7 * r);
            if (r < 1e-9) break;
        }
        bound_out = 1.0 / std::max(r, 1e-9);
        return std::max(r, 1e-9);
    };
    map.radius_r1 = fit_radius(map.eval, map.second_derivative_bound);
    if (map.eval_inverse)
        map.radius_r2 = fit_radius(map.eval_inverse, map.inverse_second_derivative_bound);
    return map;
}

} // namespace pentropy
