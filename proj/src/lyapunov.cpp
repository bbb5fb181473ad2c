#include "pentropy/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pentropy {

double LyapunovSpectrum::exponent_sum() const {
    return std::accumulate(exponents.begin(), exponents.end(), 0.0);
}

double LyapunovSpectrum::block_sum() const {
    double sum = 0.0;
    for (int i = s + l0; i <= s + l1 && i >= 1; ++i) sum += exponents[static_cast<size_t>(i - 1)];
    return l1 > 0 ? sum : 0.0;
}

LyapunovSpectrum lyapunov_qr(const OrbitSegment& orbit, double cluster_tolerance_factor) {
    const int n = static_cast<int>(orbit.jacobians.size());
    if (n < 100) raise(ErrorKind::TooShort, "lyapunov_qr needs >= 100 steps, got " + std::to_string(n));
    const int k = static_cast<int>(orbit.jacobians.front().rows());

    // The triangularizing frame needs a settling window before averages start.
    const int burn = std::min(n / 10, 200);
    const int used = n - burn;

    CMat q = CMat::Identity(k, k);
    std::vector<double> sums(static_cast<size_t>(k), 0.0);
    double log_det_sum = 0.0;

    const int batches = 16;
    std::vector<std::vector<double>> batch_sums(static_cast<size_t>(batches),
                                                std::vector<double>(static_cast<size_t>(k), 0.0));
    std::vector<int> batch_counts(static_cast<size_t>(batches), 0);

    for (int t = 0; t < n; ++t) {
        const CMat& a = orbit.jacobians[static_cast<size_t>(t)];
        if (!a.allFinite() || std::abs(a.determinant()) == 0.0)
            raise(ErrorKind::DegenerateJacobian, "singular jacobian at step " + std::to_string(t));
        CMat b = a * q;
        Eigen::HouseholderQR<CMat> qr(b);
        q = qr.householderQ() * CMat::Identity(k, k);
        CMat r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
        if (t < burn) continue;
        int batch = ((t - burn) * batches) / used;
        batch = std::min(batch, batches - 1);
        for (int i = 0; i < k; ++i) {
            double lr = std::log(std::abs(r(i, i)));
            if (!std::isfinite(lr))
                raise(ErrorKind::DegenerateJacobian, "rank-deficient product at step " + std::to_string(t));
            sums[static_cast<size_t>(i)] += lr;
            batch_sums[static_cast<size_t>(batch)][static_cast<size_t>(i)] += lr;
        }
        batch_counts[static_cast<size_t>(batch)] += 1;
        log_det_sum += std::log(std::abs(a.determinant()));
    }

    LyapunovSpectrum spec;
    spec.n_used = used;
    spec.log_det_average = log_det_sum / used;

    std::vector<double> raw(static_cast<size_t>(k));
    std::vector<double> raw_err(static_cast<size_t>(k), 0.0);
    for (int i = 0; i < k; ++i) {
        raw[static_cast<size_t>(i)] = sums[static_cast<size_t>(i)] / used;
        double mean = raw[static_cast<size_t>(i)];
        double var = 0.0;
        int nb = 0;
        for (int bix = 0; bix < batches; ++bix) {
            if (batch_counts[static_cast<size_t>(bix)] == 0) continue;
            double bm = batch_sums[static_cast<size_t>(bix)][static_cast<size_t>(i)] /
                        batch_counts[static_cast<size_t>(bix)];
            var += (bm - mean) * (bm - mean);
            ++nb;
        }
        if (nb > 1) raw_err[static_cast<size_t>(i)] = std::sqrt(var / (nb - 1)) / std::sqrt(double(nb));
    }

    std::vector<int> order(static_cast<size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return raw[static_cast<size_t>(a)] > raw[static_cast<size_t>(b)]; });
    for (int i : order) {
        spec.exponents.push_back(raw[static_cast<size_t>(i)]);
        spec.stderrs.push_back(raw_err[static_cast<size_t>(i)]);
    }

    // Equality clustering; the tolerance floor keeps exact cocycles (stderr 0)
    // from splitting equal exponents through rounding noise.
    std::vector<double> tol(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i)
        tol[static_cast<size_t>(i)] =
            std::max(cluster_tolerance_factor * spec.stderrs[static_cast<size_t>(i)], 1e-9);

    int i = 0;
    while (i < k) {
        int j = i;
        while (j + 1 < k && std::abs(spec.exponents[static_cast<size_t>(j + 1)] -
                                     spec.exponents[static_cast<size_t>(i)]) <=
                                std::max(tol[static_cast<size_t>(i)], tol[static_cast<size_t>(j + 1)]))
            ++j;
        spec.multiplicities.push_back(j - i + 1);
        i = j + 1;
    }

    spec.s = 0;
    for (int e = 0; e < k; ++e)
        if (spec.exponents[static_cast<size_t>(e)] > tol[static_cast<size_t>(e)]) spec.s = e + 1;

    if (spec.s < k) {
        // Block of exponents equal to chi_{s+1}.
        int last = spec.s;
        while (last + 1 <= k &&
               std::abs(spec.exponents[static_cast<size_t>(last)] -
                        spec.exponents[static_cast<size_t>(spec.s)]) <=
                   std::max(tol[static_cast<size_t>(spec.s)], tol[static_cast<size_t>(last)]))
            ++last;
        spec.l0 = 1;
        spec.l1 = last - spec.s;
    }
    return spec;
}

} // namespace pentropy
