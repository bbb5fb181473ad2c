// Small linear-algebra helpers shared across modules. All chart metrics use
// the max norm: ||x|| = max_j |x_j| with |.| the complex modulus per
// coordinate, so operator norms below are the induced infinity norms.
#ifndef PENTROPY_LINALG_HPP
#define PENTROPY_LINALG_HPP

#include <Eigen/Dense>
#include <complex>
#include <random>

namespace pentropy {

using Complex = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;

inline double max_norm(const CVec& v) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) m = std::max(m, std::abs(v[i]));
    return m;
}

// Induced operator norm for the max norm: max row sum of moduli.
inline double op_norm_inf(const CMat& a) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < a.cols(); ++j) row += std::abs(a(i, j));
        m = std::max(m, row);
    }
    return m;
}

// 1 / ||A^{-1}||_inf; the co-norm used by the graph transform hypotheses.
inline double inv_norm_recip(const CMat& a) {
    CMat inv = a.inverse();
    double n = op_norm_inf(inv);
    return n > 0 ? 1.0 / n : 0.0;
}

inline double condition_inf(const CMat& a) {
    return op_norm_inf(a) * op_norm_inf(CMat(a.inverse()));
}

// Orthonormalizes the columns of a (thin QR), preserving the column span.
inline CMat orthonormal_columns(const CMat& a) {
    Eigen::HouseholderQR<CMat> qr(a);
    CMat q = qr.householderQ() * CMat::Identity(a.rows(), a.cols());
    return q;
}

inline CMat random_unitary(int k, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    CMat a(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) a(i, j) = Complex(g(rng), g(rng));
    return orthonormal_columns(a);
}

// Real orthogonal matrix; used for frames of real-mode systems.
inline CMat random_rotation(int k, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd a(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) a(i, j) = g(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
    return q.cast<Complex>();
}

// Deterministic sub-stream derivation: one master seed, one tag per purpose.
inline std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t h = seed ^ (0x9e3779b97f4a7c15ull + tag * 0xbf58476d1ce4e5b9ull);
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return std::mt19937_64(h);
}

} // namespace pentropy

#endif
