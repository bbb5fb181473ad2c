// Lyapunov spectra from sequential QR of the derivative cocycle.
#ifndef PENTROPY_LYAPUNOV_HPP
#define PENTROPY_LYAPUNOV_HPP

#include "pentropy/system.hpp"

namespace pentropy {

struct LyapunovSpectrum {
    // Per-step log rates, sorted nonincreasing. Complex-mode exponents are
    // counted once each (complex multiplicity).
    std::vector<double> exponents;
    std::vector<int> multiplicities; // cluster sizes, summing to k
    int s = 0;   // count of strictly positive exponents
    int l0 = 0;  // first and last index (1-based offsets from s) of the
    int l1 = 0;  // equal block following position s; 0,0 when empty
    int n_used = 0;
    std::vector<double> stderrs; // batch-mean deviation per exponent
    double log_det_average = 0.0;

    double exponent_sum() const;
    // Sum of the equal block chi_{s+1} .. chi_{s+l1}.
    double block_sum() const;
};

// Sequential QR along the orbit's jacobians. An initial fraction of the
// product is discarded so the triangularizing frame can settle before
// averages are taken; n_used reports the retained window length.
LyapunovSpectrum lyapunov_qr(const OrbitSegment& orbit, double cluster_tolerance_factor = 10.0);

} // namespace pentropy

#endif
