// Approximate Oseledets splittings, tempered sequences and normalized local
// maps: the constructive side of Pesin theory at finite sample length.
#ifndef PENTROPY_PESIN_HPP
#define PENTROPY_PESIN_HPP

#include <functional>

#include "pentropy/lyapunov.hpp"
#include "pentropy/orbit.hpp"

namespace pentropy {

struct OseledetsFrame {
    CVec base_point;
    // Orthonormal column frames. Eu = Eu1 (positive exponents) + Eu2 (the
    // equal block chi_{s+1}..chi_{s+l1}); Es spans the remaining directions.
    CMat Eu1, Eu2, Es;
    CMat C;      // stacked [Eu1 | Eu2 | Es], sends canonical blocks onto the splitting
    double delta = 0.0;
    double condition = 1.0; // ||C|| * ||C^{-1}||

    int dim_u1() const { return static_cast<int>(Eu1.cols()); }
    int dim_u2() const { return static_cast<int>(Eu2.cols()); }
    int dim_s() const { return static_cast<int>(Es.cols()); }
    int k() const { return static_cast<int>(C.rows()); }
};

// Frame at orbit position t. The unstable side comes from the leading left
// singular subspace of the jacobian product ending at t, the stable side from
// the trailing right singular subspace of the product starting at t; block
// dimensions are the spectrum's (s, l1) split.
OseledetsFrame frames_at(const MapSystem& system, const OrbitSegment& orbit, int t,
                         const LyapunovSpectrum& spectrum, double delta, int window = 20);

// The spec'd operation: frames at the orbit midpoint, spectrum estimated from
// the orbit itself. Errors with NoGap when the block gaps fall below
// 4x the spectrum's standard errors.
OseledetsFrame oseledets_frames(const MapSystem& system, const OrbitSegment& orbit, double delta);

// alpha_delta(i) = max_j alpha(j) e^{-delta |i-j|}: pointwise dominating
// sequence with consecutive ratios in [e^{-delta}, e^{delta}]. Exactly
// idempotent (two-pass max recurrence).
std::vector<double> temper_sequence(const std::vector<double>& values, double delta);

struct LocalMap {
    int k = 0;
    CMat linear_part; // block estimate A_delta = C_{f(x)}^{-1} Df(x) C_x
    std::function<CVec(const CVec&)> eval;          // w -> g(w), g(0) = 0
    std::function<CVec(const CVec&)> eval_inverse;  // empty when no branches
    double radius_r1 = 0.0; // ||D^2 g|| <= 1/r1 on the r1-ball
    double radius_r2 = 0.0; // same bound for the local inverse
    double second_derivative_bound = 0.0;
    double inverse_second_derivative_bound = 0.0;
};

// g = C_{f(x)}^{-1} o f_x o C_x, centered so g(0) = 0. Radii are found by
// bisection on r * (sampled ||D^2 g|| over the r-ball) <= 1 with a 1.25
// sampling safety factor.
LocalMap normalized_local_map(const MapSystem& system, const OseledetsFrame& frame_x,
                              const OseledetsFrame& frame_fx);

// Central-difference derivative of a holomorphic (or real) map closure.
CMat closure_differential(const std::function<CVec(const CVec&)>& g, const CVec& w, int k,
                          double h = 1e-6);

} // namespace pentropy

#endif
