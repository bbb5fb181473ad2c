// Simultaneous root iteration for univariate complex polynomials.
#ifndef PENTROPY_ROOTS_HPP
#define PENTROPY_ROOTS_HPP

#include <vector>

#include "pentropy/linalg.hpp"

namespace pentropy {

// Coefficients low-to-high: p(z) = c[0] + c[1] z + ... + c[d] z^d.
struct Polynomial {
    std::vector<Complex> coeffs;

    int degree() const { return static_cast<int>(coeffs.size()) - 1; }
    Complex eval(Complex z) const;
    Complex derivative(Complex z) const;
};

// All roots of p(z) = target by Durand-Kerner iteration. Warm starts, when
// given, are perturbed slightly so coincident guesses do not lock the
// iteration; preimage trees pass the parent level's roots here.
std::vector<Complex> solve_roots(const Polynomial& p, Complex target,
                                 const std::vector<Complex>& warm_starts = {},
                                 int max_iterations = 120, double residual_tol = 1e-11);

} // namespace pentropy

#endif
