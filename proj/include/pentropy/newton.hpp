// Damped Newton on small dense complex systems, jacobians by central
// differences unless supplied.
#ifndef PENTROPY_NEWTON_HPP
#define PENTROPY_NEWTON_HPP

#include <functional>

#include "pentropy/error.hpp"
#include "pentropy/linalg.hpp"

namespace pentropy {

struct NewtonResult {
    CVec x;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

NewtonResult newton_solve(const std::function<CVec(const CVec&)>& f, const CVec& x0,
                          double tol = 1e-12, int budget = 50,
                          const std::function<CMat(const CVec&)>& jacobian = nullptr,
                          double fd_step = 1e-7);

} // namespace pentropy

#endif
