#include "pentropy/newton.hpp"

namespace pentropy {

NewtonResult newton_solve(const std::function<CVec(const CVec&)>& f, const CVec& x0, double tol,
                          int budget, const std::function<CMat(const CVec&)>& jacobian,
                          double fd_step) {
    const int k = static_cast<int>(x0.size());
    NewtonResult res;
    res.x = x0;
    CVec fx = f(res.x);
    res.residual = max_norm(fx);
    for (int it = 0; it < budget; ++it) {
        if (res.residual <= tol) {
            res.converged = true;
            res.iterations = it;
            return res;
        }
        CMat j;
        if (jacobian) {
            j = jacobian(res.x);
        } else {
            j = CMat(k, k);
            for (int col = 0; col < k; ++col) {
                CVec hi = res.x, lo = res.x;
                hi[col] += fd_step;
                lo[col] -= fd_step;
                j.col(col) = (f(hi) - f(lo)) / (2.0 * fd_step);
            }
        }
        CVec step = j.fullPivLu().solve(fx);
        if (!step.allFinite()) break;
        // Backtracking keeps the residual monotone.
        double damp = 1.0;
        for (int bt = 0; bt < 8; ++bt) {
            CVec trial = res.x - damp * step;
            CVec ft = f(trial);
            double r = max_norm(ft);
            if (r < res.residual || !std::isfinite(res.residual)) {
                res.x = trial;
                fx = ft;
                res.residual = r;
                break;
            }
            damp *= 0.5;
            if (bt == 7) {
                res.iterations = it + 1;
                return res; // stuck
            }
        }
        res.iterations = it + 1;
    }
    res.converged = res.residual <= tol;
    return res;
}

} // namespace pentropy
