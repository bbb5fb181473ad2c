#include "pentropy/roots.hpp"

#include <cmath>

#include "pentropy/error.hpp"

namespace pentropy {

Complex Polynomial::eval(Complex z) const {
    Complex acc(0.0, 0.0);
    for (size_t i = coeffs.size(); i-- > 0;) acc = acc * z + coeffs[i];
    return acc;
}

Complex Polynomial::derivative(Complex z) const {
    Complex acc(0.0, 0.0);
    for (size_t i = coeffs.size(); i-- > 1;) acc = acc * z + coeffs[i] * static_cast<double>(i);
    return acc;
}

std::vector<Complex> solve_roots(const Polynomial& p, Complex target,
                                 const std::vector<Complex>& warm_starts,
                                 int max_iterations, double residual_tol) {
    const int d = p.degree();
    if (d < 1) raise(ErrorKind::RootFindingFailure, "constant polynomial has no roots");

    Polynomial q = p;
    q.coeffs[0] -= target;
    const Complex lead = q.coeffs[static_cast<size_t>(d)];
    if (std::abs(lead) == 0.0)
        raise(ErrorKind::RootFindingFailure, "degenerate leading coefficient");

    // Cauchy bound gives the starting ring radius.
    double bound = 0.0;
    for (int i = 0; i < d; ++i) bound = std::max(bound, std::abs(q.coeffs[static_cast<size_t>(i)] / lead));
    double ring = 1.0 + bound;

    std::vector<Complex> z(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) {
        if (i < static_cast<int>(warm_starts.size())) {
            // Perturbation breaks ties between coincident warm starts.
            double eps = 1e-6 * (1.0 + std::abs(warm_starts[static_cast<size_t>(i)]));
            z[static_cast<size_t>(i)] =
                warm_starts[static_cast<size_t>(i)] + eps * std::polar(1.0, 0.4 + 2.399 * i);
        } else {
            z[static_cast<size_t>(i)] = ring * std::polar(1.0, 2.0 * M_PI * (i + 0.25) / d);
        }
    }

    for (int iter = 0; iter < max_iterations; ++iter) {
        double step = 0.0;
        for (int i = 0; i < d; ++i) {
            Complex denom = lead;
            for (int j = 0; j < d; ++j) {
                if (j == i) continue;
                denom *= z[static_cast<size_t>(i)] - z[static_cast<size_t>(j)];
            }
            if (std::abs(denom) == 0.0) {
                denom = Complex(1e-30, 0.0);
            }
            Complex dz = q.eval(z[static_cast<size_t>(i)]) / denom;
            z[static_cast<size_t>(i)] -= dz;
            step = std::max(step, std::abs(dz));
        }
        if (step < 1e-14 * (1.0 + ring)) break;
    }

    // Newton polish and residual check per root.
    for (int i = 0; i < d; ++i) {
        Complex& zi = z[static_cast<size_t>(i)];
        for (int it = 0; it < 3; ++it) {
            Complex dp = q.derivative(zi);
            if (std::abs(dp) == 0.0) break;
            zi -= q.eval(zi) / dp;
        }
        double residual = std::abs(q.eval(zi));
        double scale = std::abs(lead) * std::pow(1.0 + std::abs(zi), d);
        if (residual > residual_tol * std::max(1.0, scale))
            raise(ErrorKind::RootFindingFailure,
                  "residual " + std::to_string(residual) + " after iteration budget");
    }
    return z;
}

} // namespace pentropy
