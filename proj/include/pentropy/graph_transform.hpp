// The quantitative graph transform: pushing a Lipschitz graph over the
// expanding block of a hyperbolic-plus-small-perturbation map
//   g(X, Y) = (A X + R(X, Y), B Y + U(X, Y))
// to the graph of its image, with the explicit Lipschitz and domain-radius
// bounds. pullback_graph runs the same machinery with the block roles
// swapped, which is how stable-side graphs are pulled through local inverses.
#ifndef PENTROPY_GRAPH_TRANSFORM_HPP
#define PENTROPY_GRAPH_TRANSFORM_HPP

#include "pentropy/graph_patch.hpp"

namespace pentropy {

struct GraphTransformSetup {
    int k1 = 1, k2 = 1;
    Mode mode = Mode::Complex;
    CMat A, B;        // k1 x k1 and k2 x k2 linear blocks
    Evaluator g;      // full map on the (k1 + k2)-dimensional block coordinates
    double gamma = 0.0;   // bound on ||DR||, ||DU|| over the working ball
    double gamma0 = 1.0;  // input Lipschitz budget
    double R0 = 1.0, R1 = 1.0; // working radii, g : B(0, R0) -> B(0, R1)
    double alpha = 1.0;   // input domain radius
    double beta = 0.0;    // input center offset ||phi(0)||
    bool affine = false;  // g is affine: transforms stay closed-form

    int k() const { return k1 + k2; }
    double norm_B() const { return op_norm_inf(B); }
    double conorm_A() const { return inv_norm_recip(A); } // ||A^{-1}||^{-1}
    double xi() const { return 1.0 - norm_B() * op_norm_inf(CMat(A.inverse())); }
    bool hyperbolic() const { return norm_B() < conorm_A(); }
    // The displayed hypothesis gamma ||A^{-1}|| (1 + gamma0) < 1.
    bool hypothesis() const {
        return hyperbolic() && gamma * op_norm_inf(CMat(A.inverse())) * (1.0 + gamma0) < 1.0;
    }
    // Lipschitz constant of the image graph.
    double output_lip_bound() const {
        return (norm_B() * gamma0 + gamma * (1.0 + gamma0)) /
               (conorm_A() - gamma * (1.0 + gamma0));
    }
    // Bound on the new center offset given ||D^2 g|| over the working ball.
    double center_offset_bound(double d2_bound) const {
        return (1.0 + gamma0) * (norm_B() * beta + gamma * beta + d2_bound * beta * beta);
    }
};

// gamma estimate: max sampled ||Dg - diag(A,B)|| block norms over the ball of
// radius R0, times a 1.25 sampling safety factor.
double estimate_gamma(const Evaluator& g, const CMat& A, const CMat& B, double R0,
                      int sample_count = 48, std::uint64_t seed = 7);

// Builds a setup from a local map in block coordinates. The linear blocks are
// read off Dg(0) and gamma is sampled.
GraphTransformSetup make_setup(int k1, int k2, Mode mode, Evaluator g, double R0, double R1,
                               double gamma0);

// Guaranteed output ball radius (||A^{-1}||^{-1} - gamma (1 + gamma0)) alpha - gamma beta.
double transform_domain_bound(const GraphTransformSetup& setup, double alpha, double beta);

// Image of the graph (X, phi(X)) under g, as a graph over the first block.
// phi must be a block-coordinate patch over the k1 side (see block_graph).
GraphPatch graph_transform(const GraphTransformSetup& setup, const GraphPatch& phi);

// Image of a stable-side graph (psi(Y), Y) under the local-inverse setup:
// the same transform with the roles of the blocks swapped. psi is a
// block-coordinate patch over the k2 side (base = second block).
GraphPatch pullback_graph(const GraphTransformSetup& inverse_setup, const GraphPatch& psi);

} // namespace pentropy

#endif
