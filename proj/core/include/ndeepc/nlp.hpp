#pragma once

#include <functional>

#include "ndeepc/numerics.hpp"

namespace ndeepc::numerics {

/// Smooth NLP of the form
///
///     min f(x)  s.t.  c(x) = 0,  lower <= x <= upper.
///
/// Gradients and Jacobians are supplied by the caller.
struct NlpProblem {
    Index dimension = 0;
    Index num_equalities = 0;

    /// Returns f(x); fills `grad` (size dimension) when it is non-null.
    std::function<double(const Vector &x, Vector *grad)> objective;

    /// Fills c(x) (size num_equalities) and, when non-null, the
    /// num_equalities x dimension Jacobian.
    std::function<void(const Vector &x, Vector &c, Matrix *jacobian)> equalities;

    /// Empty means unbounded; otherwise size dimension, +-infinity allowed.
    Vector lower;
    Vector upper;

    Vector initial_guess;

    /// Optional positive diagonal used as the initial quasi-Newton Hessian and
    /// as the variable scaling of the inner QP. Empty means identity.
    Vector curvature_hint;

    /// Optional orthonormal columns (dimension x r, in the coordinates scaled
    /// by sqrt(curvature_hint)) along which the objective is known to be flat.
    /// The initial quasi-Newton Hessian is deflated to `flat_curvature` on their span.
    Matrix flat_directions;
    double flat_curvature = 1e-6;
};

struct NlpOptions {
    double feasibility_tolerance = 1e-8;
    /// Bound on the projected Lagrangian gradient, relative to max(1, |grad f|_inf).
    double optimality_tolerance = 1e-6;
    int max_iterations = 200;
    /// Number of correction pairs kept by the compact BFGS matrix.
    int bfgs_memory = 40;
};

struct NlpSolution {
    Vector x;
    Vector multipliers;  // equality multipliers, sign convention grad f + J^T mu = 0
    double objective = 0.0;
    double constraint_violation = 0.0;  // |c(x)|_inf
    double stationarity = 0.0;          // projected |grad L|_inf at x
    int iterations = 0;
    bool converged = false;
    double solve_seconds = 0.0;
};

/// SQP with a damped BFGS Hessian approximation in compact form and a
/// primal-dual active-set inner QP for the bounds.
///
/// Non-convergence is reported through `converged == false` with the last
/// accepted iterate. A NaN/Inf objective or constraint value at the initial
/// guess, or at every trial point of a line search, raises NumericalError.
NlpSolution solve_nlp(const NlpProblem &problem, const NlpOptions &options = {});

}  // namespace ndeepc::numerics
