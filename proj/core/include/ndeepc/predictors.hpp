#pragma once

#include <nlohmann/json.hpp>

#include "ndeepc/hankel.hpp"
#include "ndeepc/mlp.hpp"
#include "ndeepc/numerics.hpp"

namespace ndeepc::predictors {

struct ContextOptions {
    double svd_tolerance = numerics::kDefaultSvdTolerance;
    /// Materialize an orthonormal basis of N([Phi; 1^T]) (T x (T - rank)).
    bool with_null_basis = true;
};

/// Frozen data used online: the neural data matrix, Y_f, and the derived
/// pseudo-inverses and null-space basis. Immutable once prepared.
struct DeepcContext {
    hankel::Dims dims;
    mlp::MlpNetwork net;  // carries the least-squares output layer

    Matrix hidden_data;   // Phi_bar, L x T
    Matrix augmented;     // [Phi_bar; 1^T], (L+1) x T
    Matrix y_future;      // pN x T
    Matrix pinv_augmented;   // T x (L+1)
    Matrix y_future_pinv;    // T x pN
    Matrix null_basis;       // T x (T - rank), orthonormal columns
    Matrix prediction_map;   // Y_f pinv_augmented = [W_o^LS b_o^LS], pN x (L+1)
    Matrix slack_map;        // [Phi_bar; 1^T] Y_f^+, (L+1) x pN

    double min_singular_value = 0.0;  // of the augmented matrix
    Index rank = 0;
    bool full_row_rank = false;
    double y_future_min_singular_value = 0.0;
    bool y_future_full_row_rank = false;

    [[nodiscard]] Index columns() const { return augmented.cols(); }
    [[nodiscard]] Index features() const { return hidden_data.rows(); }
};

/// Builds the context and installs the least-squares output layer in its
/// copy of `net` (the refit, so `net` only needs trained hidden layers).
DeepcContext prepare_context(const mlp::MlpNetwork &net, const hankel::HankelSet &h,
                             const ContextOptions &opts = {});

/// g^NLS = [Phi_bar; 1^T]^+ col(phi, 1).
Vector g_nls(const DeepcContext &ctx, const Vector &hidden);

/// Point predictor: the network with its (refit) output layer.
Vector nls_predict(const mlp::MlpNetwork &net, const Vector &regressor);

struct ResidualMatrix {
    Matrix residual;  // Y_f - [W b] [Phi_bar; 1^T]
    double frobenius = 0.0;
};

ResidualMatrix residual_matrix(const DeepcContext &ctx, const Matrix &weights, const Vector &bias);

struct EquivalenceCertificate {
    double value = 0.0;  // max over null-basis columns v of |E v|_inf
    bool equivalent = true;
    double tolerance = 0.0;
    Index worst_column = -1;   // index into the null basis, -1 if empty
    Vector worst_direction;    // that basis column (a violating g_hat when !equivalent)
};

inline constexpr double kDefaultEquivalenceTolerance = 1e-6;

/// Set-valued and point predictors coincide iff E g_hat = 0 on the null space.
/// Throws HypothesisError when the augmented matrix is not of full row rank.
EquivalenceCertificate equivalence_certificate(const DeepcContext &ctx, const ResidualMatrix &e,
                                               double tolerance = kDefaultEquivalenceTolerance);

nlohmann::json certificate_report(const DeepcContext &ctx, const ResidualMatrix &e,
                                  const EquivalenceCertificate &cert);

}  // namespace ndeepc::predictors
