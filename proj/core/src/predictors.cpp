#include "ndeepc/predictors.hpp"

#include <algorithm>
#include <string>

#include "ndeepc/error.hpp"

namespace ndeepc::predictors {

DeepcContext prepare_context(const mlp::MlpNetwork &net, const hankel::HankelSet &h, const ContextOptions &opts) {
    net.validate();
    if (net.input_size() != h.dims.regressor_size()) {
        throw DimensionError("network input size " + std::to_string(net.input_size()) +
                             " does not match the regressor size " + std::to_string(h.dims.regressor_size()));
    }
    if (net.output_size() != h.dims.prediction_size()) {
        throw DimensionError("network output size does not match p*N");
    }
    DeepcContext ctx;
    ctx.dims = h.dims;
    ctx.net = net;
    auto phi = mlp::neural_data_matrix(net, h.regressor, opts.svd_tolerance);
    mlp::refit_output_layer(ctx.net, phi, h.y_future, opts.svd_tolerance);

    ctx.hidden_data = std::move(phi.hidden);
    ctx.augmented = std::move(phi.augmented);
    ctx.min_singular_value = phi.min_singular_value;
    ctx.rank = phi.rank;
    ctx.full_row_rank = phi.full_row_rank;
    ctx.y_future = h.y_future;

    ctx.pinv_augmented = numerics::pseudo_inverse(ctx.augmented, opts.svd_tolerance);
    ctx.prediction_map = ctx.y_future * ctx.pinv_augmented;
    ctx.y_future_pinv = numerics::pseudo_inverse(ctx.y_future, opts.svd_tolerance);
    ctx.slack_map = ctx.augmented * ctx.y_future_pinv;
    const auto yinfo = numerics::rank_info(ctx.y_future, opts.svd_tolerance);
    ctx.y_future_min_singular_value = yinfo.min_singular_value;
    ctx.y_future_full_row_rank = yinfo.full_row_rank;
    if (opts.with_null_basis) ctx.null_basis = numerics::nullspace_basis(ctx.augmented, opts.svd_tolerance);
    return ctx;
}

Vector g_nls(const DeepcContext &ctx, const Vector &hidden) {
    if (hidden.size() != ctx.features()) throw DimensionError("hidden vector size mismatch");
    Vector rhs(hidden.size() + 1);
    rhs << hidden, 1.0;
    return ctx.pinv_augmented * rhs;
}

Vector nls_predict(const mlp::MlpNetwork &net, const Vector &regressor) {
    return mlp::forward(net, regressor).output;
}

ResidualMatrix residual_matrix(const DeepcContext &ctx, const Matrix &weights, const Vector &bias) {
    if (weights.rows() != ctx.y_future.rows() || weights.cols() != ctx.features() || bias.size() != weights.rows()) {
        throw DimensionError("output layer does not match the context");
    }
    ResidualMatrix r;
    r.residual = ctx.y_future - weights * ctx.hidden_data;
    r.residual.colwise() -= bias;
    r.frobenius = r.residual.norm();
    return r;
}

EquivalenceCertificate equivalence_certificate(const DeepcContext &ctx, const ResidualMatrix &e, double tolerance) {
    if (!ctx.full_row_rank) {
        throw HypothesisError("augmented neural data matrix is rank deficient (rank " + std::to_string(ctx.rank) +
                              " of " + std::to_string(ctx.augmented.rows()) + ", min singular value " +
                              std::to_string(ctx.min_singular_value) + ")");
    }
    if (ctx.null_basis.rows() != ctx.columns()) throw ConfigError("context was prepared without a null-space basis");
    EquivalenceCertificate cert;
    cert.tolerance = tolerance;
    constexpr Index kBlock = 256;
    const Index k = ctx.null_basis.cols();
    for (Index start = 0; start < k; start += kBlock) {
        const Index len = std::min(kBlock, k - start);
        const Matrix prod = e.residual * ctx.null_basis.middleCols(start, len);
        for (Index j = 0; j < len; ++j) {
            const double v = prod.col(j).lpNorm<Eigen::Infinity>();
            if (v > cert.value || cert.worst_column < 0) {
                cert.value = std::max(cert.value, v);
                cert.worst_column = start + j;
            }
        }
    }
    if (cert.worst_column >= 0) cert.worst_direction = ctx.null_basis.col(cert.worst_column);
    cert.equivalent = cert.value <= tolerance;
    return cert;
}

nlohmann::json certificate_report(const DeepcContext &ctx, const ResidualMatrix &e, const EquivalenceCertificate &cert) {
    return {{"hidden_rows", ctx.hidden_data.rows()},
            {"hidden_cols", ctx.hidden_data.cols()},
            {"augmented_min_singular_value", ctx.min_singular_value},
            {"augmented_full_row_rank", ctx.full_row_rank},
            {"residual_frobenius", e.frobenius},
            {"certificate", cert.value},
            {"tolerance", cert.tolerance},
            {"equivalent", cert.equivalent},
            {"null_space_dimension", ctx.null_basis.cols()}};
}

}  // namespace ndeepc::predictors
