#include <gtest/gtest.h>

#include <random>

#include "ndeepc/error.hpp"
#include "ndeepc/predictors.hpp"
#include "support/lti.hpp"

using namespace ndeepc;
using mlp::Activation;
using mlp::MlpNetwork;

namespace {

Matrix random_matrix(Index r, Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

// Regressor/target pair with T_ini = 1, N = 2 (q = 4, pN = 2).
hankel::HankelSet synthetic_set(const Matrix &regressor, const Matrix &targets) {
    hankel::HankelSet h;
    h.dims = {1, 1, 1, 2};
    h.regressor = regressor;
    h.y_future = targets;
    return h;
}

MlpNetwork small_net(std::uint64_t seed) { return MlpNetwork::random(4, {5}, {Activation::Tanh}, 2, seed); }

}  // namespace

TEST(Context, DerivedMapsAreConsistent) {
    const auto net = small_net(1);
    const auto ctx = predictors::prepare_context(net, synthetic_set(random_matrix(4, 25, 2), random_matrix(2, 25, 3)));
    ASSERT_TRUE(ctx.full_row_rank);
    EXPECT_EQ(ctx.augmented.rows(), 6);
    EXPECT_EQ(ctx.columns(), 25);
    EXPECT_EQ(ctx.null_basis.cols(), 25 - 6);
    EXPECT_LT((ctx.augmented * ctx.null_basis).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_LT((ctx.prediction_map.leftCols(5) - ctx.net.output_weights).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_LT((ctx.prediction_map.col(5) - ctx.net.output_bias).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_THROW(predictors::prepare_context(MlpNetwork::random(3, {5}, {Activation::Tanh}, 2, 1),
                                             synthetic_set(random_matrix(4, 25, 2), random_matrix(2, 25, 3))),
                 DimensionError);
}

// Targets produced exactly by an affine read-out of the hidden layer: the
// residual vanishes, so the two predictors coincide.
TEST(Certificate, ExactAffineDataIsEquivalent) {
    const auto net = small_net(4);
    const Matrix h = random_matrix(4, 40, 5);
    const Matrix w = random_matrix(2, 5, 6);
    Matrix y = w * mlp::hidden_map_columns(net, h);
    y.colwise() += Vector(random_matrix(2, 1, 7));
    const auto ctx = predictors::prepare_context(net, synthetic_set(h, y));
    const auto e = predictors::residual_matrix(ctx, ctx.net.output_weights, ctx.net.output_bias);
    const auto cert = predictors::equivalence_certificate(ctx, e);
    EXPECT_LT(cert.value, 1e-8);
    EXPECT_TRUE(cert.equivalent);
    EXPECT_LT(e.frobenius, 1e-8);
}

TEST(Certificate, ViolatingDirectionShiftsSetValuedPrediction) {
    const auto net = small_net(8);
    const Matrix h = random_matrix(4, 30, 9);
    const auto ctx = predictors::prepare_context(net, synthetic_set(h, random_matrix(2, 30, 10)));
    const auto e = predictors::residual_matrix(ctx, ctx.net.output_weights, ctx.net.output_bias);
    const auto cert = predictors::equivalence_certificate(ctx, e);
    EXPECT_FALSE(cert.equivalent);
    ASSERT_GE(cert.worst_column, 0);
    const Vector &ghat = cert.worst_direction;
    EXPECT_LT((ctx.augmented * ghat).norm(), 1e-10);
    EXPECT_LT((ctx.y_future * ghat - e.residual * ghat).norm(), 1e-10);
    EXPECT_NEAR((e.residual * ghat).lpNorm<Eigen::Infinity>(), cert.value, 1e-12);

    // g = g^NLS + ghat is feasible for the set-valued predictor and its
    // prediction differs from the network by exactly E ghat.
    const Vector u = random_matrix(4, 1, 11);
    const auto fwd = mlp::forward(ctx.net, u);
    const Vector g = predictors::g_nls(ctx, fwd.hidden) + ghat;
    Vector target(6);
    target << fwd.hidden, 1.0;
    EXPECT_LT((ctx.augmented * g - target).norm(), 1e-9);
    EXPECT_LT((ctx.y_future * g - fwd.output - e.residual * ghat).norm(), 1e-9);

    const auto report = predictors::certificate_report(ctx, e, cert);
    EXPECT_EQ(report.at("null_space_dimension").get<Index>(), 24);
    EXPECT_FALSE(report.at("equivalent").get<bool>());
}

TEST(Certificate, SquareAugmentedMatrixHasEmptyNullSpace) {
    const auto net = small_net(12);
    const auto ctx = predictors::prepare_context(net, synthetic_set(random_matrix(4, 6, 13), random_matrix(2, 6, 14)));
    ASSERT_TRUE(ctx.full_row_rank);
    EXPECT_EQ(ctx.null_basis.cols(), 0);
    const auto e = predictors::residual_matrix(ctx, ctx.net.output_weights, ctx.net.output_bias);
    const auto cert = predictors::equivalence_certificate(ctx, e);
    EXPECT_EQ(cert.value, 0.0);
    EXPECT_EQ(cert.worst_column, -1);
    EXPECT_TRUE(cert.equivalent);
}

TEST(Certificate, RankDeficiencyThrows) {
    auto net = small_net(15);
    net.hidden[0].weights.row(4) = net.hidden[0].weights.row(1);
    net.hidden[0].bias(4) = net.hidden[0].bias(1);
    const auto ctx = predictors::prepare_context(net, synthetic_set(random_matrix(4, 30, 16), random_matrix(2, 30, 17)));
    EXPECT_FALSE(ctx.full_row_rank);
    const auto e = predictors::residual_matrix(ctx, ctx.net.output_weights, ctx.net.output_bias);
    EXPECT_THROW(predictors::equivalence_certificate(ctx, e), HypothesisError);
}

TEST(Predictors, NetworkEqualsDataPredictorAtLeastNormG) {
    const auto net = small_net(18);
    const auto ctx = predictors::prepare_context(net, synthetic_set(random_matrix(4, 35, 19), random_matrix(2, 35, 20)));
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Vector u = random_matrix(4, 1, 100 + s);
        const Vector phi = mlp::forward(ctx.net, u).hidden;
        const Vector g = predictors::g_nls(ctx, phi);
        EXPECT_LT((predictors::nls_predict(ctx.net, u) - ctx.y_future * g).norm(), 1e-10);
    }
    EXPECT_THROW(predictors::g_nls(ctx, Vector::Zero(3)), DimensionError);
}

// Identity hidden map: the prediction map is the least-squares (subspace)
// predictor Y_f [H; 1]^+. The oracles are the normal equations and, for
// noise-free LTI data, the true future outputs of a fresh trajectory.
TEST(Predictors, LinearModeIsLeastSquaresSubspacePredictor) {
    const auto sys = test_support::two_state_system();
    const Index t_ini = 2, n = 5;
    const auto h = hankel::build_hankel(test_support::lti_experiment(sys, 200, 1), t_ini, n);
    const Index q = h.dims.regressor_size();
    const auto ctx = predictors::prepare_context(MlpNetwork::identity(q, n), h);

    Matrix a(q + 1, h.columns());
    a << h.regressor, Matrix::Ones(1, h.columns());
    // Noise-free LTI data makes [H; 1] rank deficient (the state has only two
    // dimensions), so use the minimum-norm solution via complete orthogonal
    // decomposition on the transposed system.
    const Matrix oracle = a.transpose().completeOrthogonalDecomposition().solve(h.y_future.transpose()).transpose();
    EXPECT_LT((ctx.prediction_map - oracle).lpNorm<Eigen::Infinity>(), 1e-6);

    const auto fresh = hankel::build_hankel(test_support::lti_experiment(sys, 60, 2), t_ini, n);
    for (Index j = 0; j < fresh.columns(); ++j) {
        Vector r(q + 1);
        r << fresh.regressor.col(j), 1.0;
        EXPECT_LT((ctx.prediction_map * r - fresh.y_future.col(j)).lpNorm<Eigen::Infinity>(), 1e-6);
    }
}
