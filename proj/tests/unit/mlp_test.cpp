#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ndeepc/error.hpp"
#include "ndeepc/mlp.hpp"

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

MlpNetwork scalar_net() {
    MlpNetwork net;
    net.hidden.push_back({Matrix::Constant(1, 1, 2.0), Vector::Zero(1), Activation::Tanh});
    net.output_weights = Matrix::Constant(1, 1, 3.0);
    net.output_bias = Vector::Ones(1);
    return net;
}

}  // namespace

TEST(Forward, ScalarTanhNetwork) {
    // 3 tanh(2 * 0.5) + 1 = 3.2847824678...
    const auto r = mlp::forward(scalar_net(), Vector::Constant(1, 0.5));
    EXPECT_NEAR(r.output(0), 3.0 * std::tanh(1.0) + 1.0, 1e-15);
    EXPECT_NEAR(r.output(0), 3.2847824678672946, 1e-12);
    EXPECT_NEAR(r.hidden(0), std::tanh(1.0), 1e-15);
    EXPECT_THROW(mlp::forward(scalar_net(), Vector::Ones(2)), DimensionError);
}

TEST(Forward, ColumnsMatchSingleCalls) {
    const auto net = MlpNetwork::random(4, {6, 5}, {Activation::Tanh, Activation::Tanh}, 3, 9);
    const Matrix x = random_matrix(4, 7, 1);
    const Matrix out = mlp::forward_columns(net, x);
    const Matrix hid = mlp::hidden_map_columns(net, x);
    for (Index j = 0; j < x.cols(); ++j) {
        const auto r = mlp::forward(net, x.col(j));
        EXPECT_LT((out.col(j) - r.output).norm(), 1e-14);
        EXPECT_LT((hid.col(j) - r.hidden).norm(), 1e-14);
    }
}

TEST(Gradient, MatchesCentralDifferences) {
    const auto net = MlpNetwork::random(3, {5, 4}, {Activation::Tanh, Activation::Linear}, 2, 4);
    const Matrix x = random_matrix(3, 11, 2);
    const Matrix y = random_matrix(2, 11, 3);
    Vector grad;
    mlp::loss_and_gradient(net, x, y, &grad);
    const Vector p = mlp::pack_parameters(net);
    ASSERT_EQ(grad.size(), p.size());
    ASSERT_EQ(p.size(), net.parameter_count());
    const double h = 1e-6;
    for (Index i = 0; i < p.size(); ++i) {
        MlpNetwork a = net, b = net;
        Vector pp = p, pm = p;
        pp(i) += h;
        pm(i) -= h;
        mlp::unpack_parameters(a, pp);
        mlp::unpack_parameters(b, pm);
        const double fd = (mlp::fit_cost(a, x, y) - mlp::fit_cost(b, x, y)) / (2 * h);
        EXPECT_NEAR(grad(i), fd, 1e-5 * std::max(1.0, std::abs(fd))) << "parameter " << i;
    }
}

TEST(Gradient, HiddenJacobianMatchesCentralDifferences) {
    const auto net = MlpNetwork::random(4, {7, 6}, {Activation::Tanh, Activation::Tanh}, 2, 12);
    const Vector u = random_matrix(4, 1, 5);
    const Matrix j = mlp::hidden_jacobian(net, u);
    ASSERT_EQ(j.rows(), 6);
    ASSERT_EQ(j.cols(), 4);
    const double h = 1e-6;
    for (Index c = 0; c < 4; ++c) {
        Vector up = u, um = u;
        up(c) += h;
        um(c) -= h;
        const Vector fd = (mlp::forward(net, up).hidden - mlp::forward(net, um).hidden) / (2 * h);
        EXPECT_LT((j.col(c) - fd).lpNorm<Eigen::Infinity>(), 1e-8);
    }
}

TEST(Training, ZeroResidualIsAFixedPoint) {
    const auto net = MlpNetwork::random(2, {4}, {Activation::Tanh}, 1, 3);
    const Matrix x = random_matrix(2, 30, 6);
    const Matrix y = mlp::forward_columns(net, x);
    Vector grad;
    EXPECT_NEAR(mlp::loss_and_gradient(net, x, y, &grad), 0.0, 1e-28);
    EXPECT_EQ(grad.lpNorm<Eigen::Infinity>(), 0.0);
    mlp::TrainConfig cfg;
    cfg.epochs = 50;
    cfg.normalize = false;
    const auto res = mlp::train_nls(net, x, y, cfg);
    EXPECT_EQ(mlp::pack_parameters(res.net), mlp::pack_parameters(net));
    EXPECT_EQ(res.final_loss, 0.0);
}

TEST(Training, RecoversLinearGain) {
    Matrix x(1, 41);
    for (Index j = 0; j < 41; ++j) x(0, j) = -1.0 + 0.05 * j;
    const Matrix y = 2.0 * x;
    auto net = MlpNetwork::random(1, {1}, {Activation::Linear}, 1, 2);
    mlp::TrainConfig cfg;
    cfg.epochs = 5000;
    const auto res = mlp::train_nls(net, x, y, cfg);
    const double gain = res.net.output_weights(0, 0) * res.net.hidden[0].weights(0, 0);
    EXPECT_NEAR(gain, 2.0, 1e-3);
    EXPECT_NEAR(mlp::forward(res.net, Vector::Constant(1, 0.5)).output(0), 1.0, 1e-3);
    ASSERT_FALSE(res.history.empty());
    EXPECT_LT(res.history.back().loss, res.history.front().loss);
}

TEST(Training, IsDeterministic) {
    const Matrix x = random_matrix(3, 50, 8);
    const Matrix y = random_matrix(2, 50, 9);
    mlp::TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 16;
    const auto net = MlpNetwork::random(3, {8}, {Activation::Tanh}, 2, 10);
    const auto a = mlp::train_nls(net, x, y, cfg);
    const auto b = mlp::train_nls(net, x, y, cfg);
    EXPECT_EQ(mlp::pack_parameters(a.net), mlp::pack_parameters(b.net));
    EXPECT_EQ(a.final_loss, b.final_loss);
}

TEST(Training, DivergenceThrows) {
    const Matrix x = random_matrix(2, 20, 1);
    const Matrix y = random_matrix(1, 20, 2);
    mlp::TrainConfig cfg;
    cfg.learning_rate = 1e200;
    cfg.epochs = 20;
    cfg.normalize = false;
    const auto net = MlpNetwork::random(2, {3}, {Activation::Linear}, 1, 1);
    EXPECT_THROW(mlp::train_nls(net, x, y, cfg), TrainingError);
}

TEST(Training, RejectsBadConfig) {
    mlp::TrainConfig cfg;
    cfg.learning_rate = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

// Oracle: [W b] = Y A^T (A A^T)^{-1} for the full-row-rank augmented matrix A.
TEST(Refit, MatchesNormalEquations) {
    auto net = MlpNetwork::random(3, {6}, {Activation::Tanh}, 2, 21);
    const Matrix x = random_matrix(3, 40, 22);
    const Matrix y = random_matrix(2, 40, 23);
    const auto phi = mlp::neural_data_matrix(net, x);
    ASSERT_TRUE(phi.full_row_rank);
    ASSERT_EQ(phi.augmented.rows(), 7);
    EXPECT_EQ(phi.augmented.row(6), Matrix::Ones(1, 40));
    const Matrix a = phi.augmented;
    const Matrix oracle = (a * a.transpose()).ldlt().solve(a * y.transpose()).transpose();
    const auto layer = mlp::refit_output_layer(net, phi, y);
    EXPECT_LT((layer.weights - oracle.leftCols(6)).lpNorm<Eigen::Infinity>(), 1e-9);
    EXPECT_LT((layer.bias - oracle.col(6)).lpNorm<Eigen::Infinity>(), 1e-9);
    EXPECT_EQ(net.output_weights, layer.weights);
}

TEST(Refit, NeverIncreasesCost) {
    const Matrix x = random_matrix(4, 60, 30);
    const Matrix y = random_matrix(3, 60, 31);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto net = MlpNetwork::random(4, {10}, {Activation::Tanh}, 3, seed);
        mlp::TrainConfig cfg;
        cfg.epochs = 100;
        cfg.seed = seed;
        auto trained = mlp::train_nls(net, x, y, cfg).net;
        const double before = mlp::fit_cost(trained, x, y);
        mlp::refit_output_layer(trained, mlp::neural_data_matrix(trained, x), y);
        EXPECT_LE(mlp::fit_cost(trained, x, y), before * (1 + 1e-12)) << "seed " << seed;
    }
}

TEST(NeuralDataMatrix, DetectsDuplicateFeatures) {
    auto net = MlpNetwork::random(2, {3}, {Activation::Tanh}, 1, 1);
    net.hidden[0].weights.row(2) = net.hidden[0].weights.row(0);
    const auto phi = mlp::neural_data_matrix(net, random_matrix(2, 20, 4));
    EXPECT_FALSE(phi.full_row_rank);
    EXPECT_EQ(phi.rank, 3);
}

TEST(Serialization, JsonRoundTripIsExact) {
    auto net = MlpNetwork::random(5, {4, 3}, {Activation::Tanh, Activation::Linear}, 2, 77);
    net.output_bias << 0.1, -1.0 / 3.0;
    const auto back = mlp::network_from_json(mlp::to_json(net));
    EXPECT_EQ(mlp::pack_parameters(back), mlp::pack_parameters(net));
    EXPECT_EQ(back.hidden[1].activation, Activation::Linear);

    const auto path = std::filesystem::temp_directory_path() / "ndeepc_mlp_roundtrip.json";
    mlp::save_network(path, net, {{"note", "test"}});
    const auto loaded = mlp::load_network(path);
    std::filesystem::remove(path);
    const Vector u = random_matrix(5, 1, 3);
    EXPECT_EQ(mlp::forward(loaded, u).output, mlp::forward(net, u).output);
}

TEST(Serialization, RejectsMalformedInput) {
    EXPECT_THROW(mlp::network_from_json(nlohmann::json{{"format", "other"}}), Error);
    EXPECT_THROW(mlp::load_network("/nonexistent/weights.json"), IoError);
}

TEST(Activation, NamesRoundTrip) {
    EXPECT_EQ(mlp::activation_from_string(mlp::to_string(Activation::Tanh)), Activation::Tanh);
    EXPECT_EQ(mlp::activation_from_string(mlp::to_string(Activation::Linear)), Activation::Linear);
    EXPECT_THROW(mlp::activation_from_string("relu"), ConfigError);
}
