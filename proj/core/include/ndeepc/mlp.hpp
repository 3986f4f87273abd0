#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ndeepc/numerics.hpp"

namespace ndeepc::mlp {

enum class Activation { Tanh, Linear };

const char *to_string(Activation a);
Activation activation_from_string(const std::string &name);

struct DenseLayer {
    Matrix weights;  // out x in
    Vector bias;     // out
    Activation activation = Activation::Tanh;
};

/// Affine standardization used while training. After `train_nls` returns, the
/// maps are folded into the first hidden layer and the output layer, so the
/// network acts on raw regressors; the record is kept for provenance.
struct Normalization {
    bool enabled = false;
    Vector input_mean;
    Vector input_scale;
    Vector output_mean;
    Vector output_scale;
};

/// Multilayer perceptron y = W_o z_l + b_o with z_i = act(W_i z_{i-1} + b_i).
/// The map u -> z_l is the hidden-layer (feature) map.
struct MlpNetwork {
    std::vector<DenseLayer> hidden;
    Matrix output_weights;  // out x L
    Vector output_bias;
    Normalization normalization;

    [[nodiscard]] Index input_size() const { return hidden.empty() ? 0 : hidden.front().weights.cols(); }
    [[nodiscard]] Index hidden_size() const { return hidden.empty() ? 0 : hidden.back().weights.rows(); }
    [[nodiscard]] Index output_size() const { return output_weights.rows(); }
    [[nodiscard]] Index parameter_count() const;

    void validate() const;

    /// Glorot-uniform weights and zero biases from a seeded generator.
    static MlpNetwork random(Index inputs, const std::vector<Index> &widths,
                             const std::vector<Activation> &activations, Index outputs, std::uint64_t seed);

    /// One linear hidden layer with identity weights, so the hidden map is
    /// the identity. The output layer is zero until refit.
    static MlpNetwork identity(Index inputs, Index outputs);
};

struct ForwardResult {
    Vector output;  // full network map
    Vector hidden;  // last hidden-layer activation
};

ForwardResult forward(const MlpNetwork &net, const Vector &input);

/// Hidden map applied to every column of `inputs` (L x cols).
Matrix hidden_map_columns(const MlpNetwork &net, const Matrix &inputs);

/// d z_l / d u, size L x input_size.
Matrix hidden_jacobian(const MlpNetwork &net, const Vector &input);

/// Network outputs for every column of `inputs`.
Matrix forward_columns(const MlpNetwork &net, const Matrix &inputs);

/// Frobenius fit cost |targets - net(inputs)|_F^2.
double fit_cost(const MlpNetwork &net, const Matrix &inputs, const Matrix &targets);

/// Parameters flattened as [W_1, b_1, ..., W_l, b_l, W_o, b_o], column-major.
Vector pack_parameters(const MlpNetwork &net);
void unpack_parameters(MlpNetwork &net, const Vector &params);

/// Frobenius loss on (inputs, targets); the gradient with respect to the
/// packed parameters is written when `grad` is non-null.
double loss_and_gradient(const MlpNetwork &net, const Matrix &inputs, const Matrix &targets, Vector *grad);

struct TrainConfig {
    double learning_rate = 1e-3;
    /// 0 selects full batch for up to 2000 columns and 256 otherwise.
    Index batch_size = 0;
    int epochs = 5000;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int report_every = 100;
    bool normalize = true;

    void validate() const;
};

struct LossRecord {
    int epoch = 0;
    double loss = 0.0;  // Frobenius cost in physical units
};

struct TrainResult {
    MlpNetwork net;
    std::vector<LossRecord> history;
    double final_loss = 0.0;
};

/// Adam on |Y_f - net(H)|_F^2 by backpropagation. `outputs_per_step` groups
/// target rows by channel for the output standardization (row r belongs to
/// channel r % outputs_per_step). With normalization on, the incoming
/// parameters are interpreted in standardized coordinates.
/// Throws TrainingError if the loss becomes NaN or infinite.
TrainResult train_nls(MlpNetwork net, const Matrix &inputs, const Matrix &targets, const TrainConfig &cfg,
                      Index outputs_per_step = 1);

/// Hidden-layer outputs of all regressor columns and their affine-augmented
/// form [Phi; 1^T] with rank diagnostics.
struct NeuralDataMatrix {
    Matrix hidden;     // L x T
    Matrix augmented;  // (L+1) x T
    double min_singular_value = 0.0;
    Index rank = 0;
    bool full_row_rank = false;
};

NeuralDataMatrix neural_data_matrix(const MlpNetwork &net, const Matrix &inputs,
                                    double tol = numerics::kDefaultSvdTolerance);

struct OutputLayer {
    Matrix weights;
    Vector bias;
};

/// Least-squares output layer [W_o b_o] = Y_f [Phi; 1^T]^+; installs it in `net`.
OutputLayer refit_output_layer(MlpNetwork &net, const NeuralDataMatrix &phi, const Matrix &targets,
                               double tol = numerics::kDefaultSvdTolerance);

nlohmann::json to_json(const MlpNetwork &net);
MlpNetwork network_from_json(const nlohmann::json &j);

void save_network(const std::filesystem::path &path, const MlpNetwork &net,
                  const nlohmann::json &metadata = nlohmann::json::object());
MlpNetwork load_network(const std::filesystem::path &path);

}  // namespace ndeepc::mlp
