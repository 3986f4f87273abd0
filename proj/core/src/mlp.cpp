#include "ndeepc/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "ndeepc/error.hpp"

namespace ndeepc::mlp {
namespace {

void activate(Activation a, Matrix &m) {
    if (a == Activation::Tanh) m = m.array().tanh().matrix();
}

// Derivative expressed through the activation value.
Matrix activation_slope(Activation a, const Matrix &value) {
    if (a == Activation::Tanh) return (1.0 - value.array().square()).matrix();
    return Matrix::Ones(value.rows(), value.cols());
}

nlohmann::json matrix_json(const Matrix &m) {
    std::vector<double> rm;
    rm.reserve(static_cast<std::size_t>(m.size()));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) rm.push_back(m(r, c));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rm}};
}

Matrix matrix_from_json(const nlohmann::json &j) {
    const Index rows = j.at("rows").get<Index>();
    const Index cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != rows * cols) throw IoError("matrix entry count does not match dims");
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    return m;
}

Vector vector_from_json(const nlohmann::json &j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

std::vector<double> std_vector(const Vector &v) { return {v.data(), v.data() + v.size()}; }

struct Standardization {
    Vector mean;
    Vector scale;
};

Standardization row_stats(const Matrix &m) {
    Standardization s;
    s.mean = m.rowwise().mean();
    s.scale.resize(m.rows());
    for (Index r = 0; r < m.rows(); ++r) {
        const double var = (m.row(r).array() - s.mean(r)).square().mean();
        s.scale(r) = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    return s;
}

// One mean/scale per output channel, shared by all horizon steps.
Standardization channel_stats(const Matrix &m, Index channels) {
    Standardization s;
    s.mean = Vector::Zero(m.rows());
    s.scale = Vector::Ones(m.rows());
    for (Index c = 0; c < channels; ++c) {
        double sum = 0.0;
        double count = 0.0;
        for (Index r = c; r < m.rows(); r += channels) {
            sum += m.row(r).sum();
            count += static_cast<double>(m.cols());
        }
        const double mean = sum / count;
        double ss = 0.0;
        for (Index r = c; r < m.rows(); r += channels) ss += (m.row(r).array() - mean).square().sum();
        const double sd = std::sqrt(ss / count);
        for (Index r = c; r < m.rows(); r += channels) {
            s.mean(r) = mean;
            s.scale(r) = sd > 1e-12 ? sd : 1.0;
        }
    }
    return s;
}

}  // namespace

const char *to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "linear"; }

Activation activation_from_string(const std::string &name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "linear") return Activation::Linear;
    throw ConfigError("unknown activation '" + name + "' (expected tanh or linear)");
}

Index MlpNetwork::parameter_count() const {
    Index n = output_weights.size() + output_bias.size();
    for (const auto &l : hidden) n += l.weights.size() + l.bias.size();
    return n;
}

void MlpNetwork::validate() const {
    if (hidden.empty()) throw DimensionError("network needs at least one hidden layer");
    Index in = hidden.front().weights.cols();
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        const auto &l = hidden[i];
        if (l.weights.cols() != in || l.bias.size() != l.weights.rows() || l.weights.rows() < 1) {
            throw DimensionError("hidden layer " + std::to_string(i) + " dimensions are inconsistent");
        }
        numerics::require_finite(l.weights, "hidden weights");
        numerics::require_finite(l.bias, "hidden bias");
        in = l.weights.rows();
    }
    if (output_weights.cols() != in || output_bias.size() != output_weights.rows()) {
        throw DimensionError("output layer dimensions are inconsistent");
    }
    numerics::require_finite(output_weights, "output weights");
    numerics::require_finite(output_bias, "output bias");
}

MlpNetwork MlpNetwork::random(Index inputs, const std::vector<Index> &widths,
                              const std::vector<Activation> &activations, Index outputs, std::uint64_t seed) {
    if (widths.empty() || widths.size() != activations.size()) {
        throw ConfigError("layer widths and activations must be non-empty and of equal length");
    }
    if (inputs < 1 || outputs < 1) throw DimensionError("network input and output sizes must be >= 1");
    std::mt19937_64 rng(seed);
    auto glorot = [&rng](Index rows, Index cols) {
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        std::uniform_real_distribution<double> dist(-limit, limit);
        Matrix w(rows, cols);
        for (Index c = 0; c < cols; ++c)
            for (Index r = 0; r < rows; ++r) w(r, c) = dist(rng);
        return w;
    };
    MlpNetwork net;
    Index in = inputs;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (widths[i] < 1) throw ConfigError("hidden layer width must be >= 1");
        net.hidden.push_back({glorot(widths[i], in), Vector::Zero(widths[i]), activations[i]});
        in = widths[i];
    }
    net.output_weights = glorot(outputs, in);
    net.output_bias = Vector::Zero(outputs);
    return net;
}

MlpNetwork MlpNetwork::identity(Index inputs, Index outputs) {
    MlpNetwork net;
    net.hidden.push_back({Matrix::Identity(inputs, inputs), Vector::Zero(inputs), Activation::Linear});
    net.output_weights = Matrix::Zero(outputs, inputs);
    net.output_bias = Vector::Zero(outputs);
    return net;
}

ForwardResult forward(const MlpNetwork &net, const Vector &input) {
    if (input.size() != net.input_size()) {
        throw DimensionError("network input has size " + std::to_string(input.size()) + ", expected " +
                             std::to_string(net.input_size()));
    }
    Matrix z = input;
    for (const auto &l : net.hidden) {
        Matrix pre = l.weights * z + l.bias;
        activate(l.activation, pre);
        z = std::move(pre);
    }
    ForwardResult r;
    r.hidden = z.col(0);
    r.output = net.output_weights * r.hidden + net.output_bias;
    return r;
}

Matrix hidden_map_columns(const MlpNetwork &net, const Matrix &inputs) {
    if (inputs.rows() != net.input_size()) throw DimensionError("regressor matrix row count mismatch");
    Matrix z = inputs;
    for (const auto &l : net.hidden) {
        Matrix pre = l.weights * z;
        pre.colwise() += l.bias;
        activate(l.activation, pre);
        z = std::move(pre);
    }
    return z;
}

Matrix forward_columns(const MlpNetwork &net, const Matrix &inputs) {
    Matrix out = net.output_weights * hidden_map_columns(net, inputs);
    out.colwise() += net.output_bias;
    return out;
}

Matrix hidden_jacobian(const MlpNetwork &net, const Vector &input) {
    if (input.size() != net.input_size()) throw DimensionError("network input size mismatch");
    Vector z = input;
    Matrix jac = Matrix::Identity(input.size(), input.size());
    for (const auto &l : net.hidden) {
        Matrix pre = l.weights * z + l.bias;
        activate(l.activation, pre);
        const Vector slope = activation_slope(l.activation, pre).col(0);
        jac = slope.asDiagonal() * (l.weights * jac);
        z = pre.col(0);
    }
    return jac;
}

double fit_cost(const MlpNetwork &net, const Matrix &inputs, const Matrix &targets) {
    return (targets - forward_columns(net, inputs)).squaredNorm();
}

Vector pack_parameters(const MlpNetwork &net) {
    Vector p(net.parameter_count());
    Index o = 0;
    auto put = [&](const auto &m) {
        p.segment(o, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
        o += m.size();
    };
    for (const auto &l : net.hidden) {
        put(l.weights);
        put(l.bias);
    }
    put(net.output_weights);
    put(net.output_bias);
    return p;
}

void unpack_parameters(MlpNetwork &net, const Vector &params) {
    if (params.size() != net.parameter_count()) throw DimensionError("parameter vector size mismatch");
    Index o = 0;
    auto get = [&](auto &m) {
        Eigen::Map<Vector>(m.data(), m.size()) = params.segment(o, m.size());
        o += m.size();
    };
    for (auto &l : net.hidden) {
        get(l.weights);
        get(l.bias);
    }
    get(net.output_weights);
    get(net.output_bias);
}

double loss_and_gradient(const MlpNetwork &net, const Matrix &inputs, const Matrix &targets, Vector *grad) {
    if (inputs.cols() != targets.cols()) throw DimensionError("inputs and targets differ in column count");
    if (targets.rows() != net.output_size()) throw DimensionError("target row count mismatch");
    std::vector<Matrix> acts;
    acts.reserve(net.hidden.size() + 1);
    acts.push_back(inputs);
    for (const auto &l : net.hidden) {
        Matrix pre = l.weights * acts.back();
        pre.colwise() += l.bias;
        activate(l.activation, pre);
        acts.push_back(std::move(pre));
    }
    Matrix residual = net.output_weights * acts.back();
    residual.colwise() += net.output_bias;
    residual -= targets;
    const double loss = residual.squaredNorm();
    if (grad == nullptr) return loss;

    grad->resize(net.parameter_count());
    Index o = grad->size();
    auto put_back = [&](const Matrix &m) {
        o -= m.size();
        grad->segment(o, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    };
    Matrix delta = 2.0 * residual;
    put_back(delta.rowwise().sum());
    put_back(delta * acts.back().transpose());
    delta = net.output_weights.transpose() * delta;
    for (std::size_t i = net.hidden.size(); i-- > 0;) {
        const auto &l = net.hidden[i];
        delta = delta.cwiseProduct(activation_slope(l.activation, acts[i + 1]));
        put_back(delta.rowwise().sum());
        put_back(delta * acts[i].transpose());
        if (i > 0) delta = l.weights.transpose() * delta;
    }
    return loss;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || epochs < 0 || batch_size < 0 || report_every < 1) {
        throw ConfigError("training config needs a positive learning rate and non-negative counts");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
        throw ConfigError("Adam moment coefficients must lie in [0, 1) with epsilon > 0");
    }
}

TrainResult train_nls(MlpNetwork net, const Matrix &inputs, const Matrix &targets, const TrainConfig &cfg,
                      Index outputs_per_step) {
    cfg.validate();
    net.validate();
    if (inputs.cols() != targets.cols()) throw DimensionError("H and Y_f differ in column count");
    if (inputs.rows() != net.input_size() || targets.rows() != net.output_size()) {
        throw DimensionError("network dimensions do not match H / Y_f");
    }
    if (outputs_per_step < 1 || targets.rows() % outputs_per_step != 0) {
        throw DimensionError("target rows are not a multiple of the output channel count");
    }

    Matrix x = inputs;
    Matrix y = targets;
    Standardization in_std{Vector::Zero(x.rows()), Vector::Ones(x.rows())};
    Standardization out_std{Vector::Zero(y.rows()), Vector::Ones(y.rows())};
    if (cfg.normalize) {
        in_std = row_stats(inputs);
        out_std = channel_stats(targets, outputs_per_step);
        x = (inputs.colwise() - in_std.mean).array().colwise() / in_std.scale.array();
        y = (targets.colwise() - out_std.mean).array().colwise() / out_std.scale.array();
    }
    const Vector row_weight = out_std.scale.array().square();
    auto physical_loss = [&](const MlpNetwork &n) {
        Matrix r = forward_columns(n, x) - y;
        return (r.array().square().colwise() * row_weight.array()).sum();
    };

    const Index cols = x.cols();
    const Index batch = cfg.batch_size > 0 ? std::min(cfg.batch_size, cols) : (cols <= 2000 ? cols : 256);
    std::vector<Index> order(static_cast<std::size_t>(cols));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(cfg.seed);

    Vector params = pack_parameters(net);
    Vector m1 = Vector::Zero(params.size());
    Vector m2 = Vector::Zero(params.size());
    Vector grad;
    long step = 0;

    TrainResult result;
    result.history.push_back({0, physical_loss(net)});
    Matrix xb;
    Matrix yb;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (batch < cols) std::shuffle(order.begin(), order.end(), rng);
        for (Index start = 0; start < cols; start += batch) {
            const Index len = std::min(batch, cols - start);
            double loss = 0.0;
            if (len == cols) {
                loss = loss_and_gradient(net, x, y, &grad);
            } else {
                xb.resize(x.rows(), len);
                yb.resize(y.rows(), len);
                for (Index j = 0; j < len; ++j) {
                    xb.col(j) = x.col(order[static_cast<std::size_t>(start + j)]);
                    yb.col(j) = y.col(order[static_cast<std::size_t>(start + j)]);
                }
                loss = loss_and_gradient(net, xb, yb, &grad);
            }
            if (!std::isfinite(loss) || !grad.allFinite()) {
                throw TrainingError("training loss diverged at epoch " + std::to_string(epoch), epoch);
            }
            ++step;
            m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * grad;
            m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * grad.cwiseAbs2();
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            params.array() -= cfg.learning_rate * (m1.array() / c1) /
                              ((m2.array() / c2).sqrt() + cfg.epsilon);
            unpack_parameters(net, params);
        }
        if (epoch % cfg.report_every == 0 || epoch == cfg.epochs) {
            const double l = physical_loss(net);
            if (!std::isfinite(l)) throw TrainingError("training loss diverged at epoch " + std::to_string(epoch), epoch);
            result.history.push_back({epoch, l});
        }
    }

    if (cfg.normalize) {
        auto &first = net.hidden.front();
        const Vector inv = in_std.scale.cwiseInverse();
        first.bias -= first.weights * in_std.mean.cwiseProduct(inv);
        first.weights = first.weights * inv.asDiagonal();
        net.output_weights = out_std.scale.asDiagonal() * net.output_weights;
        net.output_bias = out_std.scale.cwiseProduct(net.output_bias) + out_std.mean;
        net.normalization = {true, in_std.mean, in_std.scale, out_std.mean, out_std.scale};
    }
    result.final_loss = fit_cost(net, inputs, targets);
    result.net = std::move(net);
    return result;
}

NeuralDataMatrix neural_data_matrix(const MlpNetwork &net, const Matrix &inputs, double tol) {
    NeuralDataMatrix out;
    out.hidden = hidden_map_columns(net, inputs);
    out.augmented.resize(out.hidden.rows() + 1, out.hidden.cols());
    out.augmented << out.hidden, Eigen::RowVectorXd::Ones(out.hidden.cols());
    const auto info = numerics::rank_info(out.augmented, tol);
    out.min_singular_value = info.min_singular_value;
    out.rank = info.rank;
    out.full_row_rank = info.full_row_rank;
    return out;
}

OutputLayer refit_output_layer(MlpNetwork &net, const NeuralDataMatrix &phi, const Matrix &targets, double tol) {
    if (targets.cols() != phi.augmented.cols()) throw DimensionError("Y_f and neural data matrix differ in columns");
    if (phi.hidden.rows() != net.hidden_size()) throw DimensionError("neural data matrix does not match the network");
    const Matrix wb = targets * numerics::pseudo_inverse(phi.augmented, tol);
    OutputLayer out{wb.leftCols(wb.cols() - 1), wb.col(wb.cols() - 1)};
    net.output_weights = out.weights;
    net.output_bias = out.bias;
    return out;
}

nlohmann::json to_json(const MlpNetwork &net) {
    nlohmann::json j;
    j["format"] = "ndeepc-mlp";
    j["version"] = 1;
    j["input_size"] = net.input_size();
    j["layers"] = nlohmann::json::array();
    for (const auto &l : net.hidden) {
        j["layers"].push_back(
            {{"activation", to_string(l.activation)}, {"weights", matrix_json(l.weights)}, {"bias", std_vector(l.bias)}});
    }
    j["output"] = {{"activation", "linear"},
                   {"weights", matrix_json(net.output_weights)},
                   {"bias", std_vector(net.output_bias)}};
    const auto &n = net.normalization;
    j["normalization"] = {{"enabled", n.enabled},
                          {"folded_into_weights", true},
                          {"input_mean", std_vector(n.input_mean)},
                          {"input_scale", std_vector(n.input_scale)},
                          {"output_mean", std_vector(n.output_mean)},
                          {"output_scale", std_vector(n.output_scale)}};
    return j;
}

MlpNetwork network_from_json(const nlohmann::json &j) {
    try {
        if (j.at("format").get<std::string>() != "ndeepc-mlp") throw IoError("not an ndeepc-mlp weight file");
        if (j.at("version").get<int>() != 1) throw IoError("unsupported weight file version");
        MlpNetwork net;
        for (const auto &l : j.at("layers")) {
            net.hidden.push_back({matrix_from_json(l.at("weights")), vector_from_json(l.at("bias")),
                                  activation_from_string(l.at("activation").get<std::string>())});
        }
        net.output_weights = matrix_from_json(j.at("output").at("weights"));
        net.output_bias = vector_from_json(j.at("output").at("bias"));
        if (j.contains("normalization")) {
            const auto &n = j["normalization"];
            net.normalization = {n.at("enabled").get<bool>(), vector_from_json(n.at("input_mean")),
                                 vector_from_json(n.at("input_scale")), vector_from_json(n.at("output_mean")),
                                 vector_from_json(n.at("output_scale"))};
        }
        net.validate();
        if (j.at("input_size").get<Index>() != net.input_size()) throw IoError("input_size does not match layers");
        return net;
    } catch (const nlohmann::json::exception &e) {
        throw IoError(std::string("malformed weight file: ") + e.what());
    }
}

void save_network(const std::filesystem::path &path, const MlpNetwork &net, const nlohmann::json &metadata) {
    auto j = to_json(net);
    j["metadata"] = metadata;
    std::ofstream os(path);
    if (!os) throw IoError("cannot write weight file '" + path.string() + "'");
    os << j.dump(1) << '\n';
}

MlpNetwork load_network(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open weight file '" + path.string() + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception &e) {
        throw IoError("weight file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return network_from_json(j);
}

}  // namespace ndeepc::mlp
