#include "ndeepc_app/pipeline.hpp"

#include "ndeepc/error.hpp"
#include "ndeepc/signals.hpp"

namespace ndeepc::app {

plant::Experiment generate_data(const ExperimentConfig &cfg) {
    const auto u = signals::multisine(cfg.excitation);
    return plant::record_experiment(cfg.plant, {cfg.initial_velocity, cfg.initial_angle}, u, cfg.measurement_noise,
                                    cfg.noise_seed);
}

hankel::HankelSet build_dataset(const ExperimentConfig &cfg, const hankel::TrajectoryData &data) {
    data.validate();
    if (!cfg.rest_history) return hankel::build_hankel(data, cfg.t_ini, cfg.horizon);
    const Vector y0 = Vector::Constant(data.outputs(), cfg.initial_angle);
    const Vector u0 = Vector::Constant(data.inputs(), plant::equilibrium_torque(cfg.plant, cfg.initial_angle));
    return hankel::build_hankel(hankel::prepend_rest_history(data, cfg.t_ini, u0, y0), cfg.t_ini, cfg.horizon);
}

TrainedModel train_model(const ExperimentConfig &cfg, const hankel::HankelSet &h) {
    TrainedModel m;
    const Index q = h.dims.regressor_size();
    const Index pn = h.dims.prediction_size();
    if (cfg.architecture == Architecture::LinearIdentity) {
        m.net = mlp::MlpNetwork::identity(q, pn);
        m.trained_cost = mlp::fit_cost(m.net, h.regressor, h.y_future);
    } else {
        auto net = mlp::MlpNetwork::random(q, cfg.hidden_widths, cfg.activations, pn, cfg.init_seed);
        auto res = mlp::train_nls(std::move(net), h.regressor, h.y_future, cfg.training, h.dims.outputs);
        m.net = std::move(res.net);
        m.history = std::move(res.history);
        m.trained_cost = res.final_loss;
    }
    const auto phi = mlp::neural_data_matrix(m.net, h.regressor);
    mlp::refit_output_layer(m.net, phi, h.y_future);
    m.refit_cost = mlp::fit_cost(m.net, h.regressor, h.y_future);
    return m;
}

CertificateSummary certify(const predictors::DeepcContext &ctx) {
    CertificateSummary s;
    s.residual = predictors::residual_matrix(ctx, ctx.net.output_weights, ctx.net.output_bias);
    if (ctx.full_row_rank) {
        s.certificate = predictors::equivalence_certificate(ctx, s.residual);
        s.available = true;
        s.report = predictors::certificate_report(ctx, s.residual, s.certificate);
    } else {
        s.report = {{"hidden_rows", ctx.hidden_data.rows()},
                    {"hidden_cols", ctx.hidden_data.cols()},
                    {"augmented_min_singular_value", ctx.min_singular_value},
                    {"augmented_rank", ctx.rank},
                    {"augmented_full_row_rank", false},
                    {"residual_frobenius", s.residual.frobenius},
                    {"certificate", nullptr},
                    {"warning", "augmented neural data matrix is rank deficient; the certificate does not apply"}};
    }
    return s;
}

std::unique_ptr<plant::PendulumPlant> make_plant(const ExperimentConfig &cfg) {
    return std::make_unique<plant::PendulumPlant>(cfg.plant, plant::PlantState{cfg.initial_velocity, cfg.initial_angle},
                                                  cfg.measurement_noise, cfg.noise_seed + 1);
}

harness::Comparison simulate(const ExperimentConfig &cfg, const std::shared_ptr<const predictors::DeepcContext> &ctx,
                             const std::string &config_hash) {
    std::vector<controllers::Formulation> list{cfg.control.formulation};
    if (cfg.compare) list = cfg.compare_formulations;
    const auto reference = signals::reference(cfg.reference);
    harness::RunMetadata meta;
    meta.seed = cfg.excitation.seed;
    meta.config_hash = config_hash;
    harness::LoopOptions opts;
    opts.preview = cfg.reference_preview ? harness::ReferencePreview::Preview : harness::ReferencePreview::Hold;
    return harness::compare_formulations(
        ctx, cfg.control, list, [&] { return std::unique_ptr<plant::Plant>(make_plant(cfg)); }, reference, cfg.t_sim,
        meta, opts);
}

}  // namespace ndeepc::app
