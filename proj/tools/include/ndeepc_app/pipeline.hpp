#pragma once

#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "ndeepc/hankel.hpp"
#include "ndeepc/harness.hpp"
#include "ndeepc/mlp.hpp"
#include "ndeepc/plant.hpp"
#include "ndeepc/predictors.hpp"
#include "ndeepc_app/config.hpp"

namespace ndeepc::app {

/// Open-loop identification experiment: multisine torque applied to the
/// pendulum from its configured initial state.
plant::Experiment generate_data(const ExperimentConfig &cfg);

/// Hankel matrices of a recorded experiment, with the rest-state prefix when
/// the config asks for it.
hankel::HankelSet build_dataset(const ExperimentConfig &cfg, const hankel::TrajectoryData &data);

struct TrainedModel {
    mlp::MlpNetwork net;  // output layer is the least-squares refit
    std::vector<mlp::LossRecord> history;
    double trained_cost = 0.0;  // |Y_f - net(H)|_F^2 after gradient training
    double refit_cost = 0.0;    // same after the output-layer refit
};

/// Gradient training followed by the output-layer refit. The linear-identity
/// architecture skips training.
TrainedModel train_model(const ExperimentConfig &cfg, const hankel::HankelSet &h);

struct CertificateSummary {
    predictors::ResidualMatrix residual;
    predictors::EquivalenceCertificate certificate;
    bool available = false;  // false when the augmented matrix is rank deficient
    nlohmann::json report;
};

CertificateSummary certify(const predictors::DeepcContext &ctx);

std::unique_ptr<plant::PendulumPlant> make_plant(const ExperimentConfig &cfg);

/// One closed-loop run with cfg.control, or every formulation when cfg.compare.
harness::Comparison simulate(const ExperimentConfig &cfg, const std::shared_ptr<const predictors::DeepcContext> &ctx,
                             const std::string &config_hash = {});

}  // namespace ndeepc::app
