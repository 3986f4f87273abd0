#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ndeepc/controllers.hpp"
#include "ndeepc/mlp.hpp"
#include "ndeepc/plant.hpp"
#include "ndeepc/signals.hpp"

namespace ndeepc::app {

inline constexpr const char *kConfigFormat = "ndeepc-experiment";
inline constexpr int kConfigVersion = 1;

enum class Architecture { Mlp, LinearIdentity };

/// Everything an experiment needs, read from one JSON file. Missing keys take
/// the defaults below; unknown keys are rejected.
struct ExperimentConfig {
    plant::PendulumParams plant;
    double initial_angle = 0.0;
    double initial_velocity = 0.0;
    double measurement_noise = 0.0;
    std::uint64_t noise_seed = 7;

    signals::MultisineSpec excitation;

    Index t_ini = 5;
    Index horizon = 10;
    /// Prepend T_ini samples of the rest state before the recording, since
    /// the experiment starts at rest at the origin.
    bool rest_history = true;

    Architecture architecture = Architecture::Mlp;
    std::vector<Index> hidden_widths{30};
    std::vector<mlp::Activation> activations{mlp::Activation::Tanh};
    std::uint64_t init_seed = 1;
    mlp::TrainConfig training;

    controllers::ControlConfig control;
    /// Run every formulation in `compare_formulations` instead of one.
    bool compare = false;
    std::vector<controllers::Formulation> compare_formulations{
        controllers::Formulation::P1, controllers::Formulation::P2, controllers::Formulation::P3};

    signals::ReferenceSpec reference;
    /// Show the controller r(k+1..k+N) instead of holding the setpoint r(k).
    bool reference_preview = false;
    Index t_sim = 600;

    std::filesystem::path output_dir = "out";

    [[nodiscard]] hankel::Dims dims() const { return {1, 1, t_ini, horizon}; }
    /// Hankel columns the recorded data will yield.
    [[nodiscard]] Index hankel_columns() const;

    void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json &j);
nlohmann::json to_json(const ExperimentConfig &cfg);

ExperimentConfig load_config(const std::filesystem::path &path);

/// FNV-1a 64-bit hash of the canonical (fully defaulted, key-sorted) JSON form,
/// as 16 hex digits.
std::string config_hash(const ExperimentConfig &cfg);

}  // namespace ndeepc::app
