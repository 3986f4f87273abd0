#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ndeepc/csv.hpp"
#include "ndeepc/numerics.hpp"

namespace ndeepc::plant {

/// Damped pendulum driven by a torque, forward-Euler discretized.
struct PendulumParams {
    double mass = 1.0;       // kg
    double length = 1.0;     // m
    double gravity = 9.81;   // m/s^2
    double damping = 0.1;    // N s/m
    double sample_time = 0.033;  // s

    [[nodiscard]] double inertia() const { return mass * length * length / 3.0; }
    void validate() const;
};

struct PlantState {
    double angular_velocity = 0.0;  // rad/s
    double angle = 0.0;             // rad
};

PlantState pendulum_step(const PendulumParams &p, const PlantState &x, double torque);

/// Output map y = angle, plus Gaussian noise when noise_std > 0. The
/// generator is not touched when noise_std == 0.
double measure(const PlantState &x, double noise_std, std::mt19937_64 &rng);

/// Applies u(0), u(1), ... and returns y(1), y(2), ...: entry k is measured
/// after u(k) has been applied.
std::vector<double> open_loop_rollout(const PendulumParams &p, PlantState x0,
                                      std::span<const double> inputs, double noise_std = 0.0,
                                      std::uint64_t seed = 0);

/// Torque that holds the pendulum at rest at `angle`.
double equilibrium_torque(const PendulumParams &p, double angle);

/// Time-aligned record of an open-loop experiment: y[k] is measured at time
/// k, before u[k] is applied. y[0] is the output of x0.
struct Experiment {
    std::vector<double> u;
    std::vector<double> y;
};

Experiment record_experiment(const PendulumParams &p, PlantState x0, std::span<const double> inputs,
                             double noise_std = 0.0, std::uint64_t seed = 0);

/// Columns k,u,y.
csv::Table experiment_table(const Experiment &e);

/// Discrete-time plant as seen by the closed loop.
class Plant {
public:
    virtual ~Plant() = default;

    [[nodiscard]] virtual Index num_inputs() const = 0;
    [[nodiscard]] virtual Index num_outputs() const = 0;

    /// Output at the current time (draws measurement noise if configured).
    virtual Vector measure() = 0;
    /// Advances the state by one sample under input u.
    virtual void apply(const Vector &u) = 0;
    /// Input that keeps the plant at rest with output y, if known.
    [[nodiscard]] virtual std::optional<Vector> equilibrium_input(const Vector &y) const {
        (void)y;
        return std::nullopt;
    }
};

class PendulumPlant final : public Plant {
public:
    PendulumPlant(PendulumParams params, PlantState x0, double noise_std = 0.0, std::uint64_t seed = 0);

    [[nodiscard]] Index num_inputs() const override { return 1; }
    [[nodiscard]] Index num_outputs() const override { return 1; }
    Vector measure() override;
    void apply(const Vector &u) override;
    [[nodiscard]] std::optional<Vector> equilibrium_input(const Vector &y) const override;

    [[nodiscard]] const PlantState &state() const { return state_; }
    [[nodiscard]] const PendulumParams &params() const { return params_; }

private:
    PendulumParams params_;
    PlantState state_;
    double noise_std_;
    std::mt19937_64 rng_;
};

}  // namespace ndeepc::plant
