#include "ndeepc/plant.hpp"

#include <cmath>

#include "ndeepc/error.hpp"

namespace ndeepc::plant {

void PendulumParams::validate() const {
    if (!(mass > 0.0 && length > 0.0 && gravity > 0.0 && damping > 0.0 && sample_time > 0.0)) {
        throw ConfigError("pendulum parameters must all be positive");
    }
}

PlantState pendulum_step(const PendulumParams &p, const PlantState &x, double torque) {
    const double j = p.inertia();
    const double ts = p.sample_time;
    PlantState next;
    next.angular_velocity = (1.0 - p.damping * ts / j) * x.angular_velocity + ts / j * torque -
                            p.mass * p.length * p.gravity * ts / (2.0 * j) * std::sin(x.angle);
    next.angle = ts * x.angular_velocity + x.angle;
    return next;
}

double measure(const PlantState &x, double noise_std, std::mt19937_64 &rng) {
    if (noise_std < 0.0) throw ConfigError("noise standard deviation must be >= 0");
    if (noise_std == 0.0) return x.angle;
    std::normal_distribution<double> noise(0.0, noise_std);
    return x.angle + noise(rng);
}

std::vector<double> open_loop_rollout(const PendulumParams &p, PlantState x0,
                                      std::span<const double> inputs, double noise_std,
                                      std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<double> y;
    y.reserve(inputs.size());
    PlantState x = x0;
    for (double u : inputs) {
        x = pendulum_step(p, x, u);
        y.push_back(measure(x, noise_std, rng));
    }
    return y;
}

double equilibrium_torque(const PendulumParams &p, double angle) {
    return 0.5 * p.mass * p.length * p.gravity * std::sin(angle);
}

Experiment record_experiment(const PendulumParams &p, PlantState x0, std::span<const double> inputs,
                             double noise_std, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Experiment e;
    e.u.assign(inputs.begin(), inputs.end());
    e.y.reserve(inputs.size());
    PlantState x = x0;
    for (double u : inputs) {
        e.y.push_back(measure(x, noise_std, rng));
        x = pendulum_step(p, x, u);
    }
    return e;
}

csv::Table experiment_table(const Experiment &e) {
    csv::Table t;
    std::vector<double> k(e.u.size());
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<double>(i);
    t.add_column("k", std::move(k));
    t.add_column("u", e.u);
    t.add_column("y", e.y);
    return t;
}

PendulumPlant::PendulumPlant(PendulumParams params, PlantState x0, double noise_std, std::uint64_t seed)
    : params_(params), state_(x0), noise_std_(noise_std), rng_(seed) {
    params_.validate();
    if (noise_std_ < 0.0) throw ConfigError("noise standard deviation must be >= 0");
}

Vector PendulumPlant::measure() { return Vector::Constant(1, plant::measure(state_, noise_std_, rng_)); }

void PendulumPlant::apply(const Vector &u) {
    if (u.size() != 1) throw DimensionError("pendulum takes a single torque input");
    state_ = pendulum_step(params_, state_, u(0));
}

std::optional<Vector> PendulumPlant::equilibrium_input(const Vector &y) const {
    if (y.size() != 1) return std::nullopt;
    return Vector::Constant(1, equilibrium_torque(params_, y(0)));
}

}  // namespace ndeepc::plant
