#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ndeepc/controllers.hpp"
#include "ndeepc/csv.hpp"
#include "ndeepc/plant.hpp"
#include "ndeepc/signals.hpp"

namespace ndeepc::harness {

struct RunMetadata {
    std::string formulation;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

/// Row k holds y(k) measured at time k, the input u(k) applied afterwards,
/// and the references r(k), u_r(k). Warmup rows have solve_seconds == 0.
struct ClosedLoopLog {
    Matrix u;      // m x T_sim
    Matrix y;      // p x T_sim
    Matrix r;      // p x T_sim
    Matrix u_ref;  // m x T_sim
    std::vector<double> solve_seconds;
    std::vector<bool> converged;
    std::vector<bool> warmup;
    RunMetadata metadata;

    [[nodiscard]] Index steps() const { return u.cols(); }
};

/// References over the whole run; both need at least T_sim + N columns.
struct ReferenceTrajectory {
    Matrix y;  // p x length
    Matrix u;  // m x length
};

/// Scalar reference; the input reference is the plant's equilibrium input at
/// each reference value, or zero when the plant does not provide one.
ReferenceTrajectory make_reference(const plant::Plant &plant, const std::vector<double> &r);

/// How the references enter the horizon at time k. Hold uses the current
/// setpoint (r(k), u_r(k)) at every stage; Preview uses r(k+1..k+N) and
/// u_r(k..k+N-1), letting the controller anticipate reference changes.
enum class ReferencePreview { Hold, Preview };

struct WarmupPolicy {
    /// Steps run with `input` before the controller starts; at least T_ini.
    Index steps = 0;  // 0 selects T_ini
    double input = 0.0;
};

struct LoopOptions {
    WarmupPolicy warmup;
    ReferencePreview preview = ReferencePreview::Hold;
};

/// Observer called after every step with the step index and solver result
/// (nullptr during warmup).
using StepObserver = std::function<void(Index, const controllers::ControlStepResult *)>;

ClosedLoopLog run_closed_loop(plant::Plant &plant, controllers::Controller &controller,
                              const ReferenceTrajectory &ref, Index t_sim, const LoopOptions &options = {},
                              const StepObserver &observer = {});

/// Header k,u,y,r,u_ref,solve_s,converged (suffixes 0,1,.. for vector channels).
csv::Table log_table(const ClosedLoopLog &log);
ClosedLoopLog log_from_table(const csv::Table &table);

struct MetricsReport {
    double j_ise = 0.0;    // sum |y - r|_2^2
    double j_iae = 0.0;    // sum |y - r|_1
    double j_u = 0.0;      // sum |u|_1
    double j_track = 0.0;  // sum |y - r|_Q^2 + |u - u_r|_R^2
    double mean_solve_seconds = 0.0;
    double max_solve_seconds = 0.0;
    double convergence_rate = 1.0;  // over controlled (non-warmup) steps
};

/// Sums run over every row of the log.
MetricsReport compute_metrics(const ClosedLoopLog &log, const Matrix &q, const Matrix &r);

nlohmann::json to_json(const MetricsReport &m);

/// Largest |y - r| over the last `tail_fraction` of every complete dwell of a
/// step reference within the log.
double dwell_tail_error(const ClosedLoopLog &log, const signals::ReferenceSpec &spec, double tail_fraction = 0.3);

struct FormulationRun {
    controllers::Formulation formulation;
    ClosedLoopLog log;
    MetricsReport metrics;
};

struct Comparison {
    std::vector<FormulationRun> runs;
};

using PlantFactory = std::function<std::unique_ptr<plant::Plant>()>;

/// Runs each formulation on the same context, plant and reference, one after
/// the other so that solve times are not disturbed by each other.
Comparison compare_formulations(const std::shared_ptr<const controllers::DeepcContext> &ctx,
                                const controllers::ControlConfig &base,
                                const std::vector<controllers::Formulation> &formulations,
                                const PlantFactory &make_plant, const std::vector<double> &reference, Index t_sim,
                                const RunMetadata &metadata = {}, const LoopOptions &options = {});

/// Metrics per formulation plus deltas relative to the first run.
nlohmann::json comparison_report(const Comparison &c);
void print_comparison(std::ostream &os, const Comparison &c);

}  // namespace ndeepc::harness
