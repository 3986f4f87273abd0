#include "ndeepc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>

#include "ndeepc/error.hpp"

namespace ndeepc::harness {

ReferenceTrajectory make_reference(const plant::Plant &plant, const std::vector<double> &r) {
    if (plant.num_outputs() != 1) throw DimensionError("scalar reference needs a single-output plant");
    const Index len = static_cast<Index>(r.size());
    ReferenceTrajectory ref;
    ref.y = Eigen::Map<const Eigen::RowVectorXd>(r.data(), len);
    ref.u = Matrix::Zero(plant.num_inputs(), len);
    for (Index k = 0; k < len; ++k) {
        if (auto ue = plant.equilibrium_input(ref.y.col(k))) ref.u.col(k) = *ue;
    }
    return ref;
}

namespace {

Vector window(const Matrix &m, Index begin, Index len) {
    const Matrix block = m.middleCols(begin, len);
    return Eigen::Map<const Vector>(block.data(), block.size());
}

}  // namespace

ClosedLoopLog run_closed_loop(plant::Plant &plant, controllers::Controller &controller,
                              const ReferenceTrajectory &ref, Index t_sim, const LoopOptions &options,
                              const StepObserver &observer) {
    const auto &warmup = options.warmup;
    const auto &d = controller.context().dims;
    if (plant.num_inputs() != d.inputs || plant.num_outputs() != d.outputs)
        throw DimensionError("plant channels do not match the controller");
    if (t_sim < 1) throw ConfigError("T_sim must be positive");
    if (ref.y.rows() != d.outputs || ref.u.rows() != d.inputs || ref.y.cols() != ref.u.cols())
        throw DimensionError("reference channels do not match the controller");
    if (ref.y.cols() < t_sim + d.horizon) {
        throw ConfigError("reference has " + std::to_string(ref.y.cols()) + " samples, needs T_sim + N = " +
                          std::to_string(t_sim + d.horizon));
    }
    const Index warm = warmup.steps == 0 ? d.t_ini : warmup.steps;
    if (warm < d.t_ini) throw ConfigError("warmup must cover at least T_ini steps");

    ClosedLoopLog log;
    log.u = Matrix::Zero(d.inputs, t_sim);
    log.y = Matrix::Zero(d.outputs, t_sim);
    log.r = ref.y.leftCols(t_sim);
    log.u_ref = ref.u.leftCols(t_sim);
    log.solve_seconds.assign(t_sim, 0.0);
    log.converged.assign(t_sim, true);
    log.warmup.assign(t_sim, false);
    log.metadata.formulation = controllers::to_string(controller.config().formulation);
    log.metadata.lambda = controller.config().lambda;

    controller.reset();
    for (Index k = 0; k < t_sim; ++k) {
        log.y.col(k) = plant.measure();
        if (k < warm) {
            log.u.col(k).setConstant(warmup.input);
            log.warmup[k] = true;
            if (observer) observer(k, nullptr);
        } else {
            controllers::StepInput in;
            in.u_ini = window(log.u, k - d.t_ini, d.t_ini);
            in.y_ini = window(log.y, k - d.t_ini + 1, d.t_ini);
            if (options.preview == ReferencePreview::Preview) {
                in.y_ref = window(ref.y, k + 1, d.horizon);
                in.u_ref = window(ref.u, k, d.horizon);
            } else {
                in.y_ref = ref.y.col(k).replicate(d.horizon, 1);
                in.u_ref = ref.u.col(k).replicate(d.horizon, 1);
            }
            const auto res = controller.step(in);
            log.u.col(k) = res.u_applied;
            log.solve_seconds[k] = res.diagnostics.solve_seconds;
            log.converged[k] = res.diagnostics.converged;
            if (observer) observer(k, &res);
        }
        plant.apply(log.u.col(k));
    }
    return log;
}

namespace {

std::vector<std::string> channel_names(const std::string &base, Index n) {
    if (n == 1) return {base};
    std::vector<std::string> out;
    for (Index i = 0; i < n; ++i) out.push_back(base + std::to_string(i));
    return out;
}

void add_rows(csv::Table &t, const std::string &base, const Matrix &m) {
    const auto names = channel_names(base, m.rows());
    for (Index i = 0; i < m.rows(); ++i) {
        std::vector<double> col(m.cols());
        for (Index k = 0; k < m.cols(); ++k) col[k] = m(i, k);
        t.add_column(names[i], std::move(col));
    }
}

Matrix read_rows(const csv::Table &t, const std::string &base) {
    const bool single = std::find(t.header.begin(), t.header.end(), base) != t.header.end();
    Index n = 0;
    if (single) {
        n = 1;
    } else {
        while (std::find(t.header.begin(), t.header.end(), base + std::to_string(n)) != t.header.end()) ++n;
    }
    if (n == 0) throw IoError("log is missing column '" + base + "'");
    const auto names = channel_names(base, n);
    Matrix m(n, static_cast<Index>(t.rows()));
    for (Index i = 0; i < n; ++i) {
        const auto col = t.column(names[i]);
        for (Index k = 0; k < m.cols(); ++k) m(i, k) = col[k];
    }
    return m;
}

}  // namespace

csv::Table log_table(const ClosedLoopLog &log) {
    csv::Table t;
    const Index n = log.steps();
    std::vector<double> k(n);
    for (Index i = 0; i < n; ++i) k[i] = static_cast<double>(i);
    t.add_column("k", std::move(k));
    add_rows(t, "u", log.u);
    add_rows(t, "y", log.y);
    add_rows(t, "r", log.r);
    add_rows(t, "u_ref", log.u_ref);
    t.add_column("solve_s", log.solve_seconds);
    std::vector<double> conv(n);
    for (Index i = 0; i < n; ++i) conv[i] = log.converged[i] ? 1.0 : 0.0;
    t.add_column("converged", std::move(conv));
    return t;
}

ClosedLoopLog log_from_table(const csv::Table &table) {
    ClosedLoopLog log;
    const auto k = table.column("k");
    for (std::size_t i = 1; i < k.size(); ++i) {
        if (!(k[i] > k[i - 1])) throw IoError("log timestamps are not increasing");
    }
    log.u = read_rows(table, "u");
    log.y = read_rows(table, "y");
    log.r = read_rows(table, "r");
    log.u_ref = read_rows(table, "u_ref");
    const auto s = table.column("solve_s");
    const auto c = table.column("converged");
    log.solve_seconds.assign(s.begin(), s.end());
    log.converged.resize(c.size());
    log.warmup.resize(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        log.converged[i] = c[i] != 0.0;
        log.warmup[i] = s[i] == 0.0;
    }
    return log;
}

MetricsReport compute_metrics(const ClosedLoopLog &log, const Matrix &q, const Matrix &r) {
    if (q.rows() != log.y.rows() || r.rows() != log.u.rows()) throw DimensionError("weights do not match the log");
    MetricsReport m;
    const Matrix ey = log.y - log.r;
    const Matrix eu = log.u - log.u_ref;
    m.j_ise = ey.squaredNorm();
    m.j_iae = ey.cwiseAbs().sum();
    m.j_u = log.u.cwiseAbs().sum();
    m.j_track = (ey.transpose() * q * ey).trace() + (eu.transpose() * r * eu).trace();

    Index controlled = 0, converged = 0;
    double total = 0.0;
    for (std::size_t k = 0; k < log.solve_seconds.size(); ++k) {
        if (!log.warmup.empty() && log.warmup[k]) continue;
        ++controlled;
        converged += log.converged[k] ? 1 : 0;
        total += log.solve_seconds[k];
        m.max_solve_seconds = std::max(m.max_solve_seconds, log.solve_seconds[k]);
    }
    if (controlled > 0) {
        m.mean_solve_seconds = total / static_cast<double>(controlled);
        m.convergence_rate = static_cast<double>(converged) / static_cast<double>(controlled);
    }
    return m;
}

nlohmann::json to_json(const MetricsReport &m) {
    return {{"J_ISE", m.j_ise},
            {"J_IAE", m.j_iae},
            {"J_u", m.j_u},
            {"J_track", m.j_track},
            {"mean_solve_s", m.mean_solve_seconds},
            {"max_solve_s", m.max_solve_seconds},
            {"convergence_rate", m.convergence_rate}};
}

double dwell_tail_error(const ClosedLoopLog &log, const signals::ReferenceSpec &spec, double tail_fraction) {
    if (spec.kind != signals::ReferenceKind::Steps) throw ConfigError("dwell error needs a step reference");
    if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) throw ConfigError("tail fraction must be in (0, 1]");
    spec.validate();
    double worst = 0.0;
    Index begin = 0;
    for (std::size_t i = 0;; i = (i + 1) % spec.dwell.size()) {
        const Index end = begin + spec.dwell[i];
        if (end > log.steps()) break;
        const auto tail = static_cast<Index>(std::ceil(tail_fraction * spec.dwell[i]));
        for (Index k = end - tail; k < end; ++k) worst = std::max(worst, (log.y.col(k) - log.r.col(k)).lpNorm<Eigen::Infinity>());
        begin = end;
    }
    return worst;
}

Comparison compare_formulations(const std::shared_ptr<const controllers::DeepcContext> &ctx,
                                const controllers::ControlConfig &base,
                                const std::vector<controllers::Formulation> &formulations,
                                const PlantFactory &make_plant, const std::vector<double> &reference, Index t_sim,
                                const RunMetadata &metadata, const LoopOptions &options) {
    Comparison c;
    for (const auto f : formulations) {
        auto cfg = base;
        cfg.formulation = f;
        controllers::Controller controller(ctx, cfg);
        auto plant = make_plant();
        const auto ref = make_reference(*plant, reference);
        FormulationRun run{f, run_closed_loop(*plant, controller, ref, t_sim, options), {}};
        run.log.metadata.seed = metadata.seed;
        run.log.metadata.config_hash = metadata.config_hash;
        run.metrics = compute_metrics(run.log, cfg.output_weight, cfg.input_weight);
        c.runs.push_back(std::move(run));
    }
    return c;
}

namespace {

double relative_delta(double value, double base) {
    return base == 0.0 ? (value == 0.0 ? 0.0 : INFINITY) : (value - base) / std::abs(base);
}

}  // namespace

nlohmann::json comparison_report(const Comparison &c) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto &run : c.runs) {
        auto row = to_json(run.metrics);
        row["formulation"] = controllers::to_string(run.formulation);
        if (!c.runs.empty()) {
            const auto &b = c.runs.front().metrics;
            row["relative_to"] = controllers::to_string(c.runs.front().formulation);
            row["delta_J_ISE"] = relative_delta(run.metrics.j_ise, b.j_ise);
            row["delta_J_IAE"] = relative_delta(run.metrics.j_iae, b.j_iae);
            row["delta_J_u"] = relative_delta(run.metrics.j_u, b.j_u);
            row["delta_J_track"] = relative_delta(run.metrics.j_track, b.j_track);
            row["delta_mean_solve_s"] = relative_delta(run.metrics.mean_solve_seconds, b.mean_solve_seconds);
        }
        rows.push_back(std::move(row));
    }
    return {{"runs", rows}};
}

void print_comparison(std::ostream &os, const Comparison &c) {
    const auto flags = os.flags();
    os << std::left << std::setw(13) << "formulation" << std::right << std::setw(14) << "J_ISE" << std::setw(14)
       << "J_IAE" << std::setw(14) << "J_u" << std::setw(14) << "J_track" << std::setw(14) << "mean_solve_s"
       << std::setw(14) << "max_solve_s" << std::setw(10) << "conv" << '\n';
    for (const auto &run : c.runs) {
        const auto &m = run.metrics;
        os << std::left << std::setw(13) << controllers::to_string(run.formulation) << std::right << std::setprecision(6)
           << std::setw(14) << m.j_ise << std::setw(14) << m.j_iae << std::setw(14) << m.j_u << std::setw(14)
           << m.j_track << std::setw(14) << m.mean_solve_seconds << std::setw(14) << m.max_solve_seconds
           << std::setw(10) << m.convergence_rate << '\n';
    }
    os.flags(flags);
}

}  // namespace ndeepc::harness
