#include "ndeepc_app/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>

#include <CLI11.hpp>

#include "ndeepc/error.hpp"
#include "ndeepc/harness.hpp"
#include "ndeepc_app/pipeline.hpp"

namespace ndeepc::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_json(const fs::path &path, const json &j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << j.dump(2) << '\n';
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

void ensure_dir(const fs::path &dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

fs::path resolve(const fs::path &given, const fs::path &out, const char *fallback) {
    const fs::path p = given.empty() ? out / fallback : given;
    if (!fs::exists(p)) throw IoError("input file '" + p.string() + "' does not exist");
    return p;
}

hankel::HankelSet load_dataset(const ExperimentConfig &cfg, const fs::path &path) {
    const auto data = hankel::trajectory_from_table(csv::read_file(path));
    return build_dataset(cfg, data);
}

std::shared_ptr<const predictors::DeepcContext> load_context(const ExperimentConfig &cfg, const fs::path &out,
                                                             const CommandInputs &in, bool null_basis) {
    const auto h = load_dataset(cfg, resolve(in.data, out, "data.csv"));
    const auto net = mlp::load_network(resolve(in.weights, out, "weights.json"));
    predictors::ContextOptions opts;
    opts.with_null_basis = null_basis;
    return std::make_shared<const predictors::DeepcContext>(predictors::prepare_context(net, h, opts));
}

}  // namespace

Manifest::Manifest(fs::path out_dir, std::string config_hash, double sample_time) : out_(std::move(out_dir)) {
    const auto path = out_ / "manifest.json";
    if (fs::exists(path)) {
        std::ifstream is(path);
        try {
            is >> doc_;
        } catch (const json::exception &) {
            doc_ = json::object();
        }
        if (doc_.value("config_hash", "") != config_hash) doc_ = json::object();
    }
    if (!doc_.is_object()) doc_ = json::object();
    doc_["format"] = "ndeepc-manifest";
    doc_["version"] = 1;
    doc_["config_hash"] = config_hash;
    doc_["sample_time"] = sample_time;
    if (!doc_.contains("artifacts")) doc_["artifacts"] = json::object();
}

void Manifest::add(const std::string &name, const fs::path &path) {
    doc_["artifacts"][name] = fs::relative(path, out_).generic_string();
}

void Manifest::write(const std::string &command) const {
    auto doc = doc_;
    doc["last_command"] = command;
    write_json(out_ / "manifest.json", doc);
}

void cmd_generate(const ExperimentConfig &cfg, const fs::path &out, std::ostream &log) {
    ensure_dir(out);
    const auto hash = config_hash(cfg);
    const auto e = generate_data(cfg);
    const auto path = out / "data.csv";
    csv::write_file(path, plant::experiment_table(e));

    const auto [umin, umax] = std::minmax_element(e.u.begin(), e.u.end());
    const auto [ymin, ymax] = std::minmax_element(e.y.begin(), e.y.end());
    log << "samples: " << e.u.size() << '\n'
        << "u range: [" << *umin << ", " << *umax << "]\n"
        << "y range: [" << *ymin << ", " << *ymax << "]\n"
        << "wrote " << path.string() << '\n';

    Manifest m(out, hash, cfg.plant.sample_time);
    m.add("data", path);
    m.write("generate");
}

void cmd_train(const ExperimentConfig &cfg, const fs::path &out, const CommandInputs &in, std::ostream &log) {
    ensure_dir(out);
    const auto hash = config_hash(cfg);
    const auto h = load_dataset(cfg, resolve(in.data, out, "data.csv"));
    log << "H: " << h.regressor.rows() << " x " << h.regressor.cols() << ", Y_f: " << h.y_future.rows() << " x "
        << h.y_future.cols() << '\n';
    if (!h.meets_column_condition()) {
        throw ConfigError("data yields T = " + std::to_string(h.columns()) + " Hankel columns, fewer than " +
                          std::to_string(h.dims.regressor_size()));
    }

    const auto model = train_model(cfg, h);
    const predictors::DeepcContext ctx = predictors::prepare_context(model.net, h);
    log << "Phi_HL: " << ctx.hidden_data.rows() << " x " << ctx.hidden_data.cols() << '\n'
        << std::setprecision(6) << "fit cost after training: " << model.trained_cost << '\n'
        << "fit cost after refit:    " << model.refit_cost << '\n'
        << "augmented min singular value: " << ctx.min_singular_value << (ctx.full_row_rank ? "" : " (rank deficient)")
        << '\n';
    if (!ctx.full_row_rank) log << "warning: augmented neural data matrix has rank " << ctx.rank << '\n';

    const auto cert = certify(ctx);
    auto report = cert.report;
    report["fit_cost_trained"] = model.trained_cost;
    report["fit_cost_refit"] = model.refit_cost;
    report["config_hash"] = hash;
    if (cert.available) {
        log << "residual |E|_F: " << cert.residual.frobenius << '\n'
            << "certificate: " << cert.certificate.value << (cert.certificate.equivalent ? " (equivalent)" : "")
            << '\n';
    }

    const auto weights = out / "weights.json";
    json meta = {{"config_hash", hash},
                 {"t_ini", cfg.t_ini},
                 {"horizon", cfg.horizon},
                 {"hankel_columns", h.columns()},
                 {"fit_cost_trained", model.trained_cost},
                 {"fit_cost_refit", model.refit_cost}};
    mlp::save_network(weights, model.net, meta);
    const auto cert_path = out / "certificate.json";
    write_json(cert_path, report);

    csv::Table loss;
    std::vector<double> epochs, values;
    for (const auto &r : model.history) {
        epochs.push_back(r.epoch);
        values.push_back(r.loss);
    }
    loss.add_column("epoch", std::move(epochs));
    loss.add_column("loss", std::move(values));
    const auto loss_path = out / "training_loss.csv";
    csv::write_file(loss_path, loss);

    log << "wrote " << weights.string() << '\n';
    Manifest m(out, hash, cfg.plant.sample_time);
    m.add("weights", weights);
    m.add("certificate", cert_path);
    m.add("training_loss", loss_path);
    m.write("train");
}

void cmd_simulate(const ExperimentConfig &cfg, const fs::path &out, const CommandInputs &in, std::ostream &log) {
    ensure_dir(out);
    const auto hash = config_hash(cfg);
    const auto ctx = load_context(cfg, out, in, false);
    const auto cmp = simulate(cfg, ctx, hash);

    Manifest m(out, hash, cfg.plant.sample_time);
    for (const auto &run : cmp.runs) {
        const auto name = controllers::to_string(run.formulation);
        const auto log_path = out / ("closed_loop_" + name + ".csv");
        csv::write_file(log_path, harness::log_table(run.log));
        auto metrics = harness::to_json(run.metrics);
        metrics["formulation"] = name;
        metrics["lambda"] = cfg.control.lambda;
        metrics["config_hash"] = hash;
        const auto metrics_path = out / ("metrics_" + name + ".json");
        write_json(metrics_path, metrics);
        m.add("closed_loop_" + name, log_path);
        m.add("metrics_" + name, metrics_path);
    }
    if (cfg.compare) {
        auto report = harness::comparison_report(cmp);
        report["config_hash"] = hash;
        const auto path = out / "compare.json";
        write_json(path, report);
        m.add("compare", path);
    }
    harness::print_comparison(log, cmp);
    m.write("simulate");
}

void cmd_certify(const ExperimentConfig &cfg, const fs::path &out, const CommandInputs &in, std::ostream &log) {
    ensure_dir(out);
    const auto hash = config_hash(cfg);
    const auto ctx = load_context(cfg, out, in, true);
    const auto cert = certify(*ctx);
    auto report = cert.report;
    report["config_hash"] = hash;
    const auto path = out / "certificate.json";
    write_json(path, report);
    log << report.dump(2) << '\n';
    Manifest m(out, hash, cfg.plant.sample_time);
    m.add("certificate", path);
    m.write("certify");
}

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"Neural data-enabled predictive control experiments"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_dir;
    CommandInputs inputs;
    std::string data, weights;

    auto add_common = [&](CLI::App *cmd) {
        cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
        cmd->add_option("--out", out_dir, "Output directory (overrides the config)");
    };
    auto *gen = app.add_subcommand("generate", "Run the identification experiment and write data.csv");
    auto *train = app.add_subcommand("train", "Train the network, refit its output layer, write weights");
    auto *sim = app.add_subcommand("simulate", "Run closed-loop experiments");
    auto *cert = app.add_subcommand("certify", "Report the predictor equivalence certificate");
    for (auto *c : {gen, train, sim, cert}) add_common(c);
    for (auto *c : {train, sim, cert}) c->add_option("--data", data, "Trajectory CSV (default <out>/data.csv)");
    for (auto *c : {sim, cert}) c->add_option("--weights", weights, "Weight file (default <out>/weights.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError &e) {
        err << "error: usage: " << e.what() << '\n';
        return 64;
    }

    try {
        const auto cfg = load_config(config_path);
        const fs::path dir = out_dir.empty() ? cfg.output_dir : fs::path(out_dir);
        inputs.data = data;
        inputs.weights = weights;
        if (gen->parsed()) cmd_generate(cfg, dir, out);
        if (train->parsed()) cmd_train(cfg, dir, inputs, out);
        if (sim->parsed()) cmd_simulate(cfg, dir, inputs, out);
        if (cert->parsed()) cmd_certify(cfg, dir, inputs, out);
    } catch (const Error &e) {
        err << "error: " << e.category() << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        err << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace ndeepc::app
