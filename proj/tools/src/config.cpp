#include "ndeepc_app/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <tuple>

#include "ndeepc/error.hpp"

namespace ndeepc::app {

namespace {

using nlohmann::json;

/// Reads the keys of one section, rejecting keys nobody asked for.
class Section {
public:
    Section(const json &j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
    }
    template <class T>
    void get(const char *key, T &out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception &e) {
            throw ConfigError(name_ + "." + key + ": " + e.what());
        }
    }

    [[nodiscard]] bool has(const char *key) {
        seen_.insert(key);
        return j_.contains(key);
    }
    const json &at(const char *key) { return j_.at(key); }

    void finish() const {
        for (const auto &[k, v] : j_.items()) {
            (void)v;
            if (!seen_.count(k)) throw ConfigError("unknown key '" + name_ + "." + k + "'");
        }
    }

private:
    const json &j_;
    std::string name_;
    std::set<std::string> seen_;
};

const json &section(const json &root, const char *name) {
    static const json empty = json::object();
    return root.contains(name) ? root.at(name) : empty;
}

Matrix weight_matrix(const json &j, Index n, const char *what) {
    if (j.is_number()) return Matrix::Identity(n, n) * j.get<double>();
    try {
        const auto rows = j.get<std::vector<std::vector<double>>>();
        if (static_cast<Index>(rows.size()) != n) throw ConfigError(std::string(what) + " must be a scalar or n x n");
        Matrix m(n, n);
        for (Index i = 0; i < n; ++i) {
            if (static_cast<Index>(rows[i].size()) != n) throw ConfigError(std::string(what) + " must be square");
            for (Index k = 0; k < n; ++k) m(i, k) = rows[i][k];
        }
        return m;
    } catch (const json::exception &e) {
        throw ConfigError(std::string(what) + ": " + e.what());
    }
}

json weight_json(const Matrix &m) {
    if (m.rows() == 1) return m(0, 0);
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
        rows.push_back(r);
    }
    return rows;
}

std::pair<double, double> interval(const json &j, const char *what) {
    try {
        const auto v = j.get<std::vector<double>>();
        if (v.size() != 2) throw ConfigError(std::string(what) + " must be [low, high]");
        return {v[0], v[1]};
    } catch (const json::exception &e) {
        throw ConfigError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

Index ExperimentConfig::hankel_columns() const {
    const Index samples = static_cast<Index>(excitation.period) * excitation.num_periods + (rest_history ? t_ini : 0);
    return hankel::hankel_columns(samples, t_ini, horizon);
}

void ExperimentConfig::validate() const {
    plant.validate();
    excitation.validate();
    reference.validate();
    training.validate();
    const auto d = dims();
    d.validate();
    control.validate(d);
    if (!(measurement_noise >= 0.0)) throw ConfigError("measurement noise must be non-negative");
    if (architecture == Architecture::Mlp) {
        if (hidden_widths.empty()) throw ConfigError("network needs at least one hidden layer");
        if (hidden_widths.size() != activations.size())
            throw ConfigError("network needs one activation per hidden layer");
        for (auto w : hidden_widths) {
            if (w < 1) throw ConfigError("hidden layer widths must be >= 1");
        }
    }
    const Index cols = hankel_columns();
    if (cols < d.regressor_size()) {
        throw ConfigError("data yields T = " + std::to_string(cols) + " Hankel columns, fewer than (m+p)T_ini + mN = " +
                          std::to_string(d.regressor_size()));
    }
    if (t_sim < 1) throw ConfigError("T_sim must be >= 1");
    if (t_sim <= t_ini) throw ConfigError("T_sim must exceed the T_ini warmup steps");
    if (reference.horizon < t_sim + horizon) {
        throw ConfigError("reference horizon " + std::to_string(reference.horizon) + " is shorter than T_sim + N = " +
                          std::to_string(t_sim + horizon));
    }
    if (compare && compare_formulations.empty()) throw ConfigError("compare needs at least one formulation");
}

ExperimentConfig config_from_json(const json &root) {
    if (!root.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    Section top(root, "config");
    std::string format = kConfigFormat;
    int version = kConfigVersion;
    top.get("format", format);
    top.get("version", version);
    if (format != kConfigFormat) throw ConfigError("config format must be '" + std::string(kConfigFormat) + "'");
    if (version != kConfigVersion) throw ConfigError("unsupported config version " + std::to_string(version));

    {
        Section s(section(root, "plant"), "plant");
        s.get("mass", c.plant.mass);
        s.get("length", c.plant.length);
        s.get("gravity", c.plant.gravity);
        s.get("damping", c.plant.damping);
        s.get("sample_time", c.plant.sample_time);
        s.get("initial_angle", c.initial_angle);
        s.get("initial_velocity", c.initial_velocity);
        s.get("measurement_noise", c.measurement_noise);
        s.get("noise_seed", c.noise_seed);
        s.finish();
    }
    {
        Section s(section(root, "excitation"), "excitation");
        auto &e = c.excitation;
        if (s.has("range")) std::tie(e.range_low, e.range_high) = interval(s.at("range"), "excitation.range");
        if (s.has("band")) std::tie(e.band_low, e.band_high) = interval(s.at("band"), "excitation.band");
        s.get("period", e.period);
        s.get("periods", e.num_periods);
        s.get("sinusoids", e.num_sinusoids);
        s.get("frequency_trials", e.frequency_trials);
        s.get("phase_trials", e.phase_trials);
        s.get("seed", e.seed);
        s.finish();
    }
    {
        Section s(section(root, "data"), "data");
        s.get("t_ini", c.t_ini);
        s.get("horizon", c.horizon);
        s.get("rest_history", c.rest_history);
        s.finish();
    }
    {
        Section s(section(root, "network"), "network");
        std::string arch = "mlp";
        s.get("architecture", arch);
        if (arch == "mlp") {
            c.architecture = Architecture::Mlp;
        } else if (arch == "linear-identity") {
            c.architecture = Architecture::LinearIdentity;
        } else {
            throw ConfigError("network.architecture must be 'mlp' or 'linear-identity'");
        }
        s.get("hidden", c.hidden_widths);
        if (s.has("activations")) {
            std::vector<std::string> names;
            s.get("activations", names);
            c.activations.clear();
            for (const auto &n : names) c.activations.push_back(mlp::activation_from_string(n));
        }
        s.get("seed", c.init_seed);
        s.finish();
    }
    {
        Section s(section(root, "training"), "training");
        auto &t = c.training;
        s.get("learning_rate", t.learning_rate);
        s.get("batch_size", t.batch_size);
        s.get("epochs", t.epochs);
        s.get("seed", t.seed);
        s.get("normalize", t.normalize);
        s.get("report_every", t.report_every);
        s.finish();
    }
    {
        Section s(section(root, "control"), "control");
        auto &k = c.control;
        std::string f = "P3";
        s.get("formulation", f);
        if (f == "compare") {
            c.compare = true;
        } else if (f == "linear") {
            // Classical DeePC: identity hidden map with the explicit-g problem.
            c.architecture = Architecture::LinearIdentity;
            k.formulation = controllers::Formulation::P1;
        } else {
            k.formulation = controllers::formulation_from_string(f);
        }
        if (s.has("compare_formulations")) {
            std::vector<std::string> names;
            s.get("compare_formulations", names);
            c.compare_formulations.clear();
            for (const auto &n : names) c.compare_formulations.push_back(controllers::formulation_from_string(n));
        }
        if (s.has("Q")) k.output_weight = weight_matrix(s.at("Q"), 1, "control.Q");
        if (s.has("R")) k.input_weight = weight_matrix(s.at("R"), 1, "control.R");
        s.get("lambda", k.lambda);
        s.get("slack_penalty", k.slack_penalty);
        if (s.has("u_box")) std::tie(k.u_min, k.u_max) = interval(s.at("u_box"), "control.u_box");
        if (s.has("y_box")) std::tie(k.y_min, k.y_max) = interval(s.at("y_box"), "control.y_box");
        if (s.has("solver")) {
            Section v(s.at("solver"), "control.solver");
            v.get("feasibility_tolerance", k.solver.feasibility_tolerance);
            v.get("optimality_tolerance", k.solver.optimality_tolerance);
            v.get("max_iterations", k.solver.max_iterations);
            v.get("bfgs_memory", k.solver.bfgs_memory);
            v.finish();
        }
        s.finish();
    }
    {
        Section s(section(root, "reference"), "reference");
        auto &r = c.reference;
        std::string kind = "steps";
        s.get("kind", kind);
        if (kind == "steps") {
            r.kind = signals::ReferenceKind::Steps;
        } else if (kind == "chirp") {
            r.kind = signals::ReferenceKind::Chirp;
        } else {
            throw ConfigError("reference.kind must be 'steps' or 'chirp'");
        }
        s.get("levels", r.levels);
        s.get("dwell", r.dwell);
        s.get("start_hz", r.start_hz);
        s.get("end_hz", r.end_hz);
        s.get("amplitude", r.amplitude);
        s.get("preview", c.reference_preview);
        s.finish();
    }
    {
        Section s(section(root, "simulation"), "simulation");
        s.get("T_sim", c.t_sim);
        s.finish();
    }
    std::string out = c.output_dir.string();
    top.get("output_dir", out);
    c.output_dir = out;
    // Sections are validated above; listing them here keeps `finish` strict.
    for (const char *k : {"plant", "excitation", "data", "network", "training", "control", "reference", "simulation"})
        (void)top.has(k);
    top.finish();

    c.reference.sample_time = c.plant.sample_time;
    c.reference.horizon = static_cast<int>(c.t_sim + c.horizon);
    c.validate();
    return c;
}

json to_json(const ExperimentConfig &c) {
    json j;
    j["format"] = kConfigFormat;
    j["version"] = kConfigVersion;
    j["plant"] = {{"mass", c.plant.mass},
                  {"length", c.plant.length},
                  {"gravity", c.plant.gravity},
                  {"damping", c.plant.damping},
                  {"sample_time", c.plant.sample_time},
                  {"initial_angle", c.initial_angle},
                  {"initial_velocity", c.initial_velocity},
                  {"measurement_noise", c.measurement_noise},
                  {"noise_seed", c.noise_seed}};
    const auto &e = c.excitation;
    j["excitation"] = {{"range", {e.range_low, e.range_high}},
                       {"band", {e.band_low, e.band_high}},
                       {"period", e.period},
                       {"periods", e.num_periods},
                       {"sinusoids", e.num_sinusoids},
                       {"frequency_trials", e.frequency_trials},
                       {"phase_trials", e.phase_trials},
                       {"seed", e.seed}};
    j["data"] = {{"t_ini", c.t_ini}, {"horizon", c.horizon}, {"rest_history", c.rest_history}};
    std::vector<std::string> acts;
    for (auto a : c.activations) acts.emplace_back(mlp::to_string(a));
    j["network"] = {{"architecture", c.architecture == Architecture::Mlp ? "mlp" : "linear-identity"},
                    {"hidden", c.hidden_widths},
                    {"activations", acts},
                    {"seed", c.init_seed}};
    const auto &t = c.training;
    j["training"] = {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size}, {"epochs", t.epochs},
                     {"seed", t.seed},                   {"normalize", t.normalize},   {"report_every", t.report_every}};
    const auto &k = c.control;
    std::vector<std::string> cmp;
    for (auto f : c.compare_formulations) cmp.push_back(controllers::to_string(f));
    j["control"] = {{"formulation", c.compare ? std::string("compare") : controllers::to_string(k.formulation)},
                    {"compare_formulations", cmp},
                    {"Q", weight_json(k.output_weight)},
                    {"R", weight_json(k.input_weight)},
                    {"lambda", k.lambda},
                    {"slack_penalty", k.slack_penalty},
                    {"u_box", {k.u_min, k.u_max}},
                    {"y_box", {k.y_min, k.y_max}},
                    {"solver",
                     {{"feasibility_tolerance", k.solver.feasibility_tolerance},
                      {"optimality_tolerance", k.solver.optimality_tolerance},
                      {"max_iterations", k.solver.max_iterations},
                      {"bfgs_memory", k.solver.bfgs_memory}}}};
    const auto &r = c.reference;
    j["reference"] = {{"kind", r.kind == signals::ReferenceKind::Steps ? "steps" : "chirp"},
                      {"levels", r.levels},
                      {"dwell", r.dwell},
                      {"start_hz", r.start_hz},
                      {"end_hz", r.end_hz},
                      {"amplitude", r.amplitude},
                      {"preview", c.reference_preview}};
    j["simulation"] = {{"T_sim", c.t_sim}};
    j["output_dir"] = c.output_dir.string();
    return j;
}

ExperimentConfig load_config(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file '" + path.string() + "'");
    json j;
    try {
        is >> j;
    } catch (const json::exception &e) {
        throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

std::string config_hash(const ExperimentConfig &cfg) {
    const std::string text = to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace ndeepc::app
