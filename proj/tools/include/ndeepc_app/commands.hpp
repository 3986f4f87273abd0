#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ndeepc_app/config.hpp"

namespace ndeepc::app {

/// Paths a command reads besides the config. Empty paths default to the
/// artifacts an earlier command wrote into the output directory.
struct CommandInputs {
    std::filesystem::path data;     // default <out>/data.csv
    std::filesystem::path weights;  // default <out>/weights.json
};

/// Records artifacts in <out>/manifest.json (paths relative to <out>) along
/// with the config hash; entries from earlier commands are kept.
class Manifest {
public:
    Manifest(std::filesystem::path out_dir, std::string config_hash, double sample_time);

    void add(const std::string &name, const std::filesystem::path &path);
    void write(const std::string &command) const;

private:
    std::filesystem::path out_;
    nlohmann::json doc_;
};

void cmd_generate(const ExperimentConfig &cfg, const std::filesystem::path &out, std::ostream &log);
void cmd_train(const ExperimentConfig &cfg, const std::filesystem::path &out, const CommandInputs &in,
               std::ostream &log);
void cmd_simulate(const ExperimentConfig &cfg, const std::filesystem::path &out, const CommandInputs &in,
                  std::ostream &log);
void cmd_certify(const ExperimentConfig &cfg, const std::filesystem::path &out, const CommandInputs &in,
                 std::ostream &log);

/// Entry point shared by the executable and the tests. Returns the exit code;
/// failures print `error: <category>: <message>` to `err`.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

}  // namespace ndeepc::app
