#pragma once

#include "safeflow/experiments.hpp"
#include "safeflow/integrate.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace safeflow::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_io_error = 1,
    exit_config_error = 2,
    exit_numerical_abort = 3,
    exit_check_failed = 4,
};

struct OutputOptions {
    bool svg = true;
    /// Reference draws for the divergence proxy; 0 disables it.
    int reference_samples = 2000;
    int divergence_k = 5;
    /// Not part of the resolved config or its hash.
    std::optional<std::filesystem::path> dir;
};

/// A parsed experiment: the scenario with every override applied (its
/// `config` member holds the flow settings) plus output options.
struct ExperimentConfig {
    Scenario scenario;
    OutputOptions output;
    /// Seed for the optional observation noise, recorded for reproducibility.
    std::optional<std::uint64_t> noise_seed;

    /// Every setting with defaults filled in, in a form parse_config accepts.
    nlohmann::json resolved() const;
    /// FNV-1a of resolved().dump().
    std::string hash() const;
};

/// Parses a JSON config document. Unknown keys, type mismatches, missing
/// required keys and unknown names throw ConfigError with the key path.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::filesystem::path& path);

/// Equivalent to parse_config({"scenario": name}).
ExperimentConfig default_config(const std::string& scenario);

/// One entry per accepted key: path, type, default and description.
struct ConfigKeyDoc {
    std::string path;
    std::string type;
    std::string default_value;
    std::string description;
};
std::vector<ConfigKeyDoc> config_reference();
std::string render_config_reference();

struct RunManifest {
    std::string config_hash;
    std::string scenario;
    std::uint64_t seed = 0;
    std::string version;
    std::string started;
    std::string finished;
    /// "ok", "check_failed", "numerical_abort" or "io_error".
    std::string status = "ok";
    std::string error;
    /// Paths relative to the output directory, in write order.
    std::vector<std::string> files;

    nlohmann::json to_json() const;
};

/// Summary of one flow for side-by-side comparison.
struct RunSummary {
    std::string method;
    double violation_fraction = 0.0;
    Vector terminal_barrier;
    std::optional<double> divergence;
    std::size_t relaxed_events = 0;
    bool decay_pass = false;
};

/// Writes snapshot CSV/SVG files, metrics.json and decay_report.txt for one
/// run into `dir`/`subdir`, appending every written path to `manifest.files`.
RunSummary emit_outputs(const FlowRun& run, const ExperimentConfig& config, const std::string& method,
                        const std::filesystem::path& dir, const std::string& subdir,
                        const std::optional<Matrix>& reference, RunManifest& manifest);

/// Result of run_command / compare_command; the manifest has been written.
struct CommandResult {
    RunManifest manifest;
    std::filesystem::path dir;
    std::vector<RunSummary> summaries;
    bool check_passed = true;
    int exit_code = exit_ok;
};

/// Output directory when none is given: $SAFEFLOW_OUTPUT_ROOT (or
/// ./safeflow-output) / <scenario>-<first 8 hash digits>.
std::filesystem::path default_output_dir(const ExperimentConfig& config);

CommandResult run_command(const ExperimentConfig& config, const std::filesystem::path& dir, bool check);

/// Safe flow, unconstrained flow and the simplified projection baseline from
/// one shared initial ensemble.
CommandResult compare_command(const ExperimentConfig& config, const std::filesystem::path& dir, bool check);

int cli_main(int argc, char** argv);

}  // namespace safeflow::cli
