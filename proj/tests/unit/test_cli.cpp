#include "safeflow/cli.hpp"

#include "safeflow/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <iostream>
#include <sstream>

using namespace safeflow;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("safeflow-cli-" + name);
    fs::remove_all(p);
    return p;
}

std::string config_error_path(const std::string& text) {
    try {
        (void)cli::parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.key_path();
    }
    return "<no error>";
}

json small_run(const std::string& scenario = "inequality_only") {
    return {{"scenario", scenario},
            {"flow", {{"particles", 40}, {"horizon", 0.4}, {"dt", 0.05}}},
            {"output", {{"snapshot_every", 4}, {"reference_samples", 200}}}};
}

// Silences stdout while commands print their summaries.
struct QuietStdout {
    std::ostringstream sink;
    std::streambuf* old = std::cout.rdbuf(sink.rdbuf());
    ~QuietStdout() { std::cout.rdbuf(old); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("minimal config fills in the scenario defaults") {
    const cli::ExperimentConfig c = cli::parse_config_text(R"({"scenario": "paper_full"})");
    const Scenario ref = scenario_paper_full();
    CHECK(c.scenario.config.particles == ref.config.particles);
    CHECK(c.scenario.config.dt == ref.config.dt);
    CHECK(c.scenario.config.horizon == ref.config.horizon);
    CHECK(c.scenario.constraints.size() == 2);
    CHECK(c.output.svg);
    CHECK(c.hash() == cli::default_config("paper_full").hash());
    CHECK(c.hash().size() == 16);
}

TEST_CASE("dt larger than the horizon names both keys") {
    const std::string path = config_error_path(R"({"scenario": "paper_full", "flow": {"dt": 5, "horizon": 2}})");
    CHECK(path.find("flow.dt") != std::string::npos);
    CHECK(path.find("flow.horizon") != std::string::npos);
}

TEST_CASE("config errors carry the key path") {
    CHECK(config_error_path(R"({"scenario": "paper_full", "flow": {"dtt": 0.1}})") == "flow.dtt");
    CHECK(config_error_path(R"({"scenario": "paper_full", "flow": {"dt": "fast"}})") == "flow.dt");
    CHECK(config_error_path(R"({"scenario": "nope"})") == "scenario");
    CHECK(config_error_path(R"({"flow": {}})") == "scenario");
    CHECK(config_error_path(R"({"scenario": "paper_full", "constraints": [{"type": "torus"}]})")
              .find("constraints[0]") == 0);
    CHECK(config_error_path(R"({"scenario": "paper_full", "flow": {"integrator": "leapfrog"}})") ==
          "flow.integrator");
    CHECK(config_error_path(R"({"scenario": "paper_full", "flow": {"particles": 0}})") == "flow.particles");
    CHECK_THROWS_AS(cli::parse_config_text("{not json"), ConfigError);
}

TEST_CASE("overrides change the hash and round trip through resolved") {
    json doc = {{"scenario", "paper_full"}, {"flow", {{"alpha_g", 2.0}}}};
    const cli::ExperimentConfig c = cli::parse_config(doc);
    CHECK(c.scenario.config.alpha_g == 2.0);
    CHECK(c.hash() != cli::default_config("paper_full").hash());
    const cli::ExperimentConfig again = cli::parse_config(c.resolved());
    CHECK(again.resolved() == c.resolved());
    CHECK(again.hash() == c.hash());

    doc["output"] = {{"dir", "/tmp/elsewhere"}};
    CHECK(cli::parse_config(doc).hash() == c.hash());
}

TEST_CASE("custom constraints replace the scenario's") {
    const cli::ExperimentConfig c = cli::parse_config_text(
        R"({"scenario": "conjugate_sanity", "constraints": [{"type": "halfspace", "normal": [1, 0], "offset": 0.5}]})");
    REQUIRE(c.scenario.constraints.size() == 1);
    CHECK(std::holds_alternative<HalfspaceShape>(c.scenario.constraints[0].shape));
}

TEST_CASE("every documented key is accepted by the parser") {
    const auto ref = cli::config_reference();
    CHECK(ref.size() > 20);
    const std::string text = cli::render_config_reference();
    for (const auto& k : ref) CHECK(text.find(k.path) != std::string::npos);
}

TEST_CASE("zero horizon writes one snapshot and a complete manifest") {
    json doc = small_run();
    doc["flow"]["horizon"] = 0.0;
    const fs::path dir = scratch_dir("zero");
    QuietStdout quiet;
    const cli::CommandResult r = cli::run_command(cli::parse_config(doc), dir, false);
    CHECK(r.exit_code == cli::exit_ok);
    CHECK(fs::exists(dir / "snapshot_0000.csv"));
    CHECK(fs::exists(dir / "snapshot_0000.svg"));
    CHECK_FALSE(fs::exists(dir / "snapshot_0001.csv"));
    const json manifest = json::parse(io::read_file(dir / "manifest.json"));
    CHECK(manifest["status"] == "ok");
    std::size_t listed = 0;
    for (const auto& f : manifest["files"]) {
        CHECK(fs::exists(dir / f.get<std::string>()));
        ++listed;
    }
    std::size_t on_disk = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) ++on_disk;
    CHECK(listed == on_disk);
    fs::remove_all(dir);
}

TEST_CASE("reruns produce identical bytes") {
    const cli::ExperimentConfig c = cli::parse_config(small_run());
    const fs::path a = scratch_dir("rerun-a");
    const fs::path b = scratch_dir("rerun-b");
    QuietStdout quiet;
    REQUIRE(cli::run_command(c, a, false).exit_code == cli::exit_ok);
    REQUIRE(cli::run_command(c, b, false).exit_code == cli::exit_ok);
    for (const char* name : {"snapshot_0000.csv", "snapshot_0002.csv", "metrics.json", "config.resolved.json",
                             "decay_report.txt", "snapshot_0002.svg"})
        CHECK_MESSAGE(io::read_file(a / name) == io::read_file(b / name), name);
    const json metrics = json::parse(io::read_file(a / "metrics.json"));
    CHECK(metrics["config_hash"] == c.hash());
    CHECK(metrics["particles"] == 40);
    CHECK(metrics["snapshots"].size() == 3);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("compare shares one initial ensemble") {
    const cli::ExperimentConfig c = cli::parse_config(small_run());
    const fs::path dir = scratch_dir("compare");
    QuietStdout quiet;
    const cli::CommandResult r = cli::compare_command(c, dir, false);
    REQUIRE(r.exit_code == cli::exit_ok);
    REQUIRE(r.summaries.size() == 3);
    const std::string first = io::read_file(dir / "safe" / "snapshot_0000.csv");
    CHECK(io::read_file(dir / "unconstrained" / "snapshot_0000.csv") == first);
    CHECK(io::read_file(dir / "projection" / "snapshot_0000.csv") == first);
    const json cmp = json::parse(io::read_file(dir / "comparison.json"));
    CHECK(cmp["initial_ensemble_hash"] == io::fnv1a_hex(first));
    CHECK(fs::exists(dir / "comparison.txt"));
    fs::remove_all(dir);
}

TEST_CASE("infeasible constraints relax under the default policy and abort otherwise") {
    json doc = small_run("conjugate_sanity");
    doc["constraints"] = {{{"type", "halfspace"}, {"normal", {1, 0}}, {"offset", 1.0}},
                          {{"type", "halfspace"}, {"normal", {-1, 0}}, {"offset", 1.0}}};
    const fs::path dir = scratch_dir("relax");
    QuietStdout quiet;
    const cli::CommandResult relaxed = cli::run_command(cli::parse_config(doc), dir, true);
    CHECK(relaxed.exit_code == cli::exit_check_failed);
    CHECK(relaxed.summaries.at(0).relaxed_events > 0);
    const json metrics = json::parse(io::read_file(dir / "metrics.json"));
    CHECK(metrics["totals"]["relaxed_events"].get<std::size_t>() > 0);

    doc["flow"]["infeasibility"] = "abort";
    const fs::path dir2 = scratch_dir("abort");
    const cli::CommandResult aborted = cli::run_command(cli::parse_config(doc), dir2, false);
    CHECK(aborted.exit_code == cli::exit_numerical_abort);
    CHECK(json::parse(io::read_file(dir2 / "manifest.json"))["status"] == "numerical_abort");
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("command line entry point") {
    QuietStdout quiet;
    const auto call = [](std::vector<std::string> args) {
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        return cli::cli_main(static_cast<int>(argv.size()), argv.data());
    };
    CHECK(call({"safeflow", "list-scenarios"}) == 0);
    CHECK(quiet.sink.str().find("paper_full") != std::string::npos);
    CHECK(call({"safeflow", "validate-config", "-s", "paper_full"}) == 0);
    CHECK(call({"safeflow", "validate-config", "-s", "nope"}) == 2);
    CHECK(call({"safeflow", "frobnicate"}) == 2);
    CHECK(call({"safeflow", "validate-config", "-c", "/nonexistent/config.json"}) != 0);
}

}
