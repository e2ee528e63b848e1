#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "caal/csv.hpp"
#include "caal/errors.hpp"
#include "caal/workflow.hpp"

using namespace caal;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("caal_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(CAAL_CLI) + " " + args + " >" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t data_rows(const fs::path& csv_path) {
    std::ifstream in(csv_path);
    return csv::read_rows(in).size() - 1;  // minus header
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("omitted seeds derive from the master seed") {
    const auto a = parse_config(R"({"master_seed": 5})");
    const auto s = derive_seeds(5);
    CHECK(a.scenario.population_seed == s.population);
    CHECK(a.models.forest.seed == s.forest);
    CHECK(a.models.dqn.seed == s.dqn);
    CHECK(a.experiment.seed == s.experiment);
    CHECK(a.pipeline_seed == s.pipeline);

    const auto b = parse_config(R"({"master_seed": 5, "forest": {"seed": 99}})");
    CHECK(b.models.forest.seed == 99);
    CHECK(b.models.dqn.seed == s.dqn);
}

TEST_CASE("defaults appear in the resolved config") {
    const auto c = parse_config("{}");
    CHECK(c.models.forest.n_trees == 500);
    CHECK(c.models.forest.max_depth == 5);
    CHECK(c.models.reward.region_low == 0.2);
    CHECK(c.models.reward.region_high == 0.6);
    CHECK(c.models.dqn.train_steps == 200000);
    CHECK(c.models.dqn.epsilon == 0.05);
    CHECK(c.experiment.update_cadence == 100);
    CHECK(c.experiment.repeats == 100);
    CHECK(c.experiment.test_holdout_fraction == 0.25);
    CHECK(c.scenario.n_pretrain_subjects == 14);
    const std::string j = config_to_json(c);
    for (const char* key : {"\"n_trees\": 500", "\"bellman_mode\": \"conventional\"", "\"query_reward_scale\": 2.0",
                            "\"service_distribution\": \"exponential\"", "\"policy\": \"al_context\""})
        CHECK(j.find(key) != std::string::npos);
}

TEST_CASE("resolved config round trips exactly") {
    const auto c = parse_config(R"({"master_seed": 3, "dqn": {"bellman_mode": "paper_literal"},
                                    "scenario": {"target": {"baseline_ibi_mean_ms": 900.5, "responsiveness": null}}})");
    CHECK(c.models.dqn.bellman_mode == BellmanMode::PaperLiteral);
    CHECK(c.scenario.target.baseline_ibi_mean_ms == 900.5);
    CHECK_FALSE(c.scenario.target.responsiveness.has_value());
    CHECK(c.scenario.target.intensity_noise.has_value());  // other defaults survive the merge
    const std::string once = config_to_json(c);
    CHECK(config_to_json(parse_config(once)) == once);
}

TEST_CASE("unknown keys are hard errors") {
    CHECK_THROWS_WITH_AS(parse_config(R"({"mastr_seed": 1})"), doctest::Contains("mastr_seed"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"forest": {"ntrees": 3}})"), doctest::Contains("forest"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"scenario": {"target": {"colour": 1}}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"scenario": {"label_scheme": {"neutral": [2]}}})"), ConfigError);
}

TEST_CASE("type and range errors") {
    CHECK_THROWS_AS(parse_config(R"({"forest": {"n_trees": "many"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"forest": {"n_trees": 0}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"forest": {"bootstrap": 1}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"dqn": {"bellman_mode": "double"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"scenario": {"target": {"responsiveness": [0.5]}}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"sweep_users": [300, 200]})"), ConfigError);
    CHECK_THROWS_AS(parse_config("[1, 2]"), ConfigError);
    CHECK_THROWS_AS(parse_config("{"), ConfigError);
}

TEST_CASE("a manifest is accepted as a config") {
    const auto c = parse_config(R"({"master_seed": 8})");
    const std::string manifest = R"({"manifest_version": 1, "config": )" + config_to_json(c) + "}";
    CHECK(config_to_json(parse_config(manifest)) == config_to_json(c));
}

TEST_CASE("missing checkpoints name the producing subcommand") {
    CHECK_THROWS_WITH_AS(load_model_checkpoint("/nonexistent/model.json"), doctest::Contains("caal pretrain"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(load_agent_checkpoint("/nonexistent/agent.json"), doctest::Contains("caal train-agent"),
                         ConfigError);
}

}

TEST_SUITE("cli") {

TEST_CASE("compare with the example config writes three summary rows") {
    const auto dir = scratch("compare");
    REQUIRE(run_cli("compare -c " CAAL_EXAMPLE_CONFIG " -o " + (dir / "a").string(), dir / "log.txt") == 0);
    CHECK(data_rows(dir / "a" / "summary.csv") == 3);
    for (const char* f : {"config.json", "manifest.json", "results.csv", "trajectories.csv", "response_rates.csv"})
        CHECK(fs::exists(dir / "a" / f));
}

TEST_CASE("re-running from a manifest reproduces every CSV byte for byte") {
    const auto dir = scratch("rerun");
    REQUIRE(run_cli("compare -c " CAAL_EXAMPLE_CONFIG " -o " + (dir / "a").string(), dir / "log1.txt") == 0);
    REQUIRE(run_cli("compare -c " + (dir / "a" / "manifest.json").string() + " --parallel 1 -o " +
                        (dir / "b").string(),
                    dir / "log2.txt") == 0);
    for (const char* f : {"results.csv", "summary.csv", "trajectories.csv", "response_rates.csv"})
        CHECK(file_checksum(dir / "a" / f) == file_checksum(dir / "b" / f));
}

TEST_CASE("checkpoints from pretrain and train-agent feed run") {
    const auto dir = scratch("checkpoints");
    const std::string cfg = " -c " CAAL_EXAMPLE_CONFIG;
    REQUIRE(run_cli("pretrain" + cfg + " -o " + (dir / "m").string(), dir / "l1.txt") == 0);
    REQUIRE(run_cli("train-agent" + cfg + " --model " + (dir / "m" / "model.json").string() + " -o " +
                        (dir / "g").string(),
                    dir / "l2.txt") == 0);
    REQUIRE(run_cli("run" + cfg + " --model " + (dir / "m" / "model.json").string() + " --agent " +
                        (dir / "g" / "agent_context.json").string() + " -o " + (dir / "r").string(),
                    dir / "l3.txt") == 0);
    REQUIRE(run_cli("run" + cfg + " -o " + (dir / "r2").string(), dir / "l4.txt") == 0);
    CHECK(file_checksum(dir / "r" / "results.csv") == file_checksum(dir / "r2" / "results.csv"));
    CHECK(data_rows(dir / "r" / "summary.csv") == 1);
}

TEST_CASE("missing checkpoint and unknown key fail with a message") {
    const auto dir = scratch("errors");
    CHECK(run_cli("run -c " CAAL_EXAMPLE_CONFIG " --model " + (dir / "none.json").string() + " -o " +
                      (dir / "x").string(),
                  dir / "l1.txt") != 0);
    CHECK(slurp(dir / "l1.txt").find("caal pretrain") != std::string::npos);

    std::ofstream(dir / "bad.json") << R"({"forest": {"depth": 3}})";
    CHECK(run_cli("pretrain -c " + (dir / "bad.json").string() + " -o " + (dir / "y").string(), dir / "l2.txt") != 0);
    CHECK(slurp(dir / "l2.txt").find("unknown key 'depth'") != std::string::npos);
}

TEST_CASE("features on a constant fixture give zero sdnn") {
    const auto dir = scratch("features");
    {
        std::ofstream f(dir / "fixture.csv");
        f << "subject_id,timestamp,interval_ms\n";
        for (int w = 0; w < 3; ++w)
            for (int i = 0; i < 120; ++i) f << "s1," << w * 15 << ",1000\n";
    }
    REQUIRE(run_cli("features -i " + (dir / "fixture.csv").string() + " -o " + (dir / "out.csv").string(),
                    dir / "log.txt") == 0);
    std::ifstream in(dir / "out.csv");
    const auto rows = csv::read_rows(in);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0][4] == "sdnn");
    for (std::size_t r = 1; r < rows.size(); ++r) CHECK(csv::parse_double(rows[r][4], "sdnn") == 0.0);
}

TEST_CASE("gen-data and pipeline-sim write their outputs") {
    const auto dir = scratch("gen");
    REQUIRE(run_cli("gen-data -c " CAAL_EXAMPLE_CONFIG " -o " + (dir / "g").string(), dir / "l1.txt") == 0);
    for (const char* f : {"subjects.json", "population_stream.csv", "target_stream.csv", "target_truth.csv"})
        CHECK(fs::exists(dir / "g" / f));
    REQUIRE(run_cli("pipeline-sim -c " CAAL_EXAMPLE_CONFIG " -o " + (dir / "p").string(), dir / "l2.txt") == 0);
    CHECK(data_rows(dir / "p" / "latency_sweep.csv") == 4);
}

}
