#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "caal/experiment_harness.hpp"
#include "caal/pipeline_sim.hpp"

namespace caal {

/// Everything a CLI invocation needs. Loaded from JSON; unknown keys are errors.
struct AppConfig {
    std::uint64_t master_seed = 42;
    ScenarioConfig scenario;
    ModelConfigs models;
    ExperimentConfig experiment;
    PipelineConfig pipeline;
    std::uint64_t pipeline_seed = 0;
    std::vector<int> sweep_users{50, 100, 150, 200, 250, 300, 350, 400, 450, 500, 550, 600};

    void validate() const;
};

/// Component seeds derived from a master seed; used for every seed the file leaves out.
struct DerivedSeeds {
    std::uint64_t population, target, episode, forest, dqn, experiment, pipeline;
};
DerivedSeeds derive_seeds(std::uint64_t master_seed);

/// Defaults with every seed derived from `master_seed`.
AppConfig default_config(std::uint64_t master_seed = 42);

/// Parses a config document. A manifest (with a "config" member) is accepted
/// too, so a run can be repeated from its manifest. Throws ConfigError.
AppConfig parse_config(const std::string& text);
AppConfig load_config(const std::filesystem::path& path);

/// Fully resolved JSON: every field, every seed, no derivation left.
std::string config_to_json(const AppConfig& cfg);

}  // namespace caal
