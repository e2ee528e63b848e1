#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "caal/dqn_agent.hpp"
#include "caal/reward_engine.hpp"
#include "caal/state_builder.hpp"
#include "caal/stress_classifier.hpp"
#include "caal/subject_sim.hpp"

namespace caal {

enum class Policy { Random, AlNonContext, AlContext };

std::string_view policy_name(Policy p);
Policy parse_policy(std::string_view name);
inline constexpr std::array<Policy, 3> kAllPolicies{Policy::Random, Policy::AlNonContext, Policy::AlContext};

/// Synthetic cohort: pretraining population, the target subject and the agent's offline episode.
struct ScenarioConfig {
    std::uint64_t population_seed = 1;
    int n_pretrain_subjects = 14;
    int pretrain_slots_per_subject = 800;
    int pretrain_labels_per_subject = 800;
    std::uint64_t target_seed = 1000;
    SubjectOverrides target = default_target_overrides();
    std::size_t stream_length_slots = 12700;
    std::uint64_t episode_seed = 2000;
    std::size_t episode_slots = 8000;
    LabelScheme scheme = LabelScheme::standard();

    /// The default synthetic subject: noisier self-reports and a weaker
    /// breathing response than the population, answering queries mostly
    /// before and after working hours (responsiveness 0.9 vs 0.1).
    static SubjectOverrides default_target_overrides();
    void validate() const;
};

struct ExperimentConfig {
    Policy policy = Policy::AlContext;
    int update_cadence = 100;
    double test_holdout_fraction = 0.25;
    int repeats = 100;
    bool query_budget_matching = true;
    /// Per-instance query probability of the random policy when budgets are not matched.
    double random_query_rate = 0.1;
    double response_smoothing = 0.1;
    double response_prior = 0.5;
    /// Target recall for queries-to-target is pretrained recall plus this gain.
    double target_recall_gain = 0.10;
    int recall_smoothing_window = 3;
    std::uint64_t seed = 42;
    /// Worker threads for repeats; 0 uses the hardware concurrency.
    int parallel = 0;
    /// Stop a run once this many labels are collected; 0 walks the whole stream.
    long long label_budget = 0;

    void validate() const;
};

/// Models and learners shared by every run of an experiment.
struct ModelConfigs {
    ForestConfig forest;
    RewardConfig reward;
    DqnConfig dqn;
};

/// Everything derived deterministically from a ScenarioConfig.
struct Scenario {
    std::vector<SubjectProfile> population;
    SubjectProfile target;
    Dataset pretrain_data;
    std::vector<Instance> stream;
    std::size_t train_end = 0;  // instances [0, train_end) are walked; the rest is the test tail
    Dataset test_data;
    LabelScheme scheme;
};

Scenario prepare_scenario(const ScenarioConfig& sc, const ExperimentConfig& ec);

/// Labeled pool from a population: a random subset of each subject's stream
/// is labeled with the level the subject reports, mapped through `scheme`.
Dataset pooled_dataset(std::span<const SubjectProfile> population, int slots_per_subject, int labels_per_subject,
                       const LabelScheme& scheme);

/// Leave-subject-out pretraining. Throws ConfigError on an empty population or
/// when held_out is part of it.
ForestModel pretrain(std::span<const SubjectProfile> population, const SubjectProfile& held_out,
                     const ScenarioConfig& sc, const ForestConfig& forest);

/// Offline episode for agent training: a fresh subject scored by the pretrained
/// model, with per-(day, hour) response rates drawn over [0, 1].
std::vector<EpisodeStep> agent_episode(const ScenarioConfig& sc, const ForestModel& pretrained);

/// Trains the contextual agent (full reward) or the non-contextual one (raw-score reward only).
TrainingResult train_agent(std::span<const EpisodeStep> episode, bool contextual, const ModelConfigs& models);

struct TrajectoryPoint {
    int step = 0;
    long long queries = 0;
    long long labels = 0;
    double recall = 0;
};

struct ResponsePoint {
    int step = 0;
    long long issued = 0;
    long long answered = 0;
};

struct RunResult {
    Policy policy = Policy::Random;
    int repeat = 0;
    std::uint64_t seed = 0;
    long long queries_issued = 0;
    long long labels_obtained = 0;
    long long stressed_labels = 0;  // answered queries whose label maps to class 1
    std::vector<TrajectoryPoint> recall_trajectory;  // point 0 is the pretrained model
    std::vector<ResponsePoint> response_rate_series;
    ResponseProfile final_profile;

    double pretrained_recall() const { return recall_trajectory.front().recall; }
    double answered_ratio() const;
};

/// One policy walking the stream alone. Agent policies need `agent`.
RunResult run_policy(const ExperimentConfig& ec, const Scenario& scenario, const ForestModel& pretrained,
                     const QNetwork* agent, const ModelConfigs& models, int repeat);

/// All three policies in lockstep. With budget matching the per-step query
/// count of every policy equals the smaller of the two agents' selections.
std::array<RunResult, 3> run_matched(const ExperimentConfig& ec, const Scenario& scenario,
                                     const ForestModel& pretrained, const QNetwork& contextual,
                                     const QNetwork& noncontextual, const ModelConfigs& models, int repeat);

/// ec.repeats runs of ec.policy, repeat i at index i, on ec.parallel workers.
std::vector<RunResult> run_repeats(const ExperimentConfig& ec, const Scenario& scenario, const ForestModel& pretrained,
                                   const QNetwork* agent, const ModelConfigs& models);

/// ec.repeats matched runs; results ordered by repeat, then random, al_noncontext, al_context.
std::vector<RunResult> compare_policies(const ExperimentConfig& ec, const Scenario& scenario,
                                        const ForestModel& pretrained, const QNetwork& contextual,
                                        const QNetwork& noncontextual, const ModelConfigs& models);

/// Seed of repeat `repeat` under the experiment's master seed.
std::uint64_t repeat_seed(const ExperimentConfig& ec, int repeat);

/// Query count at the first trajectory point whose trailing-mean recall
/// (over `window` points) reaches target; nullopt when never reached.
std::optional<long long> first_query_count_at(const RunResult& run, double target, int window);

struct QueriesToTarget {
    Policy policy = Policy::Random;
    double mean = 0;  // over repeats that reached the target
    double stddev = 0;
    int reached = 0;
    int not_reached = 0;
    /// Mean with every miss counted at its total query count (a lower bound).
    double censored_mean = 0;
};

std::vector<QueriesToTarget> queries_to_target(std::span<const RunResult> results, double target, int window);

/// Recall at the first point with at least `labels` labels; nullopt when never reached.
std::optional<double> recall_at_labels(const RunResult& run, long long labels);

std::string build_stamp();

/// Writers for the run directory. Each CSV starts with a `# <stamp> master_seed=<n>` line.
void write_results_csv(std::ostream& out, std::span<const RunResult> results, double target, int window,
                       std::uint64_t master_seed);
void write_trajectories_csv(std::ostream& out, std::span<const RunResult> results, std::uint64_t master_seed);
void write_summary_csv(std::ostream& out, std::span<const RunResult> results, double target, int window,
                       std::uint64_t master_seed);
void write_response_rates_csv(std::ostream& out, std::span<const RunResult> results, std::uint64_t master_seed);

}  // namespace caal
