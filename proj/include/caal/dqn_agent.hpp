#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "caal/reward_engine.hpp"
#include "caal/rng.hpp"
#include "caal/state_builder.hpp"

namespace caal {

enum class BellmanMode { Conventional, PaperLiteral };

struct DqnConfig {
    double learning_rate = 1e-3;
    double discount = 0.9;
    /// Forced-query probability of the deployed policy.
    double epsilon = 0.05;
    /// Uniform-random action probability while training offline.
    double train_epsilon = 0.1;
    long long train_steps = 200000;
    int batch_size = 32;
    int replay_capacity = 10000;
    int target_sync_interval = 500;
    /// Environment steps between gradient updates.
    int train_interval = 1;
    int hidden_units = 128;
    double l1 = 1e-5;
    double l2 = 1e-5;
    BellmanMode bellman_mode = BellmanMode::Conventional;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Fully connected Q-value approximator: rectifier hidden layers, identity output.
class QNetwork {
public:
    struct Gradients {
        std::vector<Eigen::MatrixXd> weights;
        std::vector<Eigen::VectorXd> biases;
    };

    /// All parameters zero.
    explicit QNetwork(std::vector<int> layer_sizes = {4, 128, 128, 2}, double l1 = 0, double l2 = 0);

    /// He-uniform weights, zero biases.
    static QNetwork initialized(std::vector<int> layer_sizes, double l1, double l2, Rng& rng);

    /// (Q(s, no query), Q(s, query)). Throws CorruptedModel on non-finite parameters or output.
    std::array<double, 2> forward(const AgentState& s) const;
    /// Column-per-sample batch evaluation, no finiteness check.
    Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;

    /// Mean over the batch of 0.5 (Q(s_b, a_b) - y_b)^2 plus l1/l2 penalties on
    /// hidden-layer kernels. Fills `grad` when non-null.
    double loss(const Eigen::MatrixXd& inputs, std::span<const int> actions, const Eigen::VectorXd& targets,
                Gradients* grad) const;

    const std::vector<int>& layer_sizes() const { return sizes_; }
    std::size_t layer_count() const { return weights_.size(); }
    Eigen::MatrixXd& weight(std::size_t layer) { return weights_[layer]; }
    Eigen::VectorXd& bias(std::size_t layer) { return biases_[layer]; }
    const Eigen::MatrixXd& weight(std::size_t layer) const { return weights_[layer]; }
    const Eigen::VectorXd& bias(std::size_t layer) const { return biases_[layer]; }
    double l1() const { return l1_; }
    double l2() const { return l2_; }

    std::size_t parameter_count() const;
    Eigen::VectorXd flat_parameters() const;
    void set_flat_parameters(const Eigen::VectorXd& flat);
    static Eigen::VectorXd flatten(const Gradients& g);
    bool all_finite() const;

    void save(const std::filesystem::path& path) const;
    static QNetwork load(const std::filesystem::path& path);
    std::string to_json() const;
    static QNetwork from_json(const std::string& text);

private:
    std::vector<int> sizes_;
    std::vector<Eigen::MatrixXd> weights_;
    std::vector<Eigen::VectorXd> biases_;
    double l1_;
    double l2_;
};

/// Adaptive moment estimation with the usual decay constants.
class AdamOptimizer {
public:
    AdamOptimizer(const QNetwork& net, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step(QNetwork& net, const QNetwork::Gradients& grad);

private:
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    QNetwork::Gradients m_, v_;
};

struct Transition {
    AgentState s;
    Action a = Action::NoQuery;
    double r = 0;
    AgentState s_next;
    bool terminal = false;
};

/// Fixed-capacity FIFO experience store with uniform sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);
    void push(const Transition& t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return items_[i]; }
    std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;

private:
    std::size_t capacity_;
    std::deque<Transition> items_;
};

/// Epsilon here forces action Query; otherwise argmax with ties going to NoQuery.
Action select_action(const QNetwork& net, const AgentState& s, double epsilon, Rng& rng);
Action greedy_action(const std::array<double, 2>& q);

/// Regression target for Q(s,a). Conventional: r + gamma * q_next_max.
/// PaperLiteral: (1 - alpha) q_current + gamma (r + alpha q_next_max).
double bellman_target(double r, double q_next_max, double q_current, const DqnConfig& cfg);
/// Tabular one-step update of a stored Q-value under the selected rule.
double tabular_update(double q_current, double r, double q_next_max, const DqnConfig& cfg);

struct StepResult {
    double reward = 0;
    AgentState next;
    bool terminal = false;
};

/// An episodic environment the agent trains against. reset() restarts the episode.
class Environment {
public:
    virtual ~Environment() = default;
    virtual AgentState reset() = 0;
    virtual StepResult step(Action a) = 0;
};

/// One element of an offline episode.
struct EpisodeStep {
    double raw_score = 0;
    Minutes timestamp = 0;
    double response_rate = 0.5;
};

/// Replays a recorded sequence, rebuilding s2 from the agent's own query history
/// and scoring actions with the reward function. With reward uncertainty_only
/// the context components of the state are zeroed.
class EpisodeEnvironment : public Environment {
public:
    EpisodeEnvironment(std::vector<EpisodeStep> steps, RewardConfig reward);
    AgentState reset() override;
    StepResult step(Action a) override;
    std::size_t length() const { return steps_.size(); }

private:
    AgentState state_at(std::size_t i) const;

    std::vector<EpisodeStep> steps_;
    RewardConfig reward_;
    std::size_t pos_ = 0;
    double minutes_since_query_ = kNoPreviousQuery;
};

/// Zeroes s2..s4: the view of a non-contextual agent.
AgentState uncertainty_view(const AgentState& s);

struct TrainingLogRow {
    long long step = 0;
    long long episode = 0;
    double epsilon = 0;
    double loss = 0;
    double episode_reward = 0;
};

struct TrainingResult {
    QNetwork network;
    std::vector<TrainingLogRow> log;
    std::vector<double> episode_rewards;
};

/// Deep Q-learning against `env` for cfg.train_steps steps with experience
/// replay and a periodically synchronized target network.
TrainingResult train_offline(Environment& env, const DqnConfig& cfg);
TrainingResult train_offline(QNetwork initial, Environment& env, const DqnConfig& cfg);

/// CSV: step,episode,epsilon,loss,episode_reward.
void write_training_log(std::ostream& out, std::span<const TrainingLogRow> rows);

}  // namespace caal
