#include "caal/dqn_agent.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "caal/csv.hpp"
#include "caal/errors.hpp"

namespace caal {

void DqnConfig::validate() const {
    if (!(discount >= 0 && discount <= 1)) throw ConfigError("dqn.discount must be in [0,1]");
    if (!(epsilon >= 0 && epsilon <= 1)) throw ConfigError("dqn.epsilon must be in [0,1]");
    if (!(train_epsilon >= 0 && train_epsilon <= 1)) throw ConfigError("dqn.train_epsilon must be in [0,1]");
    if (!(learning_rate > 0)) throw ConfigError("dqn.learning_rate must be > 0");
    if (train_steps < 1) throw ConfigError("dqn.train_steps must be >= 1");
    if (batch_size < 1) throw ConfigError("dqn.batch_size must be >= 1");
    if (replay_capacity < 1) throw ConfigError("dqn.replay_capacity must be >= 1");
    if (target_sync_interval < 1) throw ConfigError("dqn.target_sync_interval must be >= 1");
    if (train_interval < 1) throw ConfigError("dqn.train_interval must be >= 1");
    if (hidden_units < 1) throw ConfigError("dqn.hidden_units must be >= 1");
    if (l1 < 0 || l2 < 0) throw ConfigError("dqn.l1 and dqn.l2 must be >= 0");
}

// ---------------------------------------------------------------------------
// QNetwork

QNetwork::QNetwork(std::vector<int> layer_sizes, double l1, double l2)
    : sizes_(std::move(layer_sizes)), l1_(l1), l2_(l2) {
    if (sizes_.size() < 2) throw ConfigError("network needs at least input and output layers");
    for (int s : sizes_)
        if (s < 1) throw ConfigError("layer sizes must be positive");
    if (sizes_.back() != 2) throw ConfigError("Q-network output layer must have 2 units");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        weights_.push_back(Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]));
        biases_.push_back(Eigen::VectorXd::Zero(sizes_[l + 1]));
    }
}

QNetwork QNetwork::initialized(std::vector<int> layer_sizes, double l1, double l2, Rng& rng) {
    QNetwork net(std::move(layer_sizes), l1, l2);
    for (auto& w : net.weights_) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
    }
    return net;
}

Eigen::MatrixXd QNetwork::forward_batch(const Eigen::MatrixXd& inputs) const {
    Eigen::MatrixXd h = inputs;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Eigen::MatrixXd a = (weights_[l] * h).colwise() + biases_[l];
        if (l + 1 < weights_.size()) a = a.cwiseMax(0.0);
        h = std::move(a);
    }
    return h;
}

std::array<double, 2> QNetwork::forward(const AgentState& s) const {
    if (!all_finite()) throw CorruptedModel("Q-network has non-finite parameters");
    if (sizes_.front() != 4) throw ConfigError("Q-network input layer must have 4 units for agent states");
    Eigen::MatrixXd x(4, 1);
    x << s.s1, s.s2, s.s3, s.s4;
    const Eigen::MatrixXd q = forward_batch(x);
    std::array<double, 2> out{q(0, 0), q(1, 0)};
    if (!std::isfinite(out[0]) || !std::isfinite(out[1])) throw CorruptedModel("Q-network produced a non-finite value");
    return out;
}

double QNetwork::loss(const Eigen::MatrixXd& inputs, std::span<const int> actions, const Eigen::VectorXd& targets,
                      Gradients* grad) const {
    const Eigen::Index batch = inputs.cols();
    const std::size_t layers = weights_.size();

    // Forward pass keeping pre-activations.
    std::vector<Eigen::MatrixXd> pre(layers), act(layers + 1);
    act[0] = inputs;
    for (std::size_t l = 0; l < layers; ++l) {
        pre[l] = (weights_[l] * act[l]).colwise() + biases_[l];
        act[l + 1] = (l + 1 < layers) ? Eigen::MatrixXd(pre[l].cwiseMax(0.0)) : pre[l];
    }

    const Eigen::MatrixXd& q = act[layers];
    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(q.rows(), q.cols());
    double data_loss = 0;
    for (Eigen::Index b = 0; b < batch; ++b) {
        const double err = q(actions[static_cast<std::size_t>(b)], b) - targets(b);
        data_loss += 0.5 * err * err;
        dq(actions[static_cast<std::size_t>(b)], b) = err / static_cast<double>(batch);
    }
    data_loss /= static_cast<double>(batch);

    // Kernel penalties on every layer feeding a hidden node.
    double reg = 0;
    for (std::size_t l = 0; l + 1 < layers; ++l)
        reg += l1_ * weights_[l].cwiseAbs().sum() + l2_ * weights_[l].squaredNorm();

    if (grad) {
        grad->weights.resize(layers);
        grad->biases.resize(layers);
        Eigen::MatrixXd delta = dq;
        for (std::size_t li = layers; li-- > 0;) {
            grad->weights[li] = delta * act[li].transpose();
            grad->biases[li] = delta.rowwise().sum();
            if (li + 1 < layers) {
                grad->weights[li] += l1_ * weights_[li].unaryExpr([](double w) {
                    return static_cast<double>((w > 0) - (w < 0));
                });
                grad->weights[li] += 2.0 * l2_ * weights_[li];
            }
            if (li > 0) {
                Eigen::MatrixXd back = weights_[li].transpose() * delta;
                delta = back.cwiseProduct((pre[li - 1].array() > 0.0).cast<double>().matrix());
            }
        }
    }
    return data_loss + reg;
}

std::size_t QNetwork::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l)
        n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    return n;
}

Eigen::VectorXd QNetwork::flat_parameters() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.segment(k, weights_[l].size()) = Eigen::Map<const Eigen::VectorXd>(weights_[l].data(), weights_[l].size());
        k += weights_[l].size();
        out.segment(k, biases_[l].size()) = biases_[l];
        k += biases_[l].size();
    }
    return out;
}

void QNetwork::set_flat_parameters(const Eigen::VectorXd& flat) {
    if (static_cast<std::size_t>(flat.size()) != parameter_count()) throw InvalidInput("parameter vector size mismatch");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Eigen::Map<Eigen::VectorXd>(weights_[l].data(), weights_[l].size()) = flat.segment(k, weights_[l].size());
        k += weights_[l].size();
        biases_[l] = flat.segment(k, biases_[l].size());
        k += biases_[l].size();
    }
}

Eigen::VectorXd QNetwork::flatten(const Gradients& g) {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < g.weights.size(); ++l) n += g.weights[l].size() + g.biases[l].size();
    Eigen::VectorXd out(n);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        out.segment(k, g.weights[l].size()) = Eigen::Map<const Eigen::VectorXd>(g.weights[l].data(), g.weights[l].size());
        k += g.weights[l].size();
        out.segment(k, g.biases[l].size()) = g.biases[l];
        k += g.biases[l].size();
    }
    return out;
}

bool QNetwork::all_finite() const {
    for (std::size_t l = 0; l < weights_.size(); ++l)
        if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
    return true;
}

std::string QNetwork::to_json() const {
    nlohmann::json j;
    j["format"] = "caal-qnet";
    j["version"] = 1;
    j["layers"] = sizes_;
    j["l1"] = l1_;
    j["l2"] = l2_;
    auto& layers = j["parameters"] = nlohmann::json::array();
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        // Row-major kernel: weights[r * cols + c] maps input c to unit r.
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(weights_[l].size()));
        for (Eigen::Index r = 0; r < weights_[l].rows(); ++r)
            for (Eigen::Index c = 0; c < weights_[l].cols(); ++c) w.push_back(weights_[l](r, c));
        std::vector<double> b(biases_[l].data(), biases_[l].data() + biases_[l].size());
        layers.push_back({{"weights", w}, {"bias", b}});
    }
    return j.dump();
}

QNetwork QNetwork::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptedModel(std::string("Q-network checkpoint is not valid JSON: ") + e.what());
    }
    if (j.value("format", "") != "caal-qnet") throw CorruptedModel("not a Q-network checkpoint");
    if (j.value("version", 0) != 1) throw CorruptedModel("unsupported Q-network checkpoint version");
    try {
        QNetwork net(j.at("layers").get<std::vector<int>>(), j.at("l1").get<double>(), j.at("l2").get<double>());
        const auto& layers = j.at("parameters");
        if (layers.size() != net.weights_.size()) throw CorruptedModel("layer count mismatch");
        for (std::size_t l = 0; l < net.weights_.size(); ++l) {
            auto w = layers[l].at("weights").get<std::vector<double>>();
            auto b = layers[l].at("bias").get<std::vector<double>>();
            auto& W = net.weights_[l];
            if (w.size() != static_cast<std::size_t>(W.size()) || b.size() != static_cast<std::size_t>(net.biases_[l].size()))
                throw CorruptedModel("parameter shape mismatch in layer " + std::to_string(l));
            std::size_t k = 0;
            for (Eigen::Index r = 0; r < W.rows(); ++r)
                for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[k++];
            net.biases_[l] = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
        }
        if (!net.all_finite()) throw CorruptedModel("Q-network checkpoint has non-finite parameters");
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptedModel(std::string("malformed Q-network checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
        throw CorruptedModel(std::string("malformed Q-network checkpoint: ") + e.what());
    }
}

void QNetwork::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << to_json() << '\n';
}

QNetwork QNetwork::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read Q-network checkpoint " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

// ---------------------------------------------------------------------------
// Adam

AdamOptimizer::AdamOptimizer(const QNetwork& net, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        m_.weights.push_back(Eigen::MatrixXd::Zero(net.weight(l).rows(), net.weight(l).cols()));
        v_.weights.push_back(Eigen::MatrixXd::Zero(net.weight(l).rows(), net.weight(l).cols()));
        m_.biases.push_back(Eigen::VectorXd::Zero(net.bias(l).size()));
        v_.biases.push_back(Eigen::VectorXd::Zero(net.bias(l).size()));
    }
}

void AdamOptimizer::step(QNetwork& net, const QNetwork::Gradients& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        update(net.weight(l), grad.weights[l], m_.weights[l], v_.weights[l]);
        update(net.bias(l), grad.biases[l], m_.biases[l], v_.biases[l]);
    }
}

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be >= 1");
}

void ReplayBuffer::push(const Transition& t) {
    if (!std::isfinite(t.r)) throw InvalidInput("transition reward must be finite");
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(t);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
    if (items_.empty()) return {};
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<std::size_t> out(batch);
    for (auto& i : out) i = pick(rng);
    return out;
}

// ---------------------------------------------------------------------------
// Policy and Bellman rule

Action greedy_action(const std::array<double, 2>& q) { return q[1] > q[0] ? Action::Query : Action::NoQuery; }

Action select_action(const QNetwork& net, const AgentState& s, double epsilon, Rng& rng) {
    if (epsilon > 0 && bernoulli(rng, epsilon)) return Action::Query;
    return greedy_action(net.forward(s));
}

double bellman_target(double r, double q_next_max, double q_current, const DqnConfig& cfg) {
    if (cfg.bellman_mode == BellmanMode::PaperLiteral)
        return (1.0 - cfg.learning_rate) * q_current + cfg.discount * (r + cfg.learning_rate * q_next_max);
    return r + cfg.discount * q_next_max;
}

double tabular_update(double q_current, double r, double q_next_max, const DqnConfig& cfg) {
    if (cfg.bellman_mode == BellmanMode::PaperLiteral) return bellman_target(r, q_next_max, q_current, cfg);
    return q_current + cfg.learning_rate * (bellman_target(r, q_next_max, q_current, cfg) - q_current);
}

// ---------------------------------------------------------------------------
// Episode environment

AgentState uncertainty_view(const AgentState& s) { return AgentState{s.s1, 0.0, 0.0, 0.0}; }

EpisodeEnvironment::EpisodeEnvironment(std::vector<EpisodeStep> steps, RewardConfig reward)
    : steps_(std::move(steps)), reward_(reward) {
    if (steps_.empty()) throw ConfigError("episode source is empty");
    reward_.validate();
}

AgentState EpisodeEnvironment::state_at(std::size_t i) const {
    const auto& st = steps_[i];
    double since = minutes_since_query_;
    if (i > 0 && std::isfinite(since)) since += static_cast<double>(st.timestamp - steps_[i - 1].timestamp);
    ResponseProfile p;
    p.rate[hour_of_day(st.timestamp)] = st.response_rate;
    AgentState s = build_state(st.raw_score, since, p, st.timestamp);
    return reward_.uncertainty_only ? uncertainty_view(s) : s;
}

AgentState EpisodeEnvironment::reset() {
    pos_ = 0;
    minutes_since_query_ = kNoPreviousQuery;
    return state_at(0);
}

StepResult EpisodeEnvironment::step(Action a) {
    const AgentState s = state_at(pos_);
    StepResult out;
    out.reward = caal::reward(s, a, reward_);
    // Track the gap as of the current step, then advance.
    if (a == Action::Query) minutes_since_query_ = 0;
    else if (pos_ > 0 && std::isfinite(minutes_since_query_))
        minutes_since_query_ += static_cast<double>(steps_[pos_].timestamp - steps_[pos_ - 1].timestamp);
    ++pos_;
    if (pos_ >= steps_.size()) {
        out.terminal = true;
        out.next = s;
        return out;
    }
    out.next = state_at(pos_);
    return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

Eigen::MatrixXd stack_states(const ReplayBuffer& buf, std::span<const std::size_t> idx, bool next) {
    Eigen::MatrixXd m(4, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto& t = buf.at(idx[b]);
        const auto s = (next ? t.s_next : t.s).to_array();
        for (int k = 0; k < 4; ++k) m(k, static_cast<Eigen::Index>(b)) = s[static_cast<std::size_t>(k)];
    }
    return m;
}

}  // namespace

TrainingResult train_offline(Environment& env, const DqnConfig& cfg) {
    cfg.validate();
    Rng init_rng(derive_seed(cfg.seed, 1));
    return train_offline(QNetwork::initialized({4, cfg.hidden_units, cfg.hidden_units, 2}, cfg.l1, cfg.l2, init_rng),
                         env, cfg);
}

TrainingResult train_offline(QNetwork initial, Environment& env, const DqnConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, 2));
    QNetwork online = std::move(initial);
    QNetwork target = online;
    AdamOptimizer adam(online, cfg.learning_rate);
    ReplayBuffer buffer(static_cast<std::size_t>(cfg.replay_capacity));

    TrainingResult result{online, {}, {}};
    AgentState s = env.reset();
    double episode_reward = 0, loss_sum = 0;
    long long loss_count = 0, episode = 0;
    std::vector<int> actions(static_cast<std::size_t>(cfg.batch_size));
    Eigen::VectorXd targets(cfg.batch_size);
    QNetwork::Gradients grad;

    for (long long step = 1; step <= cfg.train_steps; ++step) {
        Action a;
        if (cfg.train_epsilon > 0 && bernoulli(rng, cfg.train_epsilon))
            a = bernoulli(rng, 0.5) ? Action::Query : Action::NoQuery;
        else
            a = greedy_action(online.forward(s));

        const StepResult res = env.step(a);
        buffer.push({s, a, res.reward, res.next, res.terminal});
        episode_reward += res.reward;

        if (buffer.size() >= static_cast<std::size_t>(cfg.batch_size) && step % cfg.train_interval == 0) {
            const auto idx = buffer.sample_indices(static_cast<std::size_t>(cfg.batch_size), rng);
            const Eigen::MatrixXd x = stack_states(buffer, idx, false);
            const Eigen::MatrixXd q_next = target.forward_batch(stack_states(buffer, idx, true));
            Eigen::MatrixXd q_now;
            if (cfg.bellman_mode == BellmanMode::PaperLiteral) q_now = target.forward_batch(x);
            for (std::size_t b = 0; b < idx.size(); ++b) {
                const auto& t = buffer.at(idx[b]);
                const auto col = static_cast<Eigen::Index>(b);
                const int act = static_cast<int>(t.a);
                const double next_max = t.terminal ? 0.0 : q_next.col(col).maxCoeff();
                const double current = q_now.size() ? q_now(act, col) : 0.0;
                actions[b] = act;
                targets(col) = bellman_target(t.r, next_max, current, cfg);
            }
            loss_sum += online.loss(x, actions, targets, &grad);
            ++loss_count;
            adam.step(online, grad);
            if (!online.all_finite()) throw TrainingError("Q-network diverged to non-finite parameters");
        }
        if (step % cfg.target_sync_interval == 0) target = online;

        if (res.terminal) {
            result.episode_rewards.push_back(episode_reward);
            result.log.push_back({step, episode, cfg.train_epsilon, loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0,
                                  episode_reward});
            ++episode;
            episode_reward = 0;
            loss_sum = 0;
            loss_count = 0;
            s = env.reset();
        } else {
            s = res.next;
        }
    }
    result.network = std::move(online);
    return result;
}

void write_training_log(std::ostream& out, std::span<const TrainingLogRow> rows) {
    csv::Writer w(out);
    w.header({"step", "episode", "epsilon", "loss", "episode_reward"});
    for (const auto& r : rows) {
        w.field(r.step).field(r.episode).field(r.epsilon).field(r.loss).field(r.episode_reward);
        w.end_row();
    }
}

}  // namespace caal
