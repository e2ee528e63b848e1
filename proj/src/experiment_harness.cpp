#include "caal/experiment_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <ostream>
#include <exception>
#include <mutex>
#include <thread>

#include "caal/csv.hpp"
#include "caal/errors.hpp"

#ifndef CAAL_VERSION
#define CAAL_VERSION "0.0.0"
#endif
#ifndef CAAL_GIT_DESCRIBE
#define CAAL_GIT_DESCRIBE "unknown"
#endif

namespace caal {

std::string_view policy_name(Policy p) {
    switch (p) {
        case Policy::Random: return "random";
        case Policy::AlNonContext: return "al_noncontext";
        case Policy::AlContext: return "al_context";
    }
    return "?";
}

Policy parse_policy(std::string_view name) {
    for (Policy p : kAllPolicies)
        if (policy_name(p) == name) return p;
    throw ConfigError("unknown policy '" + std::string(name) + "' (expected random, al_noncontext or al_context)");
}

std::string build_stamp() { return std::string("caal ") + CAAL_VERSION + " (" + CAAL_GIT_DESCRIBE + ")"; }

SubjectOverrides ScenarioConfig::default_target_overrides() {
    SubjectOverrides o;
    o.subject_id = 999;
    o.baseline_ibi_mean_ms = 840;
    o.interval_sd_ms = 65;
    o.stress_ibi_shift_ms = -90;
    o.hrv_suppression = 0.65;
    o.br_baseline = 16.5;
    o.stress_br_shift = 2.0;
    o.intensity_noise = 0.15;
    o.target_minority_ratio = 0.2;
    // Answers before and after working hours, rarely during work or at night.
    std::array<double, 24> resp{};
    for (int h = 0; h < 24; ++h)
        resp[static_cast<std::size_t>(h)] = (h >= 6 && h < 9) || (h >= 17 && h < 23) ? 0.9 : 0.1;
    o.responsiveness = resp;
    return o;
}

void ScenarioConfig::validate() const {
    if (n_pretrain_subjects < 1) throw ConfigError("scenario.n_pretrain_subjects must be >= 1");
    if (pretrain_labels_per_subject < 1 || pretrain_slots_per_subject < pretrain_labels_per_subject)
        throw ConfigError("scenario.pretrain_slots_per_subject must be >= pretrain_labels_per_subject >= 1");
    if (stream_length_slots < 2) throw ConfigError("scenario.stream_length_slots must be >= 2");
    if (episode_slots < 1) throw ConfigError("scenario.episode_slots must be >= 1");
    scheme.validate();
}

void ExperimentConfig::validate() const {
    if (update_cadence < 1) throw ConfigError("experiment.update_cadence must be >= 1");
    if (!(test_holdout_fraction > 0 && test_holdout_fraction < 1))
        throw ConfigError("experiment.test_holdout_fraction must be in (0,1)");
    if (repeats < 1) throw ConfigError("experiment.repeats must be >= 1");
    if (!(random_query_rate >= 0 && random_query_rate <= 1)) throw ConfigError("experiment.random_query_rate must be in [0,1]");
    if (!(response_smoothing > 0 && response_smoothing <= 1)) throw ConfigError("experiment.response_smoothing must be in (0,1]");
    if (!(response_prior >= 0 && response_prior <= 1)) throw ConfigError("experiment.response_prior must be in [0,1]");
    if (recall_smoothing_window < 1) throw ConfigError("experiment.recall_smoothing_window must be >= 1");
    if (parallel < 0) throw ConfigError("experiment.parallel must be >= 0");
    if (label_budget < 0) throw ConfigError("experiment.label_budget must be >= 0");
}

// ---------------------------------------------------------------------------
// Scenario and pretraining

namespace {

constexpr std::uint64_t kLabelPick = 0x6c61626c;

std::vector<SubjectProfile> make_population(const ScenarioConfig& sc) {
    std::vector<SubjectProfile> pop;
    for (int i = 0; i < sc.n_pretrain_subjects; ++i) {
        SubjectOverrides o;
        o.subject_id = i + 1;
        pop.push_back(generate_subject(derive_seed(sc.population_seed, static_cast<std::uint64_t>(i)), o));
    }
    return pop;
}

}  // namespace

Dataset pooled_dataset(std::span<const SubjectProfile> population, int slots_per_subject, int labels_per_subject,
                       const LabelScheme& scheme) {
    Dataset data;
    for (const auto& p : population) {
        const auto stream = step_stream(p, static_cast<std::size_t>(slots_per_subject));
        std::vector<std::size_t> idx(stream.size());
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(derive_seed(p.seed, kLabelPick));
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(labels_per_subject));
        std::sort(idx.begin(), idx.end());
        for (auto i : idx) {
            if (auto y = map_label(reported_level(p, stream[i]), scheme)) data.add(stream[i].features, *y);
        }
    }
    return data;
}

ForestModel pretrain(std::span<const SubjectProfile> population, const SubjectProfile& held_out,
                     const ScenarioConfig& sc, const ForestConfig& forest) {
    if (population.empty()) throw ConfigError("pretraining population is empty");
    for (const auto& p : population)
        if (p.seed == held_out.seed && p.subject_id == held_out.subject_id)
            throw ConfigError("held-out subject is part of the pretraining population");
    return train_forest(pooled_dataset(population, sc.pretrain_slots_per_subject, sc.pretrain_labels_per_subject, sc.scheme),
                        forest);
}

Scenario prepare_scenario(const ScenarioConfig& sc, const ExperimentConfig& ec) {
    sc.validate();
    ec.validate();
    Scenario s;
    s.scheme = sc.scheme;
    s.population = make_population(sc);
    s.target = generate_subject(sc.target_seed, sc.target);
    s.pretrain_data = pooled_dataset(s.population, sc.pretrain_slots_per_subject, sc.pretrain_labels_per_subject, sc.scheme);
    s.stream = step_stream(s.target, sc.stream_length_slots);
    const auto n = s.stream.size();
    const auto tail = static_cast<std::size_t>(std::llround(ec.test_holdout_fraction * static_cast<double>(n)));
    s.train_end = n - tail;
    if (s.train_end < static_cast<std::size_t>(ec.update_cadence))
        throw ConfigError("stream is shorter than one update cadence of " + std::to_string(ec.update_cadence) + " instances");
    for (std::size_t i = s.train_end; i < n; ++i)
        if (auto y = map_label(reported_level(s.target, s.stream[i]), sc.scheme)) s.test_data.add(s.stream[i].features, *y);
    if (s.test_data.count(1) == 0) throw ConfigError("test tail holds no stressed instances; lengthen the stream");
    return s;
}

std::vector<EpisodeStep> agent_episode(const ScenarioConfig& sc, const ForestModel& pretrained) {
    SubjectOverrides o;
    o.subject_id = 1999;
    const auto subject = generate_subject(sc.episode_seed, o);
    const auto stream = step_stream(subject, sc.episode_slots);
    Rng rng(derive_seed(sc.episode_seed, 0x65706973));
    std::vector<EpisodeStep> steps;
    steps.reserve(stream.size());
    double rate = 0;
    long long last_bucket = -1;
    for (const auto& inst : stream) {
        const long long bucket = inst.timestamp / 60;
        if (bucket != last_bucket) {
            rate = uniform01(rng);
            last_bucket = bucket;
        }
        steps.push_back({pretrained.predict_raw(inst.features), inst.timestamp, rate});
    }
    return steps;
}

TrainingResult train_agent(std::span<const EpisodeStep> episode, bool contextual, const ModelConfigs& models) {
    RewardConfig reward = models.reward;
    reward.uncertainty_only = !contextual;
    EpisodeEnvironment env(std::vector<EpisodeStep>(episode.begin(), episode.end()), reward);
    DqnConfig dqn = models.dqn;
    dqn.seed = derive_seed(dqn.seed, contextual ? 1 : 0);
    return train_offline(env, dqn);
}

// ---------------------------------------------------------------------------
// Policy runs

double RunResult::answered_ratio() const {
    return queries_issued ? static_cast<double>(labels_obtained) / static_cast<double>(queries_issued) : 0.0;
}

std::uint64_t repeat_seed(const ExperimentConfig& ec, int repeat) {
    return derive_seed(ec.seed, static_cast<std::uint64_t>(repeat));
}

namespace {

class PolicyRunner {
public:
    PolicyRunner(Policy policy, const ExperimentConfig& ec, const Scenario& sc, const ForestModel& pretrained,
                 const QNetwork* agent, const ModelConfigs& models, int repeat,
                 const std::vector<double>& response_draws)
        : policy_(policy),
          ec_(ec),
          sc_(sc),
          agent_(agent),
          models_(models),
          draws_(response_draws),
          rng_(derive_seed(repeat_seed(ec, repeat), 0x100 + static_cast<std::uint64_t>(policy))),
          profile_(ResponseProfile::uniform(ec.response_prior)),
          model_(pretrained),
          personal_(sc.pretrain_data.n_features()) {
        if (policy != Policy::Random && agent == nullptr)
            throw ConfigError(std::string(policy_name(policy)) + " policy needs a trained agent");
        result_.policy = policy;
        result_.repeat = repeat;
        result_.seed = repeat_seed(ec, repeat);
        result_.recall_trajectory.push_back({0, 0, 0, evaluate_recall(model_, sc.test_data)});
    }

    Policy policy() const { return policy_; }
    Rng& rng() { return rng_; }

    /// Candidate instances of [begin, end) this policy would query.
    std::vector<std::size_t> propose(std::size_t begin, std::size_t end) {
        std::vector<std::size_t> out;
        if (policy_ == Policy::Random) {
            for (std::size_t i = begin; i < end; ++i)
                if (bernoulli(rng_, ec_.random_query_rate)) out.push_back(i);
            return out;
        }
        std::optional<Minutes> last = last_query_;
        for (std::size_t i = begin; i < end; ++i) {
            const auto& inst = sc_.stream[i];
            const double since = last ? static_cast<double>(inst.timestamp - *last) : kNoPreviousQuery;
            AgentState s = build_state(model_.predict_raw(inst.features), since, profile_, inst.timestamp);
            if (policy_ == Policy::AlNonContext) s = uncertainty_view(s);
            if (select_action(*agent_, s, models_.dqn.epsilon, rng_) == Action::Query) {
                out.push_back(i);
                last = inst.timestamp;
            }
        }
        return out;
    }

    /// Uniform subset of `count` candidates, order preserved.
    std::vector<std::size_t> downsample(std::vector<std::size_t> picks, std::size_t count) {
        if (picks.size() <= count) return picks;
        std::shuffle(picks.begin(), picks.end(), rng_);
        picks.resize(count);
        std::sort(picks.begin(), picks.end());
        return picks;
    }

    /// Uniform `count` instances of [begin, end).
    std::vector<std::size_t> uniform_pick(std::size_t begin, std::size_t end, std::size_t count) {
        std::vector<std::size_t> all(end - begin);
        std::iota(all.begin(), all.end(), begin);
        return downsample(std::move(all), count);
    }

    void issue(const std::vector<std::size_t>& picks) {
        for (auto i : picks) {
            if (i >= sc_.train_end) throw ContractViolation("query issued for a test-tail instance");
            const auto& inst = sc_.stream[i];
            const int hour = hour_of_day(inst.timestamp);
            const bool answered = draws_[i] < sc_.target.responsiveness[static_cast<std::size_t>(hour)];
            events_.push_back({hour, true, answered});
            ++block_issued_;
            ++result_.queries_issued;
            last_query_ = inst.timestamp;
            if (!answered) continue;
            ++block_answered_;
            ++result_.labels_obtained;
            if (auto y = map_label(reported_level(sc_.target, inst), sc_.scheme)) {
                personal_.add(inst.features, *y);
                personal_index_.push_back(i);
                result_.stressed_labels += *y;
                ++pending_labels_;
            }
        }
    }

    void end_step(int step) {
        profile_ = update_response_profile(profile_, events_, ec_.response_smoothing);
        events_.clear();
        result_.response_rate_series.push_back({step, block_issued_, block_answered_});
        block_issued_ = block_answered_ = 0;

        double recall = result_.recall_trajectory.back().recall;
        if (pending_labels_ > 0) {
            for (auto i : personal_index_)
                if (i >= sc_.train_end) throw ContractViolation("test-tail label leaked into retraining");
            Dataset data = sc_.pretrain_data;
            data.append(personal_);
            ForestConfig fc = models_.forest;
            fc.seed = derive_seed(result_.seed, static_cast<std::uint64_t>(step));
            model_ = train_forest(data, fc);
            recall = evaluate_recall(model_, sc_.test_data);
            pending_labels_ = 0;
        }
        result_.recall_trajectory.push_back({step, result_.queries_issued, result_.labels_obtained, recall});
    }

    bool budget_spent() const { return ec_.label_budget > 0 && result_.labels_obtained >= ec_.label_budget; }

    RunResult finish() {
        result_.final_profile = profile_;
        return std::move(result_);
    }

private:
    Policy policy_;
    const ExperimentConfig& ec_;
    const Scenario& sc_;
    const QNetwork* agent_;
    const ModelConfigs& models_;
    const std::vector<double>& draws_;
    Rng rng_;
    ResponseProfile profile_;
    ForestModel model_;
    Dataset personal_;
    std::vector<std::size_t> personal_index_;
    std::vector<ResponseEvent> events_;
    std::optional<Minutes> last_query_;
    long long block_issued_ = 0, block_answered_ = 0;
    int pending_labels_ = 0;
    RunResult result_;
};

// Shared per-instance uniforms: a given instance gets the same answer under every policy.
std::vector<double> response_draws(const ExperimentConfig& ec, const Scenario& sc, int repeat) {
    Rng rng(derive_seed(repeat_seed(ec, repeat), 0x72657370));
    std::vector<double> u(sc.stream.size());
    for (auto& x : u) x = uniform01(rng);
    return u;
}

}  // namespace

RunResult run_policy(const ExperimentConfig& ec, const Scenario& scenario, const ForestModel& pretrained,
                     const QNetwork* agent, const ModelConfigs& models, int repeat) {
    ec.validate();
    const auto draws = response_draws(ec, scenario, repeat);
    PolicyRunner runner(ec.policy, ec, scenario, pretrained, agent, models, repeat, draws);
    const auto k = static_cast<std::size_t>(ec.update_cadence);
    int step = 0;
    for (std::size_t begin = 0; begin + k <= scenario.train_end; begin += k) {
        runner.issue(runner.propose(begin, begin + k));
        runner.end_step(++step);
        if (runner.budget_spent()) break;
    }
    return runner.finish();
}

std::array<RunResult, 3> run_matched(const ExperimentConfig& ec, const Scenario& scenario,
                                     const ForestModel& pretrained, const QNetwork& contextual,
                                     const QNetwork& noncontextual, const ModelConfigs& models, int repeat) {
    ec.validate();
    const auto draws = response_draws(ec, scenario, repeat);
    PolicyRunner random(Policy::Random, ec, scenario, pretrained, nullptr, models, repeat, draws);
    PolicyRunner noncontext(Policy::AlNonContext, ec, scenario, pretrained, &noncontextual, models, repeat, draws);
    PolicyRunner context(Policy::AlContext, ec, scenario, pretrained, &contextual, models, repeat, draws);

    const auto k = static_cast<std::size_t>(ec.update_cadence);
    int step = 0;
    for (std::size_t begin = 0; begin + k <= scenario.train_end; begin += k) {
        const std::size_t end = begin + k;
        auto pick_n = noncontext.propose(begin, end);
        auto pick_c = context.propose(begin, end);
        if (ec.query_budget_matching) {
            const std::size_t budget = std::min(pick_n.size(), pick_c.size());
            pick_n = noncontext.downsample(std::move(pick_n), budget);
            pick_c = context.downsample(std::move(pick_c), budget);
            random.issue(random.uniform_pick(begin, end, budget));
        } else {
            random.issue(random.propose(begin, end));
        }
        noncontext.issue(pick_n);
        context.issue(pick_c);
        ++step;
        random.end_step(step);
        noncontext.end_step(step);
        context.end_step(step);
        if (random.budget_spent() && noncontext.budget_spent() && context.budget_spent()) break;
    }
    return {random.finish(), noncontext.finish(), context.finish()};
}

namespace {

// Calls fn(i) for i in [0, n) on up to `threads` workers (0 = hardware concurrency).
template <class Fn>
void parallel_for(int n, int threads, Fn fn) {
    int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, std::max(1, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<RunResult> run_repeats(const ExperimentConfig& ec, const Scenario& scenario, const ForestModel& pretrained,
                                   const QNetwork* agent, const ModelConfigs& models) {
    ec.validate();
    std::vector<RunResult> out(static_cast<std::size_t>(ec.repeats));
    parallel_for(ec.repeats, ec.parallel, [&](int r) {
        out[static_cast<std::size_t>(r)] = run_policy(ec, scenario, pretrained, agent, models, r);
    });
    return out;
}

std::vector<RunResult> compare_policies(const ExperimentConfig& ec, const Scenario& scenario,
                                        const ForestModel& pretrained, const QNetwork& contextual,
                                        const QNetwork& noncontextual, const ModelConfigs& models) {
    ec.validate();
    std::vector<std::array<RunResult, 3>> runs(static_cast<std::size_t>(ec.repeats));
    parallel_for(ec.repeats, ec.parallel, [&](int r) {
        runs[static_cast<std::size_t>(r)] = run_matched(ec, scenario, pretrained, contextual, noncontextual, models, r);
    });
    std::vector<RunResult> out;
    out.reserve(runs.size() * 3);
    for (auto& trio : runs)
        for (auto& r : trio) out.push_back(std::move(r));
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation

std::optional<long long> first_query_count_at(const RunResult& run, double target, int window) {
    const auto& tr = run.recall_trajectory;
    double sum = 0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        sum += tr[i].recall;
        if (i >= static_cast<std::size_t>(window)) sum -= tr[i - static_cast<std::size_t>(window)].recall;
        const auto n = static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
        if (sum / n >= target - 1e-12) return tr[i].queries;
    }
    return std::nullopt;
}

std::vector<QueriesToTarget> queries_to_target(std::span<const RunResult> results, double target, int window) {
    std::vector<QueriesToTarget> out;
    for (Policy p : kAllPolicies) {
        std::vector<double> hits;
        double censored = 0;
        int total = 0;
        for (const auto& r : results) {
            if (r.policy != p) continue;
            ++total;
            if (auto q = first_query_count_at(r, target, window)) {
                hits.push_back(static_cast<double>(*q));
                censored += static_cast<double>(*q);
            } else {
                censored += static_cast<double>(r.queries_issued);
            }
        }
        if (total == 0) continue;
        QueriesToTarget q;
        q.policy = p;
        q.reached = static_cast<int>(hits.size());
        q.not_reached = total - q.reached;
        q.censored_mean = censored / total;
        if (!hits.empty()) {
            q.mean = std::accumulate(hits.begin(), hits.end(), 0.0) / static_cast<double>(hits.size());
            double var = 0;
            for (double h : hits) var += (h - q.mean) * (h - q.mean);
            q.stddev = std::sqrt(var / static_cast<double>(hits.size()));
        }
        out.push_back(q);
    }
    return out;
}

std::optional<double> recall_at_labels(const RunResult& run, long long labels) {
    for (const auto& p : run.recall_trajectory)
        if (p.labels >= labels) return p.recall;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Writers

namespace {

void stamp(csv::Writer& w, std::uint64_t master_seed) {
    w.comment(build_stamp() + " master_seed=" + std::to_string(master_seed));
}

}  // namespace

void write_results_csv(std::ostream& out, std::span<const RunResult> results, double target, int window,
                       std::uint64_t master_seed) {
    csv::Writer w(out);
    stamp(w, master_seed);
    w.header({"repeat", "policy", "seed", "queries_issued", "labels_obtained", "answered_ratio", "pretrained_recall",
              "final_recall", "queries_to_target"});
    for (const auto& r : results) {
        w.field(r.repeat).field(policy_name(r.policy)).field(std::to_string(r.seed));
        w.field(r.queries_issued).field(r.labels_obtained).field(r.answered_ratio());
        w.field(r.pretrained_recall()).field(r.recall_trajectory.back().recall);
        if (auto q = first_query_count_at(r, target, window)) w.field(*q);
        else w.field(std::string_view("not_reached"));
        w.end_row();
    }
}

void write_trajectories_csv(std::ostream& out, std::span<const RunResult> results, std::uint64_t master_seed) {
    csv::Writer w(out);
    stamp(w, master_seed);
    w.header({"repeat", "policy", "step", "queries", "labels", "recall"});
    for (const auto& r : results)
        for (const auto& p : r.recall_trajectory) {
            w.field(r.repeat).field(policy_name(r.policy)).field(p.step).field(p.queries).field(p.labels).field(p.recall);
            w.end_row();
        }
}

void write_summary_csv(std::ostream& out, std::span<const RunResult> results, double target, int window,
                       std::uint64_t master_seed) {
    csv::Writer w(out);
    stamp(w, master_seed);
    w.header({"policy", "repeats", "target_recall", "mean_queries_to_target", "std_queries_to_target", "reached",
              "not_reached", "censored_mean_queries", "mean_queries_issued", "mean_labels", "mean_answered_ratio",
              "mean_pretrained_recall", "mean_final_recall"});
    for (const auto& q : queries_to_target(results, target, window)) {
        double queries = 0, labels = 0, ratio = 0, pre = 0, fin = 0;
        int n = 0;
        for (const auto& r : results) {
            if (r.policy != q.policy) continue;
            ++n;
            queries += static_cast<double>(r.queries_issued);
            labels += static_cast<double>(r.labels_obtained);
            ratio += r.answered_ratio();
            pre += r.pretrained_recall();
            fin += r.recall_trajectory.back().recall;
        }
        w.field(policy_name(q.policy)).field(n).field(target).field(q.mean).field(q.stddev).field(q.reached);
        w.field(q.not_reached).field(q.censored_mean).field(queries / n).field(labels / n).field(ratio / n);
        w.field(pre / n).field(fin / n);
        w.end_row();
    }
}

void write_response_rates_csv(std::ostream& out, std::span<const RunResult> results, std::uint64_t master_seed) {
    csv::Writer w(out);
    stamp(w, master_seed);
    w.header({"policy", "step", "issued", "answered", "answered_ratio", "cumulative_ratio"});
    for (Policy p : kAllPolicies) {
        std::vector<ResponsePoint> agg;
        for (const auto& r : results) {
            if (r.policy != p) continue;
            if (agg.size() < r.response_rate_series.size()) agg.resize(r.response_rate_series.size());
            for (std::size_t i = 0; i < r.response_rate_series.size(); ++i) {
                agg[i].step = r.response_rate_series[i].step;
                agg[i].issued += r.response_rate_series[i].issued;
                agg[i].answered += r.response_rate_series[i].answered;
            }
        }
        long long ci = 0, ca = 0;
        for (const auto& a : agg) {
            ci += a.issued;
            ca += a.answered;
            w.field(policy_name(p)).field(a.step).field(a.issued).field(a.answered);
            w.field(a.issued ? static_cast<double>(a.answered) / static_cast<double>(a.issued) : 0.0);
            w.field(ci ? static_cast<double>(ca) / static_cast<double>(ci) : 0.0);
            w.end_row();
        }
    }
}

}  // namespace caal
