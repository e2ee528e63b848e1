#include "caal/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "caal/errors.hpp"
#include "caal/rng.hpp"

namespace caal {

using nlohmann::json;

DerivedSeeds derive_seeds(std::uint64_t m) {
    return {derive_seed(m, 1), derive_seed(m, 2), derive_seed(m, 3), derive_seed(m, 4),
            derive_seed(m, 5), derive_seed(m, 6), derive_seed(m, 7)};
}

AppConfig default_config(std::uint64_t master_seed) {
    AppConfig c;
    c.master_seed = master_seed;
    const auto s = derive_seeds(master_seed);
    c.scenario.population_seed = s.population;
    c.scenario.target_seed = s.target;
    c.scenario.episode_seed = s.episode;
    c.models.forest.seed = s.forest;
    c.models.dqn.seed = s.dqn;
    c.experiment.seed = s.experiment;
    c.pipeline_seed = s.pipeline;
    return c;
}

void AppConfig::validate() const {
    scenario.validate();
    models.forest.validate();
    models.reward.validate();
    models.dqn.validate();
    experiment.validate();
    pipeline.validate();
    if (sweep_users.empty()) throw ConfigError("sweep_users must not be empty");
    for (std::size_t i = 0; i < sweep_users.size(); ++i) {
        if (sweep_users[i] < 1) throw ConfigError("sweep_users entries must be >= 1");
        if (i > 0 && sweep_users[i] <= sweep_users[i - 1]) throw ConfigError("sweep_users must be strictly ascending");
    }
}

namespace {

/// Reads the members of one JSON object and rejects any it did not consume.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    template <class T>
    void get(const char* key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        out = as<T>(j_.at(key), key);
    }

    template <class T>
    void get_opt(const char* key, std::optional<T>& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        const auto& v = j_.at(key);
        if (v.is_null()) out.reset();
        else out = as<T>(v, key);
    }

    std::optional<Section> child(const char* key) {
        if (!j_.contains(key)) return std::nullopt;
        seen_.insert(key);
        return Section(j_.at(key), path_.empty() ? key : path_ + "." + key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("unknown key '" + it.key() + "' in " + where());
    }

private:
    std::string where() const { return path_.empty() ? "config" : "section '" + path_ + "'"; }

    template <class T>
    T as(const json& v, const char* key) const {
        const std::string name = (path_.empty() ? "" : path_ + ".") + key;
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError(name + " must be true or false");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ConfigError(name + " must be an integer");
                if constexpr (std::is_unsigned_v<T>)
                    if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
                        throw ConfigError(name + " must be non-negative");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ConfigError(name + " must be a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError(name + " must be a string");
            }
            return v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(name + ": " + e.what());
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <std::size_t N>
std::array<double, N> fixed_array(const std::vector<double>& v, const char* name) {
    if (v.size() != N) throw ConfigError(std::string(name) + " needs exactly " + std::to_string(N) + " values");
    std::array<double, N> a{};
    std::copy(v.begin(), v.end(), a.begin());
    return a;
}

template <std::size_t N>
void get_array(Section& s, const char* key, std::optional<std::array<double, N>>& out, const std::string& path) {
    std::optional<std::vector<double>> v;
    if (out) v = std::vector<double>(out->begin(), out->end());
    s.get_opt(key, v);
    if (v) out = fixed_array<N>(*v, (path + "." + key).c_str());
    else out.reset();
}

void read_target(Section s, SubjectOverrides& o) {
    s.get_opt("subject_id", o.subject_id);
    s.get_opt("baseline_ibi_mean_ms", o.baseline_ibi_mean_ms);
    s.get_opt("baseline_ibi_std_ms", o.baseline_ibi_std_ms);
    s.get_opt("interval_sd_ms", o.interval_sd_ms);
    s.get_opt("interval_autocorrelation", o.interval_autocorrelation);
    s.get_opt("stress_ibi_shift_ms", o.stress_ibi_shift_ms);
    s.get_opt("hrv_suppression", o.hrv_suppression);
    s.get_opt("br_baseline", o.br_baseline);
    s.get_opt("br_std", o.br_std);
    s.get_opt("stress_br_shift", o.stress_br_shift);
    {
        std::optional<std::vector<std::vector<double>>> t;
        if (o.stress_transition)
            t = std::vector<std::vector<double>>{{(*o.stress_transition)[0][0], (*o.stress_transition)[0][1]},
                                                 {(*o.stress_transition)[1][0], (*o.stress_transition)[1][1]}};
        s.get_opt("stress_transition", t);
        if (t) {
            if (t->size() != 2 || (*t)[0].size() != 2 || (*t)[1].size() != 2)
                throw ConfigError("scenario.target.stress_transition must be a 2x2 matrix");
            o.stress_transition = std::array<std::array<double, 2>, 2>{{{(*t)[0][0], (*t)[0][1]}, {(*t)[1][0], (*t)[1][1]}}};
        } else {
            o.stress_transition.reset();
        }
    }
    get_array(s, "hourly_stress_modifier", o.hourly_stress_modifier, "scenario.target");
    get_array(s, "responsiveness", o.responsiveness, "scenario.target");
    get_array(s, "report_thresholds", o.report_thresholds, "scenario.target");
    s.get_opt("intensity_noise", o.intensity_noise);
    s.get_opt("target_minority_ratio", o.target_minority_ratio);
    s.finish();
}

void read_scheme(Section s, LabelScheme& scheme) {
    std::vector<int> neg(scheme.negative.begin(), scheme.negative.end());
    std::vector<int> pos(scheme.positive.begin(), scheme.positive.end());
    s.get("negative", neg);
    s.get("positive", pos);
    s.finish();
    scheme.negative = std::set<int>(neg.begin(), neg.end());
    scheme.positive = std::set<int>(pos.begin(), pos.end());
}

BellmanMode parse_bellman(const std::string& s) {
    if (s == "conventional") return BellmanMode::Conventional;
    if (s == "paper_literal") return BellmanMode::PaperLiteral;
    throw ConfigError("dqn.bellman_mode must be 'conventional' or 'paper_literal'");
}

const char* bellman_name(BellmanMode m) { return m == BellmanMode::Conventional ? "conventional" : "paper_literal"; }

ServiceDistribution parse_distribution(const std::string& s) {
    if (s == "exponential") return ServiceDistribution::Exponential;
    if (s == "deterministic") return ServiceDistribution::Deterministic;
    throw ConfigError("pipeline.service_distribution must be 'exponential' or 'deterministic'");
}

const char* distribution_name(ServiceDistribution d) {
    return d == ServiceDistribution::Exponential ? "exponential" : "deterministic";
}

}  // namespace

AppConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (doc.is_object() && doc.contains("manifest_version")) {
        if (!doc.contains("config")) throw ConfigError("manifest has no 'config' member");
        doc = doc.at("config");
    }

    Section root(doc, "");
    std::uint64_t master = 42;
    root.get("master_seed", master);
    AppConfig c = default_config(master);

    if (auto s = root.child("scenario")) {
        auto& sc = c.scenario;
        s->get("population_seed", sc.population_seed);
        s->get("n_pretrain_subjects", sc.n_pretrain_subjects);
        s->get("pretrain_slots_per_subject", sc.pretrain_slots_per_subject);
        s->get("pretrain_labels_per_subject", sc.pretrain_labels_per_subject);
        s->get("target_seed", sc.target_seed);
        s->get("stream_length_slots", sc.stream_length_slots);
        s->get("episode_seed", sc.episode_seed);
        s->get("episode_slots", sc.episode_slots);
        if (auto t = s->child("target")) read_target(*t, sc.target);
        if (auto t = s->child("label_scheme")) read_scheme(*t, sc.scheme);
        s->finish();
    }
    if (auto s = root.child("forest")) {
        auto& f = c.models.forest;
        s->get("n_trees", f.n_trees);
        s->get("max_depth", f.max_depth);
        s->get("min_samples_split", f.min_samples_split);
        s->get("features_per_split", f.features_per_split);
        s->get("bootstrap", f.bootstrap);
        s->get("seed", f.seed);
        s->finish();
    }
    if (auto s = root.child("reward")) {
        auto& r = c.models.reward;
        s->get("region_low", r.region_low);
        s->get("region_high", r.region_high);
        s->get("alpha_r1", r.alpha_r1);
        s->get("alpha_r2", r.alpha_r2);
        s->get("beta_r2", r.beta_r2);
        s->get("alpha_r3", r.alpha_r3);
        s->get("beta_r3", r.beta_r3);
        s->get("query_reward_scale", r.query_reward_scale);
        s->get("paper_literal_r1", r.paper_literal_r1);
        s->finish();
    }
    if (auto s = root.child("dqn")) {
        auto& d = c.models.dqn;
        s->get("learning_rate", d.learning_rate);
        s->get("discount", d.discount);
        s->get("epsilon", d.epsilon);
        s->get("train_epsilon", d.train_epsilon);
        s->get("train_steps", d.train_steps);
        s->get("batch_size", d.batch_size);
        s->get("replay_capacity", d.replay_capacity);
        s->get("target_sync_interval", d.target_sync_interval);
        s->get("train_interval", d.train_interval);
        s->get("hidden_units", d.hidden_units);
        s->get("l1", d.l1);
        s->get("l2", d.l2);
        std::string mode = bellman_name(d.bellman_mode);
        s->get("bellman_mode", mode);
        d.bellman_mode = parse_bellman(mode);
        s->get("seed", d.seed);
        s->finish();
    }
    if (auto s = root.child("experiment")) {
        auto& e = c.experiment;
        std::string policy(policy_name(e.policy));
        s->get("policy", policy);
        e.policy = parse_policy(policy);
        s->get("update_cadence", e.update_cadence);
        s->get("test_holdout_fraction", e.test_holdout_fraction);
        s->get("repeats", e.repeats);
        s->get("query_budget_matching", e.query_budget_matching);
        s->get("random_query_rate", e.random_query_rate);
        s->get("response_smoothing", e.response_smoothing);
        s->get("response_prior", e.response_prior);
        s->get("target_recall_gain", e.target_recall_gain);
        s->get("recall_smoothing_window", e.recall_smoothing_window);
        s->get("label_budget", e.label_budget);
        s->get("parallel", e.parallel);
        s->get("seed", e.seed);
        s->finish();
    }
    if (auto s = root.child("pipeline")) {
        auto& p = c.pipeline;
        s->get("n_users", p.n_users);
        s->get("submission_interval_s", p.submission_interval_s);
        s->get("webserver_service_ms", p.webserver_service_ms);
        s->get("processing_service_ms", p.processing_service_ms);
        s->get("storage_service_ms", p.storage_service_ms);
        s->get("n_processing_workers", p.n_processing_workers);
        s->get("n_storage_workers", p.n_storage_workers);
        s->get("storage_priority_lower", p.storage_priority_lower);
        s->get("sim_duration_s", p.sim_duration_s);
        s->get("warmup_s", p.warmup_s);
        std::string dist = distribution_name(p.service_distribution);
        s->get("service_distribution", dist);
        p.service_distribution = parse_distribution(dist);
        s->get("seed", c.pipeline_seed);
        s->finish();
    }
    root.get("sweep_users", c.sweep_users);
    root.finish();
    c.validate();
    return c;
}

AppConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const AppConfig& c) {
    json j;
    j["master_seed"] = c.master_seed;

    const auto& sc = c.scenario;
    json target = json::object();
    const auto& o = sc.target;
    // Unset overrides are written as null so a reload does not bring defaults back.
    auto put = [&](const char* k, const auto& v) {
        if (v) target[k] = *v;
        else target[k] = nullptr;
    };
    put("subject_id", o.subject_id);
    put("baseline_ibi_mean_ms", o.baseline_ibi_mean_ms);
    put("baseline_ibi_std_ms", o.baseline_ibi_std_ms);
    put("interval_sd_ms", o.interval_sd_ms);
    put("interval_autocorrelation", o.interval_autocorrelation);
    put("stress_ibi_shift_ms", o.stress_ibi_shift_ms);
    put("hrv_suppression", o.hrv_suppression);
    put("br_baseline", o.br_baseline);
    put("br_std", o.br_std);
    put("stress_br_shift", o.stress_br_shift);
    put("stress_transition", o.stress_transition);
    put("hourly_stress_modifier", o.hourly_stress_modifier);
    put("responsiveness", o.responsiveness);
    put("report_thresholds", o.report_thresholds);
    put("intensity_noise", o.intensity_noise);
    put("target_minority_ratio", o.target_minority_ratio);
    j["scenario"] = {
        {"population_seed", sc.population_seed},
        {"n_pretrain_subjects", sc.n_pretrain_subjects},
        {"pretrain_slots_per_subject", sc.pretrain_slots_per_subject},
        {"pretrain_labels_per_subject", sc.pretrain_labels_per_subject},
        {"target_seed", sc.target_seed},
        {"stream_length_slots", sc.stream_length_slots},
        {"episode_seed", sc.episode_seed},
        {"episode_slots", sc.episode_slots},
        {"label_scheme", {{"negative", sc.scheme.negative}, {"positive", sc.scheme.positive}}},
        {"target", target},
    };

    const auto& f = c.models.forest;
    j["forest"] = {{"n_trees", f.n_trees},
                   {"max_depth", f.max_depth},
                   {"min_samples_split", f.min_samples_split},
                   {"features_per_split", f.features_per_split},
                   {"bootstrap", f.bootstrap},
                   {"seed", f.seed}};
    const auto& r = c.models.reward;
    j["reward"] = {{"region_low", r.region_low},   {"region_high", r.region_high},
                   {"alpha_r1", r.alpha_r1},       {"alpha_r2", r.alpha_r2},
                   {"beta_r2", r.beta_r2},         {"alpha_r3", r.alpha_r3},
                   {"beta_r3", r.beta_r3},         {"query_reward_scale", r.query_reward_scale},
                   {"paper_literal_r1", r.paper_literal_r1}};
    const auto& d = c.models.dqn;
    j["dqn"] = {{"learning_rate", d.learning_rate},
                {"discount", d.discount},
                {"epsilon", d.epsilon},
                {"train_epsilon", d.train_epsilon},
                {"train_steps", d.train_steps},
                {"batch_size", d.batch_size},
                {"replay_capacity", d.replay_capacity},
                {"target_sync_interval", d.target_sync_interval},
                {"train_interval", d.train_interval},
                {"hidden_units", d.hidden_units},
                {"l1", d.l1},
                {"l2", d.l2},
                {"bellman_mode", bellman_name(d.bellman_mode)},
                {"seed", d.seed}};
    const auto& e = c.experiment;
    j["experiment"] = {{"policy", std::string(policy_name(e.policy))},
                       {"update_cadence", e.update_cadence},
                       {"test_holdout_fraction", e.test_holdout_fraction},
                       {"repeats", e.repeats},
                       {"query_budget_matching", e.query_budget_matching},
                       {"random_query_rate", e.random_query_rate},
                       {"response_smoothing", e.response_smoothing},
                       {"response_prior", e.response_prior},
                       {"target_recall_gain", e.target_recall_gain},
                       {"recall_smoothing_window", e.recall_smoothing_window},
                       {"label_budget", e.label_budget},
                       {"parallel", e.parallel},
                       {"seed", e.seed}};
    const auto& p = c.pipeline;
    j["pipeline"] = {{"n_users", p.n_users},
                     {"submission_interval_s", p.submission_interval_s},
                     {"webserver_service_ms", p.webserver_service_ms},
                     {"processing_service_ms", p.processing_service_ms},
                     {"storage_service_ms", p.storage_service_ms},
                     {"n_processing_workers", p.n_processing_workers},
                     {"n_storage_workers", p.n_storage_workers},
                     {"storage_priority_lower", p.storage_priority_lower},
                     {"sim_duration_s", p.sim_duration_s},
                     {"warmup_s", p.warmup_s},
                     {"service_distribution", distribution_name(p.service_distribution)},
                     {"seed", c.pipeline_seed}};
    j["sweep_users"] = c.sweep_users;
    return j.dump(2) + "\n";
}

}  // namespace caal
