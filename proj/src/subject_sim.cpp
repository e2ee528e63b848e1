#include "caal/subject_sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "caal/csv.hpp"
#include "caal/errors.hpp"

namespace caal {

namespace {

constexpr std::uint64_t kProfileStream = 0x70726f66;  // "prof"
constexpr std::uint64_t kSignalStream = 0x7369676e;   // "sign"

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

bool is_waking(int hour) { return hour >= 8 && hour < 23; }

}  // namespace

void SubjectProfile::validate() const {
    auto bad = [](const std::string& what) { throw ConfigError("subject profile: " + what); };
    if (!(baseline_ibi_mean_ms > 250 && baseline_ibi_mean_ms < 2000)) bad("baseline_ibi_mean_ms out of (250, 2000)");
    if (baseline_ibi_std_ms < 0 || interval_sd_ms < 0 || br_std < 0 || intensity_noise < 0) bad("negative spread");
    if (!(interval_autocorrelation > -1 && interval_autocorrelation < 1)) bad("interval_autocorrelation out of (-1, 1)");
    if (!(hrv_suppression > 0 && hrv_suppression <= 1)) bad("hrv_suppression must be in (0, 1]");
    if (!(baseline_ibi_mean_ms + stress_ibi_shift_ms > 250)) bad("stressed mean interval must stay above 250 ms");
    for (const auto& row : stress_transition) {
        for (double p : row)
            if (!(p >= 0 && p <= 1)) bad("transition probability out of [0,1]");
        if (std::abs(row[0] + row[1] - 1.0) > 1e-9) bad("transition rows must sum to 1");
    }
    for (double m : hourly_stress_modifier)
        if (!(m >= 0)) bad("hourly_stress_modifier must be >= 0");
    for (double r : responsiveness)
        if (!(r >= 0 && r <= 1)) bad("responsiveness must be in [0,1]");
    for (std::size_t k = 1; k < report_thresholds.size(); ++k)
        if (!(report_thresholds[k] > report_thresholds[k - 1])) bad("report_thresholds must be strictly increasing");
    if (!(target_minority_ratio > 0 && target_minority_ratio < 1)) bad("target_minority_ratio must be in (0,1)");
}

double stationary_stressed_fraction(const std::array<std::array<double, 2>, 2>& t) {
    const double enter = t[0][1], leave = t[1][0];
    if (enter + leave == 0) return 0;
    return enter / (enter + leave);
}

void calibrate_transition(SubjectProfile& p, double ratio) {
    if (!(ratio > 0 && ratio < 1)) throw ConfigError("minority ratio must be in (0,1)");
    double mean_mod = 0;
    for (double m : p.hourly_stress_modifier) mean_mod += m;
    mean_mod /= 24.0;
    if (mean_mod <= 0) throw ConfigError("hourly_stress_modifier must not be all zero");
    const double leave = p.stress_transition[1][0];
    const double enter = std::min(1.0, ratio * leave / ((1.0 - ratio) * mean_mod));
    p.stress_transition[0] = {1.0 - enter, enter};
    p.target_minority_ratio = ratio;
}

SubjectProfile generate_subject(std::uint64_t seed, const SubjectOverrides& o) {
    Rng rng(derive_seed(seed, kProfileStream));
    SubjectProfile p;
    p.seed = seed;
    p.subject_id = static_cast<int>(seed % 100000);

    p.baseline_ibi_mean_ms = uniform(rng, 680, 900);
    p.baseline_ibi_std_ms = uniform(rng, 20, 40);
    p.interval_sd_ms = uniform(rng, 35, 65);
    p.interval_autocorrelation = 0.3;
    p.stress_ibi_shift_ms = uniform(rng, -110, -60);
    p.hrv_suppression = uniform(rng, 0.55, 0.8);
    p.br_baseline = uniform(rng, 13, 17);
    p.br_std = 1.0;
    p.stress_br_shift = uniform(rng, 1.5, 4.0);

    // Stress is more likely during the working day and rare at night.
    for (int h = 0; h < 24; ++h) {
        double m = (h >= 9 && h < 18) ? 1.5 : (is_waking(h) ? 1.0 : 0.3);
        p.hourly_stress_modifier[static_cast<std::size_t>(h)] = m * uniform(rng, 0.85, 1.15);
    }

    const double day_level = uniform(rng, 0.55, 0.9);
    const double night_level = uniform(rng, 0.05, 0.25);
    for (int h = 0; h < 24; ++h) {
        const double base = is_waking(h) ? day_level : night_level;
        p.responsiveness[static_cast<std::size_t>(h)] = std::clamp(base + uniform(rng, -0.05, 0.05), 0.0, 1.0);
    }

    std::array<double, 4> thr{0.15, 0.32, 0.5, 0.85};
    for (auto& t : thr) t += uniform(rng, -0.03, 0.03);
    p.report_thresholds = thr;
    p.intensity_noise = 0.08;

    const double mean_episode_slots = uniform(rng, 3, 6);
    const double leave = 1.0 / mean_episode_slots;
    p.stress_transition = {{{1.0, 0.0}, {leave, 1.0 - leave}}};
    double ratio = uniform(rng, 0.025, 0.208);

    if (o.subject_id) p.subject_id = *o.subject_id;
    if (o.baseline_ibi_mean_ms) p.baseline_ibi_mean_ms = *o.baseline_ibi_mean_ms;
    if (o.baseline_ibi_std_ms) p.baseline_ibi_std_ms = *o.baseline_ibi_std_ms;
    if (o.interval_sd_ms) p.interval_sd_ms = *o.interval_sd_ms;
    if (o.interval_autocorrelation) p.interval_autocorrelation = *o.interval_autocorrelation;
    if (o.stress_ibi_shift_ms) p.stress_ibi_shift_ms = *o.stress_ibi_shift_ms;
    if (o.hrv_suppression) p.hrv_suppression = *o.hrv_suppression;
    if (o.br_baseline) p.br_baseline = *o.br_baseline;
    if (o.br_std) p.br_std = *o.br_std;
    if (o.stress_br_shift) p.stress_br_shift = *o.stress_br_shift;
    if (o.hourly_stress_modifier) p.hourly_stress_modifier = *o.hourly_stress_modifier;
    if (o.responsiveness) p.responsiveness = *o.responsiveness;
    if (o.report_thresholds) p.report_thresholds = *o.report_thresholds;
    if (o.intensity_noise) p.intensity_noise = *o.intensity_noise;
    if (o.target_minority_ratio) ratio = *o.target_minority_ratio;

    if (o.stress_transition) p.stress_transition = *o.stress_transition;
    if (o.stress_transition && !o.target_minority_ratio) {
        // An explicit chain without a ratio keeps its entry probability.
        p.target_minority_ratio = std::clamp(stationary_stressed_fraction(p.stress_transition), 1e-6, 1 - 1e-6);
    } else {
        calibrate_transition(p, ratio);
    }
    p.validate();
    return p;
}

StressLevel bucketize(double intensity, const std::array<double, 4>& thresholds) {
    int level = 0;
    for (double t : thresholds)
        if (intensity >= t) ++level;
    return StressLevel(level);
}

StressLevel reported_level(const SubjectProfile& profile, const Instance& instance) {
    return bucketize(instance.latent_intensity, profile.report_thresholds);
}

std::vector<Instance> step_stream(const SubjectProfile& profile, std::size_t n_slots) {
    profile.validate();
    Rng rng(derive_seed(profile.seed, kSignalStream));
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<Instance> out;
    out.reserve(n_slots);
    bool stressed = false;
    const double rho = profile.interval_autocorrelation;
    const double innovation = std::sqrt(1.0 - rho * rho);

    for (std::size_t k = 0; k < n_slots; ++k) {
        const Minutes ts = static_cast<Minutes>(k) * kSlotMinutes;
        if (k > 0) {
            const int h = hour_of_day(ts);
            const double enter =
                std::min(1.0, profile.stress_transition[0][1] * profile.hourly_stress_modifier[static_cast<std::size_t>(h)]);
            const double leave = profile.stress_transition[1][0];
            stressed = stressed ? !bernoulli(rng, leave) : bernoulli(rng, enter);
        }

        Instance inst;
        inst.subject_id = profile.subject_id;
        inst.index = k;
        inst.timestamp = ts;
        inst.latent_stressed = stressed;
        inst.latent_intensity =
            std::clamp((stressed ? profile.stressed_intensity : profile.calm_intensity) + profile.intensity_noise * gauss(rng),
                       0.0, 1.0);

        const double mean = profile.baseline_ibi_mean_ms + profile.baseline_ibi_std_ms * gauss(rng) +
                            (stressed ? profile.stress_ibi_shift_ms : 0.0);
        const double sd = profile.interval_sd_ms * (stressed ? profile.hrv_suppression : 1.0);
        double elapsed = 0;
        double e = sd * gauss(rng);
        auto& nn = inst.nn.intervals;
        nn.reserve(static_cast<std::size_t>(120000.0 / std::max(mean, 300.0)) + 8);
        while (elapsed < inst.nn.window_seconds * 1000.0) {
            const double x = std::max(250.0, mean + e);
            nn.push_back(x);
            elapsed += x;
            e = rho * e + innovation * sd * gauss(rng);
        }
        inst.nn.breathing_rate =
            std::max(4.0, profile.br_baseline + profile.br_std * gauss(rng) + (stressed ? profile.stress_br_shift : 0.0));
        inst.features = compute_features(inst.nn);
        out.push_back(std::move(inst));
    }
    return out;
}

std::optional<StressLevel> respond(const SubjectProfile& profile, const Instance& instance, Minutes query_time,
                                   Rng& rng) {
    const double p = profile.responsiveness[static_cast<std::size_t>(hour_of_day(query_time))];
    if (!bernoulli(rng, p)) return std::nullopt;
    return reported_level(profile, instance);
}

void write_stream_csv(std::ostream& out, std::span<const Instance> stream) {
    csv::Writer w(out);
    w.header({"subject_id", "timestamp", "interval_ms", "br"});
    for (const auto& inst : stream) {
        const std::string sid = std::to_string(inst.subject_id);
        for (double x : inst.nn.intervals) {
            w.field(sid).field(static_cast<long long>(inst.timestamp)).field(x);
            if (inst.nn.breathing_rate) w.field(*inst.nn.breathing_rate);
            else w.field(std::string_view{});
            w.end_row();
        }
    }
}

void write_truth_csv(std::ostream& out, const SubjectProfile& profile, std::span<const Instance> stream) {
    csv::Writer w(out);
    w.header({"subject_id", "index", "timestamp", "latent_stressed", "latent_intensity", "reported_level"});
    for (const auto& inst : stream) {
        w.field(inst.subject_id).field(inst.index).field(static_cast<long long>(inst.timestamp));
        w.field(inst.latent_stressed).field(inst.latent_intensity).field(reported_level(profile, inst).value());
        w.end_row();
    }
}

std::string profile_to_json(const SubjectProfile& p) {
    nlohmann::ordered_json j;
    j["seed"] = p.seed;
    j["subject_id"] = p.subject_id;
    j["baseline_ibi_mean_ms"] = p.baseline_ibi_mean_ms;
    j["baseline_ibi_std_ms"] = p.baseline_ibi_std_ms;
    j["interval_sd_ms"] = p.interval_sd_ms;
    j["interval_autocorrelation"] = p.interval_autocorrelation;
    j["stress_ibi_shift_ms"] = p.stress_ibi_shift_ms;
    j["hrv_suppression"] = p.hrv_suppression;
    j["br_baseline"] = p.br_baseline;
    j["br_std"] = p.br_std;
    j["stress_br_shift"] = p.stress_br_shift;
    j["stress_transition"] = p.stress_transition;
    j["hourly_stress_modifier"] = p.hourly_stress_modifier;
    j["responsiveness"] = p.responsiveness;
    j["report_thresholds"] = p.report_thresholds;
    j["stressed_intensity"] = p.stressed_intensity;
    j["calm_intensity"] = p.calm_intensity;
    j["intensity_noise"] = p.intensity_noise;
    j["target_minority_ratio"] = p.target_minority_ratio;
    return j.dump(2);
}

}  // namespace caal
