#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caal/hrv_features.hpp"
#include "caal/rng.hpp"
#include "caal/sim_time.hpp"
#include "caal/stress_classifier.hpp"

namespace caal {

constexpr std::array<double, 24> filled24(double v) {
    std::array<double, 24> a{};
    for (auto& x : a) x = v;
    return a;
}

/// Generative parameters of one synthetic user.
struct SubjectProfile {
    std::uint64_t seed = 0;
    int subject_id = 0;

    // Physiology.
    double baseline_ibi_mean_ms = 800;
    double baseline_ibi_std_ms = 30;   // slot-to-slot spread of the window mean
    double interval_sd_ms = 50;        // beat-to-beat spread inside a window
    double interval_autocorrelation = 0.3;
    double stress_ibi_shift_ms = -80;  // added to the window mean while stressed
    double hrv_suppression = 0.6;      // multiplies interval_sd_ms while stressed
    double br_baseline = 15;           // breaths/min
    double br_std = 1.0;
    double stress_br_shift = 3;

    // Stress dynamics over 15-minute slots; row = from, column = to.
    std::array<std::array<double, 2>, 2> stress_transition{{{0.97, 0.03}, {0.25, 0.75}}};
    std::array<double, 24> hourly_stress_modifier = filled24(1.0);

    // Reporting behaviour.
    std::array<double, 24> responsiveness = filled24(0.5);
    std::array<double, 4> report_thresholds{0.15, 0.32, 0.5, 0.85};
    double stressed_intensity = 0.75;
    double calm_intensity = 0.25;
    double intensity_noise = 0.08;
    double target_minority_ratio = 0.1;

    void validate() const;
};

/// Optional replacements applied on top of the population sampler.
struct SubjectOverrides {
    std::optional<int> subject_id;
    std::optional<double> baseline_ibi_mean_ms;
    std::optional<double> baseline_ibi_std_ms;
    std::optional<double> interval_sd_ms;
    std::optional<double> interval_autocorrelation;
    std::optional<double> stress_ibi_shift_ms;
    std::optional<double> hrv_suppression;
    std::optional<double> br_baseline;
    std::optional<double> br_std;
    std::optional<double> stress_br_shift;
    std::optional<std::array<std::array<double, 2>, 2>> stress_transition;
    std::optional<std::array<double, 24>> hourly_stress_modifier;
    std::optional<std::array<double, 24>> responsiveness;
    std::optional<std::array<double, 4>> report_thresholds;
    std::optional<double> intensity_noise;
    /// Re-derives the stress-entry probability so the long-run stressed share matches.
    std::optional<double> target_minority_ratio;
};

/// Deterministic in (seed, overrides). Throws ConfigError on invalid overrides.
SubjectProfile generate_subject(std::uint64_t seed, const SubjectOverrides& overrides = {});

/// Sets the stress-entry probability so the chain's stationary stressed share,
/// with the hourly modifiers averaged, equals `ratio`.
void calibrate_transition(SubjectProfile& profile, double ratio);

/// Stationary stressed probability of the 2x2 chain, ignoring hourly modifiers.
double stationary_stressed_fraction(const std::array<std::array<double, 2>, 2>& transition);

struct Instance {
    int subject_id = 0;
    std::size_t index = 0;
    Minutes timestamp = 0;
    NnSeries nn;
    FeatureVector features;
    bool latent_stressed = false;
    double latent_intensity = 0;
    std::optional<StressLevel> collected_label;
};

/// One instance per 15-minute slot starting at day 0, 00:00, in a not-stressed state.
std::vector<Instance> step_stream(const SubjectProfile& profile, std::size_t n_slots);

/// Level the subject would report for this instance.
StressLevel reported_level(const SubjectProfile& profile, const Instance& instance);
StressLevel bucketize(double intensity, const std::array<double, 4>& thresholds);

/// Answers with probability responsiveness[hour(query_time)].
std::optional<StressLevel> respond(const SubjectProfile& profile, const Instance& instance, Minutes query_time,
                                   Rng& rng);

/// Rows in the batch schema `subject_id,timestamp,interval_ms,br` accepted by compute_batch.
void write_stream_csv(std::ostream& out, std::span<const Instance> stream);
/// Per-instance truth table: subject_id,index,timestamp,latent_stressed,latent_intensity,reported_level.
void write_truth_csv(std::ostream& out, const SubjectProfile& profile, std::span<const Instance> stream);

std::string profile_to_json(const SubjectProfile& profile);

}  // namespace caal
