#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caal/sim_time.hpp"

namespace caal {

/// One sensing window of inter-beat (NN) intervals in milliseconds.
struct NnSeries {
    std::vector<double> intervals;
    double window_seconds = 120.0;
    /// Breathing rate supplied by a side channel (the simulator), breaths/min.
    std::optional<double> breathing_rate;
};

inline constexpr std::size_t kFeatureCount = 13;

struct FeatureVector {
    double bpm = 0;       // beats/min
    double ibi = 0;       // mean NN interval, ms
    double sdnn = 0;      // ms
    double sdsd = 0;      // ms
    double rmssd = 0;     // ms
    double pnn20 = 0;     // fraction
    double pnn50 = 0;     // fraction
    double mad = 0;       // ms
    double sd1 = 0;       // ms
    double sd2 = 0;       // ms
    double s_area = 0;    // ms^2
    double sd_ratio = 0;  // SD1 / SD2, 0 when SD2 == 0
    double br = 0;        // breaths/min
    /// False when no breathing-rate side channel was present and br was set to 0.
    bool br_available = false;

    std::array<double, kFeatureCount> to_array() const;
    static FeatureVector from_array(const std::array<double, kFeatureCount>& values);
};

/// Column names in the fixed output order used by every feature table.
const std::array<const char*, kFeatureCount>& feature_names();

/// Computes the 13 HRV features. Throws InvalidInput on fewer than 4 intervals
/// or any non-positive interval.
FeatureVector compute_features(const NnSeries& series);

/// Checks the NnSeries invariants; throws InvalidInput when violated.
void validate(const NnSeries& series);

/// One window of the CSV batch mode.
struct WindowFeatures {
    std::string subject_id;
    Minutes timestamp = 0;
    FeatureVector features;
};

/// Batch mode. Input rows `subject_id,timestamp,interval_ms[,br]`, an optional
/// header line, consecutive rows with the same (subject_id, timestamp) forming
/// one window. The optional fourth column carries breathing rate.
std::vector<WindowFeatures> compute_batch(std::istream& in);

/// Writes `subject_id,timestamp,<13 features>,br_available`.
void write_feature_table(std::ostream& out, std::span<const WindowFeatures> rows);

}  // namespace caal
