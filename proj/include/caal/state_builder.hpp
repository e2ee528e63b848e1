#pragma once

#include <array>
#include <iosfwd>
#include <limits>
#include <span>

#include "caal/sim_time.hpp"

namespace caal {

/// Normalized agent input, every component in [0, 1].
struct AgentState {
    double s1 = 0;  // classifier raw score
    double s2 = 0;  // time since last query, clipped at 180 min
    double s3 = 0;  // learned response rate of the current hour
    double s4 = 0;  // time of day

    std::array<double, 4> to_array() const { return {s1, s2, s3, s4}; }
    friend bool operator==(const AgentState&, const AgentState&) = default;
};

inline constexpr double kQueryGapClipMinutes = 180.0;
inline constexpr double kNoPreviousQuery = std::numeric_limits<double>::infinity();

struct ResponseEvent {
    int hour = 0;
    bool queried = false;
    bool answered = false;
};

/// Per hour-of-day response rate, learned online with an exponential moving average.
struct ResponseProfile {
    std::array<double, 24> rate{};
    std::array<long long, 24> issued{};
    std::array<long long, 24> answered{};

    static ResponseProfile uniform(double prior = 0.5);
    void validate() const;
};

AgentState build_state(double raw_score, double minutes_since_last_query, const ResponseProfile& profile,
                       Minutes timestamp);

/// Applies each event in order. Queried events move rate[hour] toward the
/// outcome by `smoothing`; events without a query leave the profile alone.
/// Throws ContractViolation for an answered-but-not-queried event.
ResponseProfile update_response_profile(ResponseProfile profile, std::span<const ResponseEvent> events,
                                        double smoothing = 0.1);

/// CSV: hour,rate,issued,answered.
void write_response_profile(std::ostream& out, const ResponseProfile& profile);

}  // namespace caal
