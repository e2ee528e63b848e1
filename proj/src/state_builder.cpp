#include "caal/state_builder.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "caal/csv.hpp"
#include "caal/errors.hpp"

namespace caal {

ResponseProfile ResponseProfile::uniform(double prior) {
    ResponseProfile p;
    p.rate.fill(prior);
    return p;
}

void ResponseProfile::validate() const {
    for (int h = 0; h < 24; ++h) {
        if (!(rate[h] >= 0 && rate[h] <= 1)) throw ContractViolation("response rate out of [0,1]");
        if (issued[h] < 0 || answered[h] < 0 || answered[h] > issued[h])
            throw ContractViolation("response counters inconsistent at hour " + std::to_string(h));
    }
}

AgentState build_state(double raw_score, double minutes_since_last_query, const ResponseProfile& profile,
                       Minutes timestamp) {
    if (!(minutes_since_last_query >= 0)) throw ContractViolation("minutes since last query must be >= 0");
    AgentState s;
    s.s1 = std::clamp(raw_score, 0.0, 1.0);
    s.s2 = std::min(minutes_since_last_query, kQueryGapClipMinutes) / kQueryGapClipMinutes;
    s.s3 = profile.rate[hour_of_day(timestamp)];
    s.s4 = fractional_hour(timestamp) / 24.0;
    return s;
}

ResponseProfile update_response_profile(ResponseProfile profile, std::span<const ResponseEvent> events,
                                        double smoothing) {
    if (!(smoothing > 0 && smoothing <= 1)) throw ConfigError("response smoothing must be in (0,1]");
    for (const auto& e : events) {
        if (e.hour < 0 || e.hour > 23) throw ContractViolation("event hour out of range");
        if (e.answered && !e.queried) throw ContractViolation("answered event without a query");
        if (!e.queried) continue;
        const double outcome = e.answered ? 1.0 : 0.0;
        profile.rate[e.hour] = (1.0 - smoothing) * profile.rate[e.hour] + smoothing * outcome;
        ++profile.issued[e.hour];
        if (e.answered) ++profile.answered[e.hour];
    }
    return profile;
}

void write_response_profile(std::ostream& out, const ResponseProfile& profile) {
    csv::Writer w(out);
    w.header({"hour", "rate", "issued", "answered"});
    for (int h = 0; h < 24; ++h) {
        w.field(h).field(profile.rate[h]).field(profile.issued[h]).field(profile.answered[h]);
        w.end_row();
    }
}

}  // namespace caal
