#pragma once

#include <cstdint>

namespace caal {

/// Simulated wall clock: whole minutes since the start of day 0 (00:00).
using Minutes = std::int64_t;

inline constexpr Minutes kMinutesPerDay = 24 * 60;
inline constexpr Minutes kSlotMinutes = 15;

inline int hour_of_day(Minutes t) {
    Minutes m = t % kMinutesPerDay;
    if (m < 0) m += kMinutesPerDay;
    return static_cast<int>(m / 60);
}

/// Hour of day including the fractional minutes, in [0, 24).
inline double fractional_hour(Minutes t) {
    Minutes m = t % kMinutesPerDay;
    if (m < 0) m += kMinutesPerDay;
    return static_cast<double>(m) / 60.0;
}

}  // namespace caal
