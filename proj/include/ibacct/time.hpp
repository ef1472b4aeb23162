#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <string_view>

#include "ibacct/error.hpp"

namespace ibacct {

/// Absolute time in seconds since the Unix epoch (UTC).
using Timestamp = double;

inline constexpr double kSecondsPerHour = 3600.0;
inline constexpr double kHoursPerYear = 24.0 * 365.0;
inline constexpr double kJoulesPerKwh = 3.6e6;

/// Epoch seconds of 00:00:00 UTC on January 1st of `year`.
inline Timestamp year_start(int year) {
    using namespace std::chrono;
    const sys_days d{std::chrono::year{year} / January / 1};
    return static_cast<Timestamp>(duration_cast<seconds>(d.time_since_epoch()).count());
}

/// Calendar year (UTC) containing `t`.
inline int calendar_year(Timestamp t) {
    using namespace std::chrono;
    const sys_seconds s{seconds{static_cast<long long>(std::floor(t))}};
    const year_month_day ymd{floor<days>(s)};
    return static_cast<int>(ymd.year());
}

/// Parses "YYYY-MM-DDTHH:MM:SSZ" (the trailing Z and seconds are optional).
inline Timestamp parse_iso8601(std::string_view text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    const std::string buf(text);
    const int n = std::sscanf(buf.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d", &y, &mo, &d, &h, &mi, &s);
    if (n < 5) {
        throw ValidationError("bad ISO-8601 timestamp: '" + buf + "'");
    }
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{y}, month{static_cast<unsigned>(mo)},
                             day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) {
        throw ValidationError("bad ISO-8601 timestamp: '" + buf + "'");
    }
    const auto secs = duration_cast<seconds>(sys_days{ymd}.time_since_epoch()).count();
    return static_cast<Timestamp>(secs + h * 3600LL + mi * 60LL + s);
}

inline std::string format_iso8601(Timestamp t) {
    using namespace std::chrono;
    const sys_seconds s{seconds{static_cast<long long>(std::floor(t))}};
    const auto dp = floor<days>(s);
    const year_month_day ymd{dp};
    const hh_mm_ss hms{s - dp};
    char out[64];
    std::snprintf(out, sizeof out, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return out;
}

}  // namespace ibacct
