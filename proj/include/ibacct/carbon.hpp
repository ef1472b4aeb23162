#pragma once

// Embodied-carbon depreciation and grid carbon-intensity series.
//
// Embodied carbon is treated as a capital expense. Under the accelerated
// (double declining balance) schedule a machine of total embodied carbon C
// still carries C * (1 - rate)^y after y years, year y is allocated
// rate * C * (1 - rate)^y, and every hour of use in that year costs the
// annual allocation / 8760. The linear schedule spreads C evenly over
// `lifetime_years` and is kept for comparison only.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ibacct/error.hpp"
#include "ibacct/time.hpp"

namespace ibacct {

enum class DepreciationMethod { Accelerated, Linear };

struct DepreciationSchedule {
    double total_embodied_g = 0.0;
    double annual_rate = 0.4;
    int lifetime_years = 5;
    DepreciationMethod method = DepreciationMethod::Accelerated;

    void validate() const {
        detail::require(annual_rate > 0.0 && annual_rate < 1.0, "annual_rate must be in (0, 1)");
        detail::require(lifetime_years >= 1, "lifetime_years must be >= 1");
        detail::require(total_embodied_g >= 0.0, "total_embodied_g must be >= 0");
    }
};

/// Embodied carbon not yet attributed `age_years` after installation.
inline double remaining_carbon(const DepreciationSchedule& s, int age_years) {
    s.validate();
    detail::require(age_years >= 0, "age must be non-negative");
    detail::require(s.method == DepreciationMethod::Accelerated,
                    "remaining_carbon is defined for the accelerated schedule only");
    return s.total_embodied_g * std::pow(1.0 - s.annual_rate, age_years);
}

/// Embodied carbon attributed to year `age_years` of the machine's life (g/yr).
inline double annual_allocation(const DepreciationSchedule& s, int age_years) {
    s.validate();
    detail::require(age_years >= 0, "age must be non-negative");
    switch (s.method) {
        case DepreciationMethod::Accelerated:
            return s.annual_rate * remaining_carbon(s, age_years);
        case DepreciationMethod::Linear:
            return age_years < s.lifetime_years ? s.total_embodied_g / s.lifetime_years : 0.0;
    }
    return 0.0;
}

/// Embodied carbon charged per hour of whole-machine use (g/h).
inline double hourly_carbon_rate(const DepreciationSchedule& s, int age_years) {
    return annual_allocation(s, age_years) / kHoursPerYear;
}

/// Hourly grid carbon intensity for one region, as a step function starting at `start`.
class CarbonIntensitySeries {
public:
    CarbonIntensitySeries() = default;

    CarbonIntensitySeries(std::string region_id, Timestamp start, std::vector<double> hourly_g_per_kwh)
        : region_id_(std::move(region_id)), start_(start), values_(std::move(hourly_g_per_kwh)) {
        detail::require(!values_.empty(), "intensity series must be non-empty");
        detail::require(std::fmod(start_, kSecondsPerHour) == 0.0,
                        "intensity series must start on an hour boundary");
        for (double v : values_) {
            detail::require(v >= 0.0 && std::isfinite(v), "intensity values must be finite and >= 0");
        }
    }

    /// Constant intensity covering `hours` hours from `start`.
    static CarbonIntensitySeries constant(std::string region_id, Timestamp start, std::size_t hours,
                                          double g_per_kwh) {
        return {std::move(region_id), start, std::vector<double>(hours, g_per_kwh)};
    }

    const std::string& region_id() const noexcept { return region_id_; }
    Timestamp start() const noexcept { return start_; }
    Timestamp end() const noexcept { return start_ + static_cast<double>(values_.size()) * kSecondsPerHour; }
    const std::vector<double>& values() const noexcept { return values_; }

    bool covers(Timestamp t) const noexcept { return t >= start_ && t < end(); }

    bool covers(Timestamp t0, Timestamp t1) const noexcept {
        return t0 <= t1 && t0 >= start_ && (t0 < end()) && t1 <= end();
    }

private:
    std::string region_id_;
    Timestamp start_ = 0.0;
    std::vector<double> values_;
};

/// Intensity of the hour bucket containing `t`; the boundary belongs to the later hour.
inline double intensity_at(const CarbonIntensitySeries& ci, Timestamp t) {
    if (!ci.covers(t)) {
        throw MissingIntensity("no intensity for region '" + ci.region_id() + "' at " + format_iso8601(t));
    }
    const auto idx = static_cast<std::size_t>(std::floor((t - ci.start()) / kSecondsPerHour));
    return ci.values()[std::min(idx, ci.values().size() - 1)];
}

/// Time-weighted mean of the step function over [t0, t1].
inline double mean_intensity(const CarbonIntensitySeries& ci, Timestamp t0, Timestamp t1) {
    detail::require(t0 <= t1, "mean_intensity requires t0 <= t1");
    if (!ci.covers(t0, t1)) {
        throw MissingIntensity("intensity for region '" + ci.region_id() + "' does not cover [" +
                               format_iso8601(t0) + ", " + format_iso8601(t1) + "]");
    }
    if (t0 == t1) {
        return intensity_at(ci, t0);
    }
    const auto& v = ci.values();
    auto first = static_cast<std::size_t>(std::floor((t0 - ci.start()) / kSecondsPerHour));
    double weighted = 0.0;
    for (std::size_t i = first; i < v.size(); ++i) {
        const double lo = std::max(t0, ci.start() + static_cast<double>(i) * kSecondsPerHour);
        const double hi = std::min(t1, ci.start() + static_cast<double>(i + 1) * kSecondsPerHour);
        if (hi <= lo) {
            if (lo >= t1) break;
            continue;
        }
        weighted += v[i] * (hi - lo);
    }
    return weighted / (t1 - t0);
}

}  // namespace ibacct
