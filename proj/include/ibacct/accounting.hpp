#pragma once

// Job pricing under five accounting methods.
//
//   Runtime  cores x seconds                                    (core-s)
//   Energy   measured energy x PUE                              (J)
//   Peak     cores x seconds x per-core peak performance        (core-s x perf)
//   EBA      average of measured energy and the energy a fully
//            utilised share of the node would have drawn at TDP (J)
//   CBA      operational carbon + depreciated embodied carbon   (gCO2e)
//
// Every function here is pure. Units differ between methods and are never
// converted into one another.

#include <algorithm>
#include <array>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ibacct/carbon.hpp"
#include "ibacct/error.hpp"
#include "ibacct/time.hpp"

namespace ibacct {

struct Machine {
    std::string id;
    std::string name;
    int cores_per_node = 1;
    int node_count = 1;
    double tdp_watts = 0.0;   // full-node CPU TDP, all sockets
    double idle_watts = 0.0;  // whole-node idle draw
    double peak_perf_per_core = 0.0;
    int year_deployed = 0;
    double embodied_carbon_g = 0.0;
    std::string region_id;
    double pue = 1.0;

    int total_cores() const noexcept { return cores_per_node * node_count; }

    void validate() const {
        detail::require(!id.empty(), "machine id must be non-empty");
        detail::require(tdp_watts > 0.0, "machine '" + id + "': tdp_watts must be > 0");
        detail::require(idle_watts >= 0.0, "machine '" + id + "': idle_watts must be >= 0");
        detail::require(cores_per_node >= 1, "machine '" + id + "': cores_per_node must be >= 1");
        detail::require(node_count >= 1, "machine '" + id + "': node_count must be >= 1");
        detail::require(pue >= 1.0, "machine '" + id + "': pue must be >= 1.0");
        detail::require(embodied_carbon_g >= 0.0, "machine '" + id + "': embodied_carbon_g must be >= 0");
        detail::require(peak_perf_per_core >= 0.0, "machine '" + id + "': peak_perf_per_core must be >= 0");
    }
};

/// One run of a job on one machine.
struct Execution {
    std::string job_id;
    std::string machine_id;
    double duration_s = 0.0;
    double energy_j = 0.0;
    int cores_used = 1;
    Timestamp start_time = 0.0;

    void validate() const {
        detail::require(duration_s >= 0.0, "execution '" + job_id + "': duration_s must be >= 0");
        detail::require(energy_j >= 0.0, "execution '" + job_id + "': energy_j must be >= 0");
        detail::require(cores_used >= 1, "execution '" + job_id + "': cores_used must be >= 1");
    }

    void validate(const Machine& m) const {
        validate();
        detail::require(cores_used <= m.total_cores(),
                        "execution '" + job_id + "' uses more cores than machine '" + m.id + "' has");
    }
};

enum class Method { Runtime, Energy, Peak, EBA, CBA };

inline constexpr std::array<Method, 5> kAllMethods{Method::Runtime, Method::Energy, Method::Peak, Method::EBA,
                                                   Method::CBA};

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::Runtime: return "Runtime";
        case Method::Energy: return "Energy";
        case Method::Peak: return "Peak";
        case Method::EBA: return "EBA";
        case Method::CBA: return "CBA";
    }
    return "?";
}

inline Method parse_method(std::string_view s) {
    for (Method m : kAllMethods) {
        if (s == to_string(m)) return m;
    }
    throw ValidationError("unknown accounting method '" + std::string(s) + "'");
}

/// How the grid intensity is applied to a job's energy under CBA.
enum class IntensityMode {
    AtStart,     // intensity of the hour the job starts in
    Integrated,  // duration-weighted mean over the job's span
};

struct CostQuote {
    Method method = Method::Runtime;
    double amount = 0.0;
    /// Labelled components; when present they sum to `amount`.
    std::vector<std::pair<std::string, double>> breakdown;

    double component(std::string_view label) const {
        for (const auto& [k, v] : breakdown) {
            if (k == label) return v;
        }
        throw std::out_of_range("no component '" + std::string(label) + "'");
    }
};

/// Whole years since January 1st of the deployment year, as of `t`.
inline int machine_age_years(const Machine& m, Timestamp t) {
    const int age = calendar_year(t) - m.year_deployed;
    detail::require(age >= 0, "time " + format_iso8601(t) + " predates deployment of machine '" + m.id + "'");
    return age;
}

inline DepreciationSchedule depreciation_of(const Machine& m,
                                            DepreciationMethod method = DepreciationMethod::Accelerated) {
    DepreciationSchedule s;
    s.total_embodied_g = m.embodied_carbon_g;
    s.method = method;
    return s;
}

/// Embodied carbon per hour of whole-machine use at time `t` (g/h).
inline double machine_carbon_rate(const Machine& m, Timestamp t,
                                  DepreciationMethod method = DepreciationMethod::Accelerated) {
    return hourly_carbon_rate(depreciation_of(m, method), machine_age_years(m, t));
}

/// TDP attributable to the cores a job holds, capped at the whole machine.
inline double tdp_share(const Machine& m, int cores_used) {
    const double share = m.tdp_watts * (static_cast<double>(cores_used) / m.cores_per_node);
    return std::min(share, m.tdp_watts * m.node_count);
}

inline CostQuote cost_runtime(const Execution& exec) {
    exec.validate();
    return {Method::Runtime, exec.cores_used * exec.duration_s, {}};
}

inline CostQuote cost_energy(const Execution& exec, const Machine& m) {
    exec.validate(m);
    return {Method::Energy, exec.energy_j * m.pue, {}};
}

inline CostQuote cost_peak(const Execution& exec, const Machine& m) {
    exec.validate(m);
    return {Method::Peak, exec.cores_used * exec.duration_s * m.peak_perf_per_core, {}};
}

/// Energy-based accounting: (measured + beta * potential) / 2.
inline CostQuote cost_eba(const Execution& exec, const Machine& m, double beta = 1.0) {
    exec.validate(m);
    detail::require(beta > 0.0 && beta <= 1.0, "beta must be in (0, 1]");
    const double measured = exec.energy_j * m.pue;
    const double potential = beta * (exec.duration_s * tdp_share(m, exec.cores_used));
    // Halving is exact, so the two halves sum to (measured + potential) / 2 bit-for-bit.
    const double measured_half = measured / 2.0;
    const double potential_half = potential / 2.0;
    return {Method::EBA, measured_half + potential_half,
            {{"measured", measured_half}, {"potential", potential_half}}};
}

/// Carbon-based accounting: operational grid carbon plus the core share of the
/// machine's current hourly embodied-carbon rate.
inline CostQuote cost_cba(const Execution& exec, const Machine& m, const CarbonIntensitySeries& ci,
                          IntensityMode mode = IntensityMode::AtStart) {
    exec.validate(m);
    detail::require(ci.region_id() == m.region_id, "intensity series region '" + ci.region_id() +
                                                       "' does not match machine region '" + m.region_id + "'");
    const double intensity = mode == IntensityMode::AtStart
                                 ? intensity_at(ci, exec.start_time)
                                 : mean_intensity(ci, exec.start_time, exec.start_time + exec.duration_s);
    const double kwh = exec.energy_j * m.pue / kJoulesPerKwh;
    const double operational = kwh * intensity;
    const double core_share = static_cast<double>(exec.cores_used) / m.total_cores();
    const double embodied = (exec.duration_s / kSecondsPerHour) * machine_carbon_rate(m, exec.start_time) * core_share;
    return {Method::CBA, operational + embodied, {{"operational_g", operational}, {"embodied_g", embodied}}};
}

struct QuoteOptions {
    double beta = 1.0;
    IntensityMode mode = IntensityMode::AtStart;
};

inline CostQuote quote(Method method, const Execution& exec, const Machine& m, const CarbonIntensitySeries* ci,
                       const QuoteOptions& opts = {}) {
    switch (method) {
        case Method::Runtime: return cost_runtime(exec);
        case Method::Energy: return cost_energy(exec, m);
        case Method::Peak: return cost_peak(exec, m);
        case Method::EBA: return cost_eba(exec, m, opts.beta);
        case Method::CBA:
            detail::require(ci != nullptr, "CBA requires a carbon-intensity series");
            return cost_cba(exec, m, *ci, opts.mode);
    }
    throw ValidationError("unknown method");
}

inline std::map<Method, CostQuote> quote_all(const Execution& exec, const Machine& m, const CarbonIntensitySeries& ci,
                                             const QuoteOptions& opts = {}) {
    std::map<Method, CostQuote> out;
    for (Method method : kAllMethods) {
        out.emplace(method, quote(method, exec, m, &ci, opts));
    }
    return out;
}

}  // namespace ibacct
