#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ibacct/accounting.hpp"
#include "ibacct/error.hpp"
#include "ibacct/mixture.hpp"
#include "ibacct/neighbors.hpp"
#include "ibacct/trace.hpp"

namespace ibacct {

enum class Priority { Low, Medium, High, VeryHigh };

inline constexpr std::array<Priority, 4> kAllPriorities{Priority::Low, Priority::Medium, Priority::High,
                                                        Priority::VeryHigh};

inline std::string_view to_string(Priority p) {
    switch (p) {
        case Priority::Low: return "Low";
        case Priority::Medium: return "Medium";
        case Priority::High: return "High";
        case Priority::VeryHigh: return "VeryHigh";
    }
    return "?";
}

inline Priority parse_priority(std::string_view s) {
    for (Priority p : kAllPriorities) {
        if (s == to_string(p)) return p;
    }
    throw ValidationError("unknown priority '" + std::string(s) + "'");
}

struct MachineEstimate {
    double runtime_s = 0.0;
    double energy_j = 0.0;
};

/// A job with its runtime and energy on every machine.
struct JobProfile {
    std::string job_id;
    std::string user_id;
    Timestamp submit_time = 0.0;
    int cores_requested = 1;
    Priority priority = Priority::Low;
    std::map<std::string, MachineEstimate> per_machine;
    std::vector<std::string> eligible_machines;  // sorted by id

    bool eligible_on(const std::string& machine_id) const {
        return std::binary_search(eligible_machines.begin(), eligible_machines.end(), machine_id);
    }

    const MachineEstimate& on(const std::string& machine_id) const {
        auto it = per_machine.find(machine_id);
        if (it == per_machine.end()) {
            throw ValidationError("job '" + job_id + "' has no estimate for machine '" + machine_id + "'");
        }
        return it->second;
    }

    /// The execution this job would be on `m` starting at `start`.
    Execution execution_on(const Machine& m, Timestamp start) const {
        const auto& est = on(m.id);
        return {job_id, m.id, est.runtime_s, est.energy_j, cores_requested, start};
    }
};

inline bool is_eligible(const Machine& m, int cores) { return cores <= m.total_cores(); }

/// Recomputes `eligible_machines` from core counts.
inline void assign_eligibility(JobProfile& p, const std::vector<Machine>& machines) {
    p.eligible_machines.clear();
    for (const auto& m : machines) {
        if (is_eligible(m, p.cores_requested) && p.per_machine.count(m.id)) p.eligible_machines.push_back(m.id);
    }
    std::sort(p.eligible_machines.begin(), p.eligible_machines.end());
}

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

struct ProfileOptions {
    std::uint64_t seed = 0;
    int repeat = 2;
    /// Jobs from the same user with the same core count share one counter draw.
    bool collapse_repetitions = false;
};

/// Extrapolates every trace record to every machine. Each record's random
/// stream is derived from its job id, so the output does not depend on order.
inline std::vector<JobProfile> build_profiles(const std::vector<TraceRecord>& trace, const std::vector<Machine>& machines,
                                              const MixtureModel& mixture, const NeighborModel& neighbors,
                                              const ProfileOptions& opts = {}) {
    detail::require(opts.repeat >= 1, "repeat factor must be >= 1");
    detail::require(!machines.empty(), "no machines");
    mixture.validate();
    detail::require(mixture.dimension() == neighbors.dimension(),
                    "mixture and neighbour model disagree on counter dimension");
    const std::string& ref_id = neighbors.reference_machine();
    detail::require(std::any_of(machines.begin(), machines.end(), [&](const Machine& m) { return m.id == ref_id; }),
                    "reference machine '" + ref_id + "' is not configured");

    Timestamp first = 0.0, last = 0.0;
    if (!trace.empty()) {
        auto [lo, hi] = std::minmax_element(trace.begin(), trace.end(),
                                            [](const auto& a, const auto& b) { return a.submit_time < b.submit_time; });
        first = lo->submit_time;
        last = hi->submit_time;
    }
    // Repetition r is replayed r trace-spans later.
    const double span = last - first + 1.0;

    std::vector<JobProfile> out;
    out.reserve(trace.size() * static_cast<std::size_t>(opts.repeat));
    for (int rep = 0; rep < opts.repeat; ++rep) {
        for (const auto& rec : trace) {
            const std::string key = opts.collapse_repetitions
                                        ? rec.user_id + "|" + std::to_string(rec.cores_requested)
                                        : rec.job_id;
            std::mt19937_64 counter_rng(detail::mix_seed(opts.seed, detail::fnv1a(key)));
            const CounterVector cv = sample_counter(mixture, counter_rng);

            std::mt19937_64 prio_rng(detail::mix_seed(opts.seed ^ 0x5eed, detail::fnv1a(rec.job_id) + rep));
            JobProfile p;
            p.job_id = opts.repeat > 1 ? rec.job_id + "#" + std::to_string(rep) : rec.job_id;
            p.user_id = rec.user_id;
            p.submit_time = rec.submit_time + rep * span;
            p.cores_requested = rec.cores_requested;
            p.priority = kAllPriorities[std::uniform_int_distribution<std::size_t>(0, 3)(prio_rng)];
            for (const auto& m : machines) {
                if (m.id == ref_id) {
                    p.per_machine[m.id] = {rec.runtime_ref_s, rec.energy_ref_j};
                } else {
                    const Prediction pr = predict_execution(neighbors, cv, rec, m);
                    p.per_machine[m.id] = {pr.runtime_s, pr.energy_j};
                }
            }
            assign_eligibility(p, machines);
            out.push_back(std::move(p));
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.submit_time < b.submit_time; });
    return out;
}

/// Work in core-hours: cores x mean runtime over eligible machines.
inline double work_of(const JobProfile& p) {
    detail::require(!p.eligible_machines.empty(), "job '" + p.job_id + "' has no eligible machine");
    double sum = 0.0;
    for (const auto& id : p.eligible_machines) sum += p.on(id).runtime_s;
    return p.cores_requested * (sum / static_cast<double>(p.eligible_machines.size())) / kSecondsPerHour;
}

inline void to_json(nlohmann::json& j, const JobProfile& p) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [id, est] : p.per_machine) {
        per[id] = {{"runtime_s", est.runtime_s}, {"energy_j", est.energy_j}};
    }
    j = {{"job_id", p.job_id},
         {"user_id", p.user_id},
         {"submit_time", p.submit_time},
         {"cores", p.cores_requested},
         {"priority", std::string(to_string(p.priority))},
         {"machines", per},
         {"eligible", p.eligible_machines}};
}

inline void from_json(const nlohmann::json& j, JobProfile& p) {
    p.job_id = j.at("job_id").get<std::string>();
    p.user_id = j.at("user_id").get<std::string>();
    p.submit_time = j.at("submit_time").get<double>();
    p.cores_requested = j.at("cores").get<int>();
    p.priority = parse_priority(j.at("priority").get<std::string>());
    p.per_machine.clear();
    for (const auto& [id, est] : j.at("machines").items()) {
        p.per_machine[id] = {est.at("runtime_s").get<double>(), est.at("energy_j").get<double>()};
    }
    p.eligible_machines = j.at("eligible").get<std::vector<std::string>>();
    std::sort(p.eligible_machines.begin(), p.eligible_machines.end());
    for (const auto& id : p.eligible_machines) {
        const auto& est = p.on(id);
        detail::require(est.runtime_s > 0.0 && est.energy_j > 0.0,
                        "job '" + p.job_id + "': estimates must be positive on eligible machines");
    }
}

inline nlohmann::json profiles_to_json(const std::vector<JobProfile>& profiles, const std::string& reference_machine) {
    return {{"reference_machine", reference_machine}, {"profiles", profiles}};
}

inline std::vector<JobProfile> profiles_from_json(const nlohmann::json& j) {
    return j.at("profiles").get<std::vector<JobProfile>>();
}

}  // namespace ibacct
