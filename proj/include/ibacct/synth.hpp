#pragma once

// Seeded synthetic stand-ins for data that is not shipped with the project:
// a job trace measured on the reference machine, counter captures from that
// machine, and a benchmark training set for the neighbour model.
//
// Benchmark response model. A counter vector {instructions/s, LLC-misses/s}
// is reduced to a memory-boundness m = mpki / (mpki + 5). On machine M the
// relative runtime is
//
//     (1 - m) / peak_perf_per_core + m / 1.1^(year_deployed - 2017)
//
// and the per-core power is 0.2 * idle/cores + TDP/cores * (0.5 + 0.4 (1 - m)).
// Both are reported relative to the reference machine with 5% lognormal noise.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "ibacct/accounting.hpp"
#include "ibacct/error.hpp"
#include "ibacct/mixture.hpp"
#include "ibacct/neighbors.hpp"
#include "ibacct/trace.hpp"

namespace ibacct {

struct TraceGenParams {
    std::size_t jobs = 1000;
    std::size_t users = 20;
    int max_cores = 64;                    // cap on cores per job
    double mean_interarrival_s = 600.0;
    double runtime_log_mean = 7.5;         // ln seconds
    double runtime_log_sigma = 1.2;
    double power_per_core_w = 3.5;         // mean draw per core on the reference machine
    Timestamp start = 1672531200.0;        // 2023-01-01T00:00:00Z
    double missing_energy_fraction = 0.0;  // rows emitted with zero energy (dropped on load)

    void validate() const {
        detail::require(jobs >= 1, "jobs must be >= 1");
        detail::require(users >= 1, "users must be >= 1");
        detail::require(max_cores >= 1, "max_cores must be >= 1");
        detail::require(mean_interarrival_s > 0.0, "mean_interarrival_s must be > 0");
        detail::require(runtime_log_sigma >= 0.0, "runtime_log_sigma must be >= 0");
        detail::require(power_per_core_w > 0.0, "power_per_core_w must be > 0");
        detail::require(missing_energy_fraction >= 0.0 && missing_energy_fraction < 1.0,
                        "missing_energy_fraction must be in [0, 1)");
    }
};

/// Core counts are powers of two with roughly a sixth of jobs above 16 cores.
inline std::vector<TraceRecord> generate_trace(const TraceGenParams& p, std::uint64_t seed) {
    p.validate();
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> gap(1.0 / p.mean_interarrival_s);
    std::lognormal_distribution<double> runtime(p.runtime_log_mean, p.runtime_log_sigma);
    std::uniform_real_distribution<double> util(0.7, 1.1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> user(0, p.users - 1);
    static constexpr int kCores[] = {1, 2, 4, 8, 16, 32, 64, 128};
    std::discrete_distribution<int> cores_bucket({14, 14, 16, 18, 21, 9, 6, 2});

    std::vector<TraceRecord> out;
    out.reserve(p.jobs);
    Timestamp t = p.start;
    for (std::size_t i = 0; i < p.jobs; ++i) {
        t += gap(rng);
        TraceRecord r;
        r.job_id = "job" + std::to_string(i);
        r.user_id = "u" + std::to_string(user(rng));
        r.submit_time = std::round(t);
        r.cores_requested = std::min(kCores[cores_bucket(rng)], p.max_cores);
        r.runtime_ref_s = std::max(1.0, std::round(runtime(rng)));
        r.energy_ref_j = std::round(r.runtime_ref_s * r.cores_requested * p.power_per_core_w * util(rng));
        if (unit(rng) < p.missing_energy_fraction) r.energy_ref_j = 0.0;
        out.push_back(std::move(r));
    }
    return out;
}

inline const std::vector<std::string>& default_counter_names() {
    static const std::vector<std::string> names{"instructions_per_s", "llc_misses_per_s"};
    return names;
}

/// Three workload families (compute-bound, mixed, memory-bound) as seen on the reference machine.
inline MixtureModel reference_counter_model() {
    MixtureModel m;
    m.components = {
        {0.45, {9.0e9, 4.0e6}, {1.5e9 * 1.5e9, 1.5e6 * 1.5e6}},
        {0.35, {5.0e9, 2.5e7}, {1.0e9 * 1.0e9, 6.0e6 * 6.0e6}},
        {0.20, {2.0e9, 6.0e7}, {5.0e8 * 5.0e8, 1.2e7 * 1.2e7}},
    };
    return m;
}

namespace detail {

inline double memory_boundness(const CounterVector& cv) {
    const double ips = std::max(cv.at(0), 1.0);
    const double mpki = 1000.0 * cv.at(1) / ips;
    return mpki / (mpki + 5.0);
}

inline double relative_time(const Machine& m, double mem) {
    const double perf = std::max(m.peak_perf_per_core, 1e-9) / 1000.0;
    const double mem_speed = std::pow(1.1, m.year_deployed - 2017);
    return (1.0 - mem) / perf + mem / mem_speed;
}

inline double core_power(const Machine& m, double mem) {
    return 0.2 * m.idle_watts / m.cores_per_node + m.tdp_watts / m.cores_per_node * (0.5 + 0.4 * (1.0 - mem));
}

}  // namespace detail

/// Benchmarks drawn from `counters`, each timed on every machine relative to `reference_id`.
inline std::vector<TrainingPoint> synthetic_benchmarks(const std::vector<Machine>& machines,
                                                       const std::string& reference_id, const MixtureModel& counters,
                                                       std::size_t n, std::uint64_t seed) {
    detail::require(n >= 1, "benchmark count must be >= 1");
    auto ref = std::find_if(machines.begin(), machines.end(), [&](const Machine& m) { return m.id == reference_id; });
    detail::require(ref != machines.end(), "reference machine '" + reference_id + "' is not configured");
    std::mt19937_64 rng(seed);
    std::lognormal_distribution<double> noise(0.0, 0.05);
    std::vector<TrainingPoint> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        TrainingPoint p;
        p.counters = sample_counter(counters, rng);
        const double mem = detail::memory_boundness(p.counters);
        const double t_ref = detail::relative_time(*ref, mem);
        const double p_ref = detail::core_power(*ref, mem);
        for (const auto& m : machines) {
            if (m.id == reference_id) {
                p.per_machine[m.id] = {1.0, 1.0};
                continue;
            }
            p.per_machine[m.id] = {detail::relative_time(m, mem) / t_ref * noise(rng),
                                   detail::core_power(m, mem) / p_ref * noise(rng)};
        }
        out.push_back(std::move(p));
    }
    return out;
}

inline void write_training_set(std::ostream& os, const std::vector<TrainingPoint>& points,
                               const std::vector<std::string>& counter_names) {
    detail::require(!points.empty(), "empty training set");
    for (const auto& name : counter_names) os << name << ',';
    bool first = true;
    for (const auto& [id, rc] : points.front().per_machine) {
        os << (first ? "" : ",") << id << ".runtime_scale," << id << ".power_scale";
        first = false;
    }
    os << '\n';
    char buf[64];
    auto num = [&](double v) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, p);
    };
    for (const auto& p : points) {
        for (double c : p.counters) os << num(c) << ',';
        first = true;
        for (const auto& [id, rc] : p.per_machine) {
            os << (first ? "" : ",") << num(rc.runtime_scale) << ',' << num(rc.power_scale);
            first = false;
        }
        os << '\n';
    }
}

}  // namespace ibacct
