#pragma once

// Discrete-event simulation of one user submitting a workload to several
// machines under a machine-selection policy and a fixed allocation.
//
// Each machine is a pool of cores with a strict FIFO queue (no backfilling).
// A user may have at most one running job per machine. Jobs arrive at their
// submit time, the policy picks a machine, and the job is admitted only if
// its quote still fits in the allocation. Admitted jobs run to completion on
// the machine they were queued on.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "ibacct/accounting.hpp"
#include "ibacct/carbon.hpp"
#include "ibacct/error.hpp"
#include "ibacct/profiles.hpp"

namespace ibacct {

enum class PolicyKind { Greedy, Energy, Mixed, EFT, Runtime, Fixed };

struct Policy {
    PolicyKind kind = PolicyKind::Greedy;
    std::string machine;  // Fixed only

    static Policy fixed(std::string machine_id) { return {PolicyKind::Fixed, std::move(machine_id)}; }

    std::string name() const {
        switch (kind) {
            case PolicyKind::Greedy: return "Greedy";
            case PolicyKind::Energy: return "Energy";
            case PolicyKind::Mixed: return "Mixed";
            case PolicyKind::EFT: return "EFT";
            case PolicyKind::Runtime: return "Runtime";
            case PolicyKind::Fixed: return "Fixed:" + machine;
        }
        return "?";
    }

    /// Accepts "Greedy", "Energy", "Mixed", "EFT", "Runtime" or "Fixed:<machine_id>".
    static Policy parse(std::string_view s) {
        if (s == "Greedy") return {PolicyKind::Greedy, {}};
        if (s == "Energy") return {PolicyKind::Energy, {}};
        if (s == "Mixed") return {PolicyKind::Mixed, {}};
        if (s == "EFT") return {PolicyKind::EFT, {}};
        if (s == "Runtime") return {PolicyKind::Runtime, {}};
        if (s.rfind("Fixed:", 0) == 0 && s.size() > 6) return fixed(std::string(s.substr(6)));
        throw ValidationError("unknown policy '" + std::string(s) + "'");
    }

    bool operator==(const Policy&) const = default;
};

/// Carbon-intensity series keyed by region id.
using IntensityMap = std::map<std::string, CarbonIntensitySeries>;

inline const CarbonIntensitySeries* find_series(const IntensityMap& ci, const std::string& region) {
    auto it = ci.find(region);
    return it == ci.end() ? nullptr : &it->second;
}

/// Live state of every machine: running jobs, FIFO queue, and the clock.
class ClusterState {
public:
    struct Running {
        std::size_t job = 0;
        std::string user;
        int cores = 0;
        Timestamp end = 0.0;
    };
    struct Queued {
        std::size_t job = 0;
        std::string user;
        int cores = 0;
        double runtime_s = 0.0;
    };
    struct Slot {
        Machine machine;
        std::vector<Running> running;
        std::deque<Queued> queue;
        int used_cores = 0;
    };

    ClusterState() = default;

    explicit ClusterState(std::vector<Machine> machines, Timestamp now = 0.0) : now_(now) {
        std::sort(machines.begin(), machines.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        for (auto& m : machines) {
            m.validate();
            detail::require(index_.emplace(m.id, slots_.size()).second, "duplicate machine id '" + m.id + "'");
            slots_.push_back({std::move(m), {}, {}, 0});
        }
    }

    Timestamp now() const noexcept { return now_; }
    void set_now(Timestamp t) noexcept { now_ = t; }

    const std::vector<Slot>& slots() const noexcept { return slots_; }
    std::vector<Slot>& slots() noexcept { return slots_; }

    std::size_t index_of(const std::string& machine_id) const {
        auto it = index_.find(machine_id);
        if (it == index_.end()) throw ValidationError("unknown machine '" + machine_id + "'");
        return it->second;
    }
    bool has(const std::string& machine_id) const { return index_.count(machine_id) == 1; }

    const Machine& machine(const std::string& id) const { return slots_[index_of(id)].machine; }

    int free_cores(std::size_t i) const { return slots_[i].machine.total_cores() - slots_[i].used_cores; }

    bool user_busy(std::size_t i, const std::string& user) const {
        return std::any_of(slots_[i].running.begin(), slots_[i].running.end(),
                           [&](const Running& r) { return r.user == user; });
    }

    /// Appends `q` behind the current queue of machine `i`.
    void enqueue(std::size_t i, Queued q) { slots_[i].queue.push_back(std::move(q)); }

    /// Starts a job on machine `i` at the current time.
    void start(std::size_t i, std::size_t job, const std::string& user, int cores, Timestamp end) {
        slots_[i].running.push_back({job, user, cores, end});
        slots_[i].used_cores += cores;
    }

    void finish(std::size_t i, std::size_t job) {
        auto& run = slots_[i].running;
        auto it = std::find_if(run.begin(), run.end(), [&](const Running& r) { return r.job == job; });
        if (it == run.end()) throw std::logic_error("finishing a job that is not running");
        slots_[i].used_cores -= it->cores;
        run.erase(it);
    }

    /// Earliest projected start of a job joining the back of machine `i`'s
    /// queue, replaying the FIFO over current end times.
    Timestamp projected_start(std::size_t i, int cores, const std::string& user) const {
        const Slot& s = slots_[i];
        const int capacity = s.machine.total_cores();
        if (cores > capacity) {
            throw ValidationError("job needs " + std::to_string(cores) + " cores but machine '" + s.machine.id +
                                  "' has " + std::to_string(capacity));
        }
        std::vector<std::tuple<Timestamp, int, std::string>> running;
        running.reserve(s.running.size() + s.queue.size());
        for (const auto& r : s.running) running.emplace_back(r.end, r.cores, r.user);

        auto place = [&](Timestamp t, int need, const std::string& who) {
            while (true) {
                int used = 0;
                bool busy = false;
                Timestamp next = std::numeric_limits<Timestamp>::infinity();
                for (const auto& [end, c, u] : running) {
                    if (end <= t) continue;
                    used += c;
                    busy = busy || u == who;
                    next = std::min(next, end);
                }
                if (capacity - used >= need && !busy) return t;
                t = next;
            }
        };

        // Start times are non-decreasing down a FIFO, so anything ended by `t` can be dropped.
        Timestamp t = now_;
        for (const auto& q : s.queue) {
            t = place(t, q.cores, q.user);
            std::erase_if(running, [t](const auto& r) { return std::get<0>(r) <= t; });
            running.emplace_back(t + q.runtime_s, q.cores, q.user);
        }
        return place(t, cores, user);
    }

private:
    std::vector<Slot> slots_;
    std::map<std::string, std::size_t> index_;
    Timestamp now_ = 0.0;
};

/// Seconds a job of `cores` cores (owned by `user`) would wait on `machine_id` if queued now.
inline double estimate_wait(const ClusterState& state, const std::string& machine_id, int cores,
                            const std::string& user = "user") {
    return state.projected_start(state.index_of(machine_id), cores, user) - state.now();
}

struct SelectionContext {
    Method method = Method::EBA;
    const IntensityMap* intensity = nullptr;
    QuoteOptions quote;
};

/// A machine choice together with what the policy knew about it.
struct Selection {
    std::string machine_id;
    Timestamp estimated_start = 0.0;
    std::optional<CostQuote> quote;
};

namespace detail {

struct Candidate {
    std::size_t idx = 0;
    double wait = 0.0;
    double runtime = 0.0;
    std::optional<CostQuote> quote;
};

inline bool quote_is_time_dependent(Method m) { return m == Method::CBA; }

inline std::optional<CostQuote> try_quote(const JobProfile& job, const Machine& m, Timestamp start,
                                          const SelectionContext& ctx) {
    const CarbonIntensitySeries* series = ctx.intensity ? find_series(*ctx.intensity, m.region_id) : nullptr;
    try {
        return quote(ctx.method, job.execution_on(m, start), m, series, ctx.quote);
    } catch (const MissingIntensity&) {
        return std::nullopt;
    }
}

}  // namespace detail

/// Picks a machine for `job` under `policy`, or nullopt when the job cannot be placed.
inline std::optional<Selection> choose_machine(const Policy& policy, const JobProfile& job, const ClusterState& state,
                                               const SelectionContext& ctx) {
    const std::string user = job.user_id;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < state.slots().size(); ++i) {
        const Machine& m = state.slots()[i].machine;
        if (is_eligible(m, job.cores_requested) && job.eligible_on(m.id)) eligible.push_back(i);
    }
    if (eligible.empty()) return std::nullopt;

    auto wait_on = [&](std::size_t i) {
        return state.projected_start(i, job.cores_requested, user) - state.now();
    };
    auto make = [&](std::size_t i, double wait, std::optional<CostQuote> q = std::nullopt) {
        return Selection{state.slots()[i].machine.id, state.now() + wait, std::move(q)};
    };
    auto runtime_on = [&](std::size_t i) { return job.on(state.slots()[i].machine.id).runtime_s; };

    // Ties keep the first candidate; slots are sorted by machine id.
    auto greedy = [&]() -> std::optional<detail::Candidate> {
        std::optional<detail::Candidate> best;
        for (std::size_t i : eligible) {
            const double wait = detail::quote_is_time_dependent(ctx.method) ? wait_on(i) : 0.0;
            auto q = detail::try_quote(job, state.slots()[i].machine, state.now() + wait, ctx);
            if (!q) continue;
            if (!best || q->amount < best->quote->amount) best = detail::Candidate{i, wait, runtime_on(i), q};
        }
        return best;
    };

    switch (policy.kind) {
        case PolicyKind::Greedy: {
            auto best = greedy();
            if (!best) return std::nullopt;
            const double wait = detail::quote_is_time_dependent(ctx.method) ? best->wait : wait_on(best->idx);
            return make(best->idx, wait, best->quote);
        }
        case PolicyKind::Energy:
        case PolicyKind::Runtime: {
            std::size_t best = eligible.front();
            auto key = [&](std::size_t i) {
                const auto& est = job.on(state.slots()[i].machine.id);
                return policy.kind == PolicyKind::Energy ? est.energy_j : est.runtime_s;
            };
            for (std::size_t i : eligible) {
                if (key(i) < key(best)) best = i;
            }
            return make(best, wait_on(best));
        }
        case PolicyKind::EFT: {
            std::optional<detail::Candidate> best;
            for (std::size_t i : eligible) {
                const double w = wait_on(i);
                const double r = runtime_on(i);
                if (!best || w + r < best->wait + best->runtime) best = detail::Candidate{i, w, r, std::nullopt};
            }
            return make(best->idx, best->wait);
        }
        case PolicyKind::Mixed: {
            auto cheap = greedy();
            if (!cheap) return std::nullopt;
            const double cheap_wait = detail::quote_is_time_dependent(ctx.method) ? cheap->wait : wait_on(cheap->idx);
            const double cheap_completion = cheap_wait + cheap->runtime;
            std::optional<detail::Candidate> fast;
            for (std::size_t i : eligible) {
                const double w = wait_on(i);
                const double r = runtime_on(i);
                if (w + r <= 0.5 * cheap_completion && (!fast || w + r < fast->wait + fast->runtime)) {
                    fast = detail::Candidate{i, w, r, std::nullopt};
                }
            }
            if (fast) return make(fast->idx, fast->wait);
            return make(cheap->idx, cheap_wait, cheap->quote);
        }
        case PolicyKind::Fixed: {
            if (!state.has(policy.machine)) return std::nullopt;
            const std::size_t i = state.index_of(policy.machine);
            if (std::find(eligible.begin(), eligible.end(), i) == eligible.end()) return std::nullopt;
            return make(i, wait_on(i));
        }
    }
    return std::nullopt;
}

inline std::optional<std::string> select_machine(const Policy& policy, const JobProfile& job, const ClusterState& state,
                                                 const SelectionContext& ctx) {
    auto sel = choose_machine(policy, job, state, ctx);
    if (!sel) return std::nullopt;
    return sel->machine_id;
}

struct Allocation {
    double budget = std::numeric_limits<double>::infinity();
    double spent = 0.0;

    bool admits(double amount) const { return spent + amount <= budget; }
};

struct SimOptions {
    /// End of simulated time; defaults to the earliest end of the intensity coverage.
    std::optional<Timestamp> horizon;
    /// Collapse every job onto one user (the default single-user study).
    bool single_user = true;
    QuoteOptions quote;
};

enum class JobFate { Completed, Unfinished, Queued, OverBudget, Unplaceable, NotArrived };

inline std::string_view to_string(JobFate f) {
    switch (f) {
        case JobFate::Completed: return "completed";
        case JobFate::Unfinished: return "unfinished";
        case JobFate::Queued: return "queued";
        case JobFate::OverBudget: return "over_budget";
        case JobFate::Unplaceable: return "unplaceable";
        case JobFate::NotArrived: return "not_arrived";
    }
    return "?";
}

struct JobRecord {
    std::string job_id;
    std::string machine_id;  // empty when never placed
    JobFate fate = JobFate::NotArrived;
    Timestamp submit = 0.0;
    Timestamp start = std::numeric_limits<double>::quiet_NaN();
    Timestamp end = std::numeric_limits<double>::quiet_NaN();
    double admission_quote = 0.0;  // at selection time, estimated start
    double charged = 0.0;          // recomputed at actual start
    double energy_j = 0.0;
    double operational_g = 0.0;
    double embodied_g = 0.0;
    double work_core_h = 0.0;

    bool operator==(const JobRecord& o) const {
        auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
        return job_id == o.job_id && machine_id == o.machine_id && fate == o.fate && same(submit, o.submit) &&
               same(start, o.start) && same(end, o.end) && same(admission_quote, o.admission_quote) &&
               same(charged, o.charged) && same(energy_j, o.energy_j) && same(operational_g, o.operational_g) &&
               same(embodied_g, o.embodied_g) && same(work_core_h, o.work_core_h);
    }
};

enum class SimEventKind { Admit, Start, End };

struct SimEvent {
    Timestamp time = 0.0;
    SimEventKind kind = SimEventKind::Start;
    std::string job_id;
    std::string machine_id;
    std::string user;
    int cores = 0;
    int occupied_after = 0;
    double spent_after = 0.0;

    bool operator==(const SimEvent&) const = default;
};

struct SimulationResult {
    std::string policy;
    Method method = Method::EBA;
    double budget = 0.0;
    double spent = 0.0;
    double charged = 0.0;
    Timestamp horizon = 0.0;
    std::size_t jobs_completed = 0;
    std::size_t jobs_admitted = 0;
    std::size_t jobs_over_budget = 0;
    std::size_t jobs_unplaceable = 0;
    std::size_t jobs_unfinished = 0;
    double work_core_h = 0.0;
    double energy_kwh = 0.0;
    double operational_g = 0.0;
    double attributed_g = 0.0;
    std::vector<std::pair<Timestamp, std::size_t>> timeline;
    std::map<std::string, std::size_t> per_machine_jobs;
    std::vector<JobRecord> jobs;
    std::vector<SimEvent> events;

    bool operator==(const SimulationResult&) const = default;
};

namespace detail {

inline std::vector<std::string> eligible_ids(const JobProfile& p, const std::vector<Machine>& machines) {
    std::vector<std::string> out;
    for (const auto& m : machines) {
        auto it = p.per_machine.find(m.id);
        if (it == p.per_machine.end() || !is_eligible(m, p.cores_requested)) continue;
        if (!(it->second.runtime_s > 0.0 && it->second.energy_j > 0.0)) continue;
        if (!p.eligible_machines.empty() && !p.eligible_on(m.id)) continue;
        out.push_back(m.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

/// Earliest instant at which every configured region's intensity coverage ends.
inline Timestamp coverage_end(const std::vector<Machine>& machines, const IntensityMap& ci) {
    Timestamp end = std::numeric_limits<Timestamp>::infinity();
    for (const auto& m : machines) {
        const auto* s = find_series(ci, m.region_id);
        detail::require(s != nullptr, "no carbon-intensity series for region '" + m.region_id + "'");
        end = std::min(end, s->end());
    }
    return end;
}

inline SimulationResult run(const std::vector<JobProfile>& profiles, const std::vector<Machine>& machines,
                            const Policy& policy, Method method, const IntensityMap& ci, Allocation allocation,
                            const SimOptions& opts = {}) {
    detail::require(!machines.empty(), "no machines configured");
    detail::require(allocation.budget >= 0.0, "budget must be non-negative");
    if (policy.kind == PolicyKind::Fixed) {
        detail::require(std::any_of(machines.begin(), machines.end(), [&](const Machine& m) { return m.id == policy.machine; }),
                        "fixed policy names unknown machine '" + policy.machine + "'");
    }
    const Timestamp cov_end = coverage_end(machines, ci);
    const Timestamp horizon = opts.horizon.value_or(cov_end);
    detail::require(horizon <= cov_end, "horizon extends past the carbon-intensity coverage");
    for (const auto& p : profiles) {
        for (const auto& m : machines) {
            const auto* s = find_series(ci, m.region_id);
            if (p.submit_time < horizon) {
                detail::require(p.submit_time >= s->start(), "job '" + p.job_id + "' arrives before intensity coverage of region '" + m.region_id + "'");
                machine_age_years(m, p.submit_time);
            }
        }
    }

    // Local copies with eligibility restricted to the configured machines.
    std::vector<JobProfile> jobs = profiles;
    for (auto& p : jobs) {
        p.eligible_machines = detail::eligible_ids(p, machines);
        if (opts.single_user) p.user_id = "user";
    }

    ClusterState state(machines);
    const SelectionContext ctx{method, &ci, opts.quote};

    SimulationResult res;
    res.policy = policy.name();
    res.method = method;
    res.budget = allocation.budget;
    res.horizon = horizon;
    res.jobs.resize(jobs.size());
    for (const auto& m : machines) res.per_machine_jobs[m.id] = 0;

    enum Kind : int { End = 0, Arrival = 1 };
    using Ev = std::tuple<Timestamp, int, std::size_t, std::size_t>;  // time, kind, seq, job
    std::priority_queue<Ev, std::vector<Ev>, std::greater<>> events;
    std::size_t seq = 0;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        res.jobs[j].job_id = jobs[j].job_id;
        res.jobs[j].submit = jobs[j].submit_time;
        events.emplace(jobs[j].submit_time, Arrival, seq++, j);
    }

    std::vector<std::size_t> machine_of(jobs.size(), 0);

    auto dispatch = [&](std::size_t i) {
        auto& slot = state.slots()[i];
        // Nothing starts at or after the horizon; those jobs stay queued.
        while (!slot.queue.empty() && state.now() < horizon) {
            const auto& head = slot.queue.front();
            if (state.free_cores(i) < head.cores || state.user_busy(i, head.user)) break;
            const std::size_t j = head.job;
            const Timestamp now = state.now();
            const Timestamp end = now + head.runtime_s;
            state.start(i, j, head.user, head.cores, end);
            auto& rec = res.jobs[j];
            rec.start = now;
            rec.end = end;
            rec.fate = end <= horizon ? JobFate::Completed : JobFate::Unfinished;
            const auto* series = find_series(ci, slot.machine.region_id);
            rec.charged = quote(method, jobs[j].execution_on(slot.machine, now), slot.machine, series, opts.quote).amount;
            res.charged += rec.charged;
            res.events.push_back({now, SimEventKind::Start, jobs[j].job_id, slot.machine.id, head.user, head.cores,
                                  slot.used_cores, allocation.spent});
            slot.queue.pop_front();
            events.emplace(end, End, seq++, j);
        }
    };

    while (!events.empty()) {
        const auto [t, kind, s, j] = events.top();
        if (t > horizon || (kind == Arrival && t >= horizon)) break;
        events.pop();
        state.set_now(t);
        const JobProfile& job = jobs[j];
        auto& rec = res.jobs[j];

        if (kind == End) {
            const std::size_t i = machine_of[j];
            const Machine& m = state.slots()[i].machine;
            state.finish(i, j);
            const auto* series = find_series(ci, m.region_id);
            const CostQuote carbon = cost_cba(job.execution_on(m, rec.start), m, *series, IntensityMode::AtStart);
            rec.energy_j = job.on(m.id).energy_j;
            rec.operational_g = carbon.component("operational_g");
            rec.embodied_g = carbon.component("embodied_g");
            rec.work_core_h = work_of(job);
            ++res.jobs_completed;
            ++res.per_machine_jobs[m.id];
            res.work_core_h += rec.work_core_h;
            res.energy_kwh += rec.energy_j / kJoulesPerKwh;
            res.operational_g += rec.operational_g;
            res.attributed_g += rec.operational_g + rec.embodied_g;
            res.timeline.emplace_back(t, res.jobs_completed);
            res.events.push_back({t, SimEventKind::End, job.job_id, m.id, job.user_id, job.cores_requested,
                                  state.slots()[i].used_cores, allocation.spent});
            dispatch(i);
            continue;
        }

        auto sel = choose_machine(policy, job, state, ctx);
        if (!sel) {
            rec.fate = JobFate::Unplaceable;
            ++res.jobs_unplaceable;
            continue;
        }
        const std::size_t i = state.index_of(sel->machine_id);
        const Machine& m = state.slots()[i].machine;
        if (!sel->quote) {
            sel->quote = detail::try_quote(job, m, sel->estimated_start, ctx);
        }
        if (!sel->quote) {
            rec.fate = JobFate::Unplaceable;
            ++res.jobs_unplaceable;
            continue;
        }
        if (!allocation.admits(sel->quote->amount)) {
            rec.fate = JobFate::OverBudget;
            rec.machine_id = m.id;
            ++res.jobs_over_budget;
            continue;
        }
        allocation.spent += sel->quote->amount;
        ++res.jobs_admitted;
        rec.machine_id = m.id;
        rec.fate = JobFate::Queued;
        rec.admission_quote = sel->quote->amount;
        machine_of[j] = i;
        res.events.push_back({t, SimEventKind::Admit, job.job_id, m.id, job.user_id, job.cores_requested,
                              state.slots()[i].used_cores, allocation.spent});
        state.enqueue(i, {j, job.user_id, job.cores_requested, job.on(m.id).runtime_s});
        dispatch(i);
    }

    for (const auto& rec : res.jobs) {
        if (rec.fate == JobFate::Unfinished) ++res.jobs_unfinished;
    }
    res.spent = allocation.spent;
    return res;
}

/// Checks the event log against capacity, per-user, budget and no-migration
/// rules. Returns one message per violation.
inline std::vector<std::string> audit(const SimulationResult& res, const std::vector<Machine>& machines) {
    std::vector<std::string> v;
    std::map<std::string, int> capacity, occupied;
    for (const auto& m : machines) capacity[m.id] = m.total_cores();
    std::set<std::pair<std::string, std::string>> running_user;
    std::map<std::string, std::string> admitted_on, started_on;
    double spent = 0.0;
    Timestamp last = -std::numeric_limits<Timestamp>::infinity();

    for (const auto& e : res.events) {
        if (e.time < last) v.push_back("event log out of order at job " + e.job_id);
        last = e.time;
        switch (e.kind) {
            case SimEventKind::Admit: {
                const auto& rec = *std::find_if(res.jobs.begin(), res.jobs.end(),
                                                [&](const JobRecord& r) { return r.job_id == e.job_id; });
                spent += rec.admission_quote;
                if (spent > res.budget) v.push_back("budget exceeded admitting " + e.job_id);
                if (std::abs(spent - e.spent_after) > 1e-9 * std::max(1.0, std::abs(spent))) {
                    v.push_back("spent is not the sum of admitted quotes at " + e.job_id);
                }
                if (!admitted_on.emplace(e.job_id, e.machine_id).second) v.push_back("job admitted twice: " + e.job_id);
                break;
            }
            case SimEventKind::Start: {
                occupied[e.machine_id] += e.cores;
                if (occupied[e.machine_id] > capacity[e.machine_id]) {
                    v.push_back("capacity exceeded on " + e.machine_id + " starting " + e.job_id);
                }
                if (occupied[e.machine_id] != e.occupied_after) v.push_back("occupancy mismatch at " + e.job_id);
                if (!running_user.emplace(e.user, e.machine_id).second) {
                    v.push_back("user " + e.user + " has two running jobs on " + e.machine_id);
                }
                auto adm = admitted_on.find(e.job_id);
                if (adm == admitted_on.end()) {
                    v.push_back("job " + e.job_id + " started without admission");
                } else if (adm->second != e.machine_id) {
                    v.push_back("job " + e.job_id + " migrated before start");
                }
                started_on[e.job_id] = e.machine_id;
                break;
            }
            case SimEventKind::End: {
                occupied[e.machine_id] -= e.cores;
                if (occupied[e.machine_id] < 0) v.push_back("negative occupancy on " + e.machine_id);
                running_user.erase({e.user, e.machine_id});
                auto it = started_on.find(e.job_id);
                if (it == started_on.end()) {
                    v.push_back("job " + e.job_id + " ended without starting");
                } else if (it->second != e.machine_id) {
                    v.push_back("job " + e.job_id + " migrated from " + it->second + " to " + e.machine_id);
                }
                break;
            }
        }
    }
    if (res.spent > res.budget) v.push_back("final spend exceeds budget");
    for (const auto& rec : res.jobs) {
        const bool admitted = admitted_on.count(rec.job_id) == 1;
        const bool placed = rec.fate == JobFate::Completed || rec.fate == JobFate::Unfinished || rec.fate == JobFate::Queued;
        if (admitted != placed) v.push_back("job " + rec.job_id + " admission/fate mismatch (rolled back?)");
    }
    for (std::size_t k = 1; k < res.timeline.size(); ++k) {
        if (res.timeline[k].second < res.timeline[k - 1].second || res.timeline[k].first < res.timeline[k - 1].first) {
            v.push_back("timeline decreases");
        }
    }
    if (res.attributed_g + 1e-9 < res.operational_g) v.push_back("attributed carbon below operational");
    return v;
}

/// How the allocation for a policy comparison is fixed.
struct BudgetRule {
    enum class Kind { Unlimited, Fixed, GreedySpend } kind = Kind::Unlimited;
    double amount = 0.0;    // Fixed
    double fraction = 1.0;  // GreedySpend: fraction of Greedy's unbudgeted spend

    static BudgetRule unlimited() { return {}; }
    static BudgetRule fixed(double amount) { return {Kind::Fixed, amount, 1.0}; }
    static BudgetRule greedy_spend(double fraction = 1.0) { return {Kind::GreedySpend, 0.0, fraction}; }
};

inline double resolve_budget(const BudgetRule& rule, const std::vector<JobProfile>& profiles,
                             const std::vector<Machine>& machines, Method method, const IntensityMap& ci,
                             const SimOptions& opts = {}) {
    switch (rule.kind) {
        case BudgetRule::Kind::Unlimited: return std::numeric_limits<double>::infinity();
        case BudgetRule::Kind::Fixed:
            detail::require(rule.amount >= 0.0, "budget must be non-negative");
            return rule.amount;
        case BudgetRule::Kind::GreedySpend: {
            detail::require(rule.fraction > 0.0, "budget fraction must be positive");
            const auto greedy = run(profiles, machines, {PolicyKind::Greedy, {}}, method, ci, Allocation{}, opts);
            return greedy.spent * rule.fraction;
        }
    }
    return 0.0;
}

/// Runs every policy on the same workload and allocation. Results keep the input policy order.
inline std::vector<SimulationResult> compare_policies(const std::vector<JobProfile>& profiles,
                                                      const std::vector<Machine>& machines,
                                                      const std::vector<Policy>& policies, Method method,
                                                      const IntensityMap& ci, const BudgetRule& rule,
                                                      const SimOptions& opts = {}) {
    const double budget = resolve_budget(rule, profiles, machines, method, ci, opts);
    std::vector<SimulationResult> out;
    out.reserve(policies.size());
    for (const auto& p : policies) {
        out.push_back(run(profiles, machines, p, method, ci, Allocation{budget, 0.0}, opts));
    }
    return out;
}

/// Greedy, Energy, Mixed, EFT and Runtime, then one Fixed per listed machine.
inline std::vector<Policy> default_policies(const std::vector<std::string>& fixed_machines) {
    std::vector<Policy> out{{PolicyKind::Greedy, {}}, {PolicyKind::Energy, {}}, {PolicyKind::Mixed, {}},
                            {PolicyKind::EFT, {}}, {PolicyKind::Runtime, {}}};
    for (const auto& id : fixed_machines) out.push_back(Policy::fixed(id));
    return out;
}

/// For each hour from `t0`, the machine with the lowest quote for `job` on an idle cluster.
inline std::vector<std::string> cheapest_by_hour(const JobProfile& job, const std::vector<Machine>& machines,
                                                 const IntensityMap& ci, Timestamp t0, std::size_t hours,
                                                 Method method = Method::CBA, const QuoteOptions& qopts = {}) {
    std::vector<std::string> out;
    const SelectionContext ctx{method, &ci, qopts};
    for (std::size_t h = 0; h < hours; ++h) {
        ClusterState idle(machines, t0 + static_cast<double>(h) * kSecondsPerHour);
        auto sel = choose_machine({PolicyKind::Greedy, {}}, job, idle, ctx);
        out.push_back(sel ? sel->machine_id : std::string{});
    }
    return out;
}

}  // namespace ibacct
