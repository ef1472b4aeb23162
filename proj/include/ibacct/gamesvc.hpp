#pragma once

// Scheduling-game sessions. Players place visible jobs onto machines under an
// allocation and a simulated-time limit. The game version decides the cost
// function and whether energy figures appear in any payload.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "ibacct/accounting.hpp"
#include "ibacct/error.hpp"
#include "ibacct/fixtures.hpp"
#include "ibacct/profiles.hpp"

namespace ibacct {

enum class GameVersion { V1, V2, V3 };

inline constexpr std::array<GameVersion, 3> kAllVersions{GameVersion::V1, GameVersion::V2, GameVersion::V3};

inline std::string_view to_string(GameVersion v) {
    switch (v) {
        case GameVersion::V1: return "V1";
        case GameVersion::V2: return "V2";
        case GameVersion::V3: return "V3";
    }
    return "?";
}

inline GameVersion parse_version(std::string_view s) {
    for (GameVersion v : kAllVersions) {
        if (s == to_string(v)) return v;
    }
    throw ValidationError("unknown game version '" + std::string(s) + "'");
}

inline bool shows_energy(GameVersion v) { return v != GameVersion::V1; }

/// Rejections carry a stable code and the HTTP status they map to.
class GameError : public std::runtime_error {
public:
    GameError(std::string code, int status, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)), status_(status) {}
    const std::string& code() const noexcept { return code_; }
    int status() const noexcept { return status_; }

private:
    std::string code_;
    int status_;
};

struct GameConfig {
    std::vector<Machine> machines;
    std::vector<JobProfile> jobs;  // offered in this order to every participant
    std::string reference_machine;
    double v1_budget = 0.0;        // runtime-cost units (core-seconds)
    double deadline_s = 0.0;       // simulated seconds
    double clock_fraction = 0.25;  // clock advance per placement, as a fraction of the job's runtime
    std::size_t initial_window = 8;
    double min_duration_s = 60.0;  // shorter wall-clock plays are flagged in exports
    double beta = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require(!machines.empty(), "game has no machines");
        detail::require(!jobs.empty(), "game has no jobs");
        detail::require(v1_budget > 0.0, "v1_budget must be > 0");
        detail::require(deadline_s > 0.0, "deadline_s must be > 0");
        detail::require(clock_fraction > 0.0, "clock_fraction must be > 0");
        detail::require(initial_window >= 1, "initial_window must be >= 1");
        detail::require(min_duration_s >= 0.0, "min_duration_s must be >= 0");
        detail::require(beta > 0.0 && beta <= 1.0, "beta must be in (0, 1]");
        std::set<std::string> ids;
        for (const auto& m : machines) {
            m.validate();
            detail::require(ids.insert(m.id).second, "duplicate machine id '" + m.id + "'");
        }
        detail::require(ids.count(reference_machine) == 1,
                        "reference machine '" + reference_machine + "' is not a game machine");
        std::set<std::string> job_ids;
        for (const auto& j : jobs) {
            detail::require(job_ids.insert(j.job_id).second, "duplicate job id '" + j.job_id + "'");
            for (const auto& m : machines) {
                if (!is_eligible(m, j.cores_requested)) continue;
                const auto& est = j.on(m.id);
                detail::require(est.runtime_s > 0.0 && est.energy_j > 0.0,
                                "job '" + j.job_id + "' needs positive estimates on machine '" + m.id + "'");
            }
        }
    }
};

/// Loads a game fixture; `machines` and `jobs` are paths to a machines YAML and a profiles JSON.
inline GameConfig load_game_config(const std::string& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path);
    } catch (const YAML::Exception& e) {
        throw ParseError(path, static_cast<std::size_t>(e.mark.line + 1), e.msg);
    }
    static const std::set<std::string> known{"machines",   "jobs",           "reference_machine", "v1_budget",
                                             "deadline_s", "clock_fraction", "initial_window",    "min_duration_s",
                                             "beta",       "seed"};
    for (const auto& kv : root) {
        const auto key = kv.first.as<std::string>();
        if (!known.count(key)) {
            throw ParseError(path, static_cast<std::size_t>(kv.first.Mark().line + 1), "unknown key '" + key + "'");
        }
    }
    auto need = [&](const char* key) {
        if (!root[key]) throw ParseError(path, 0, std::string("missing key '") + key + "'");
        return root[key];
    };
    GameConfig c;
    try {
        c.machines = load_machines_file(need("machines").as<std::string>());
        std::ifstream jobs_in(need("jobs").as<std::string>());
        if (!jobs_in) throw ValidationError("cannot open jobs file '" + root["jobs"].as<std::string>() + "'");
        const auto j = nlohmann::json::parse(jobs_in);
        c.jobs = profiles_from_json(j);
        c.reference_machine = root["reference_machine"] ? root["reference_machine"].as<std::string>()
                                                        : j.at("reference_machine").get<std::string>();
        c.v1_budget = need("v1_budget").as<double>();
        c.deadline_s = need("deadline_s").as<double>();
        if (root["clock_fraction"]) c.clock_fraction = root["clock_fraction"].as<double>();
        if (root["initial_window"]) c.initial_window = root["initial_window"].as<std::size_t>();
        if (root["min_duration_s"]) c.min_duration_s = root["min_duration_s"].as<double>();
        if (root["beta"]) c.beta = root["beta"].as<double>();
        if (root["seed"]) c.seed = root["seed"].as<std::uint64_t>();
    } catch (const YAML::Exception& e) {
        throw ParseError(path, static_cast<std::size_t>(e.mark.line + 1), e.msg);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, 0, std::string("jobs file: ") + e.what());
    }
    c.validate();
    return c;
}

struct Placement {
    std::string job_id;
    std::string machine_id;
    double cost = 0.0;
    double runtime_s = 0.0;
    double energy_j = 0.0;
    double clock_after = 0.0;
    double wall_time = 0.0;
};

struct Session {
    std::string session_id;
    std::string participant_id;
    GameVersion version = GameVersion::V1;
    double allocation = 0.0;
    double spent = 0.0;
    double clock_s = 0.0;
    double deadline_s = 0.0;
    std::size_t revealed = 0;  // jobs [0, revealed) of the fixture have been shown
    std::vector<Placement> placements;
    bool finished = false;
    double created_at = 0.0;
    double finished_at = 0.0;

    double remaining() const { return allocation - spent; }
    bool placed(const std::string& job_id) const {
        return std::any_of(placements.begin(), placements.end(), [&](const auto& p) { return p.job_id == job_id; });
    }
    double energy_j() const {
        double e = 0.0;
        for (const auto& p : placements) e += p.energy_j;
        return e;
    }
};

struct ExportFilter {
    std::optional<GameVersion> version;
    bool include_flagged = true;
};

/// Wall-clock seconds; replaceable so tests control session durations.
using WallClock = std::function<double()>;

inline double system_wall_clock() {
    using namespace std::chrono;
    return duration<double>(system_clock::now().time_since_epoch()).count();
}

class GameService {
public:
    /// With a non-empty `store_path`, existing records are replayed and new ones appended.
    explicit GameService(GameConfig config, std::string store_path = {}, WallClock clock = system_wall_clock)
        : config_(std::move(config)), store_path_(std::move(store_path)), clock_(std::move(clock)) {
        config_.validate();
        const Machine& ref = machine(config_.reference_machine);
        double eba = 0.0, rt = 0.0;
        for (const auto& j : config_.jobs) {
            if (!is_eligible(ref, j.cores_requested)) continue;
            const Execution e = j.execution_on(ref, 0.0);
            eba += cost_eba(e, ref, config_.beta).amount;
            rt += cost_runtime(e).amount;
        }
        detail::require(rt > 0.0, "no game job fits the reference machine");
        // Equal job counts cancel, so the ratio of sums is the ratio of means.
        v3_budget_ = config_.v1_budget * (eba / rt);
        if (!store_path_.empty()) replay();
    }

    const GameConfig& config() const noexcept { return config_; }

    double budget_for(GameVersion v) const { return v == GameVersion::V3 ? v3_budget_ : config_.v1_budget; }

    /// The charge for running `job` on `m` under version `v`.
    double cost(GameVersion v, const JobProfile& job, const Machine& m) const {
        const Execution e = job.execution_on(m, 0.0);
        return v == GameVersion::V3 ? cost_eba(e, m, config_.beta).amount : cost_runtime(e).amount;
    }

    nlohmann::json create_session(const std::string& participant_id) {
        if (participant_id.empty()) throw GameError("bad_request", 400, "participant_id must be non-empty");
        std::unique_lock lock(map_mutex_);
        const std::size_t index = next_index_++;
        auto& history = versions_of_[participant_id];
        const GameVersion v = history.size() == 1 ? history.front() : draw_version(index);
        auto s = std::make_unique<Entry>();
        s->session.session_id = "s" + std::to_string(index);
        s->session.participant_id = participant_id;
        s->session.version = v;
        s->session.allocation = budget_for(v);
        s->session.deadline_s = config_.deadline_s;
        s->session.revealed = std::min(config_.initial_window, config_.jobs.size());
        s->session.created_at = clock_();
        history.push_back(v);
        append({{"type", "create"},
                {"session_id", s->session.session_id},
                {"participant_id", participant_id},
                {"version", to_string(v)},
                {"at", s->session.created_at}});
        const std::string id = s->session.session_id;
        auto& entry = *sessions_.emplace(id, std::move(s)).first->second;
        lock.unlock();
        std::lock_guard g(entry.mutex);
        return board_json(entry.session);
    }

    nlohmann::json board(const std::string& session_id) const {
        Entry& e = entry(session_id);
        std::lock_guard g(e.mutex);
        return board_json(e.session);
    }

    /// Charges and records one placement; on any rejection the session is untouched.
    nlohmann::json place_job(const std::string& session_id, const std::string& job_id, const std::string& machine_id) {
        Entry& e = entry(session_id);
        std::lock_guard g(e.mutex);
        Session& s = e.session;
        if (s.finished) throw GameError("session_finished", 409, "session '" + session_id + "' is finished");
        const JobProfile* job = find_job(job_id);
        if (job == nullptr) throw GameError("unknown_job", 422, "unknown job '" + job_id + "'");
        if (s.placed(job_id)) throw GameError("already_placed", 409, "job '" + job_id + "' is already placed");
        if (index_of_job(job_id) >= s.revealed) {
            throw GameError("job_not_visible", 422, "job '" + job_id + "' has not arrived yet");
        }
        const Machine* m = find_machine(machine_id);
        if (m == nullptr) throw GameError("unknown_machine", 422, "unknown machine '" + machine_id + "'");
        if (!is_eligible(*m, job->cores_requested)) {
            throw GameError("ineligible_machine", 422,
                            "job '" + job_id + "' needs " + std::to_string(job->cores_requested) +
                                " cores but machine '" + machine_id + "' has " + std::to_string(m->total_cores()));
        }
        const auto& est = job->on(machine_id);
        const double charge = cost(s.version, *job, *m);
        const double clock_after = s.clock_s + config_.clock_fraction * est.runtime_s;
        if (clock_after > s.deadline_s) {
            throw GameError("deadline_passed", 409, "placing job '" + job_id + "' would run past the time limit");
        }
        if (charge > s.remaining()) {
            throw GameError("insufficient_allocation", 409, "job '" + job_id + "' costs more than the remaining allocation");
        }
        Placement p{job_id, machine_id, charge, est.runtime_s, est.energy_j, clock_after, clock_()};
        append({{"type", "place"},
                {"session_id", session_id},
                {"job_id", job_id},
                {"machine_id", machine_id},
                {"at", p.wall_time}});
        apply_placement(s, std::move(p));
        return {{"placement", placement_json(s.placements.back(), shows_energy(s.version))}, {"board", board_json(s)}};
    }

    nlohmann::json finish_session(const std::string& session_id) {
        Entry& e = entry(session_id);
        std::lock_guard g(e.mutex);
        Session& s = e.session;
        if (s.finished) throw GameError("session_finished", 409, "session '" + session_id + "' is already finished");
        const double at = clock_();
        append({{"type", "finish"}, {"session_id", session_id}, {"at", at}});
        s.finished = true;
        s.finished_at = at;
        return summary_json(s, shows_energy(s.version));
    }

    /// Finished sessions with energy always included, plus per-job seen/completed counts.
    nlohmann::json export_results(const ExportFilter& filter = {}) const {
        std::vector<Session> done;
        {
            std::shared_lock lock(map_mutex_);
            for (const auto& [id, e] : sessions_) {
                std::lock_guard g(e->mutex);
                if (e->session.finished) done.push_back(e->session);
            }
        }
        std::sort(done.begin(), done.end(), [](const auto& a, const auto& b) { return a.created_at < b.created_at; });
        nlohmann::json sessions = nlohmann::json::array();
        std::map<std::string, std::pair<std::size_t, std::size_t>> seen_done;
        std::map<GameVersion, std::tuple<std::size_t, double, double>> per_version;
        for (const auto& s : done) {
            if (filter.version && s.version != *filter.version) continue;
            if (!filter.include_flagged && flagged(s)) continue;
            sessions.push_back(summary_json(s, true));
            for (std::size_t i = 0; i < s.revealed; ++i) ++seen_done[config_.jobs[i].job_id].first;
            for (const auto& p : s.placements) ++seen_done[p.job_id].second;
            auto& [n, energy, completed] = per_version[s.version];
            ++n;
            energy += s.energy_j();
            completed += static_cast<double>(s.placements.size());
        }
        nlohmann::json jobs = nlohmann::json::array();
        for (const auto& j : config_.jobs) {
            const auto [seen, completed] = seen_done[j.job_id];
            jobs.push_back({{"job_id", j.job_id}, {"saw", seen}, {"completed", completed}});
        }
        nlohmann::json versions = nlohmann::json::object();
        for (const auto& [v, agg] : per_version) {
            const auto& [n, energy, completed] = agg;
            versions[std::string(to_string(v))] = {{"sessions", n},
                                                   {"mean_energy_j", energy / static_cast<double>(n)},
                                                   {"mean_jobs_completed", completed / static_cast<double>(n)}};
        }
        return {{"sessions", sessions}, {"jobs", jobs}, {"versions", versions}};
    }

    /// Copy of a session's state, for inspection.
    Session snapshot(const std::string& session_id) const {
        Entry& e = entry(session_id);
        std::lock_guard g(e.mutex);
        return e.session;
    }

    bool flagged(const Session& s) const { return s.finished && s.finished_at - s.created_at < config_.min_duration_s; }

private:
    struct Entry {
        mutable std::mutex mutex;
        Session session;
    };

    GameVersion draw_version(std::size_t index) const {
        const std::uint64_t h = detail::mix_seed(config_.seed, index);
        return kAllVersions[h % kAllVersions.size()];
    }

    Entry& entry(const std::string& id) const {
        std::shared_lock lock(map_mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw GameError("unknown_session", 404, "unknown session '" + id + "'");
        return *it->second;
    }

    const Machine& machine(const std::string& id) const {
        const Machine* m = find_machine(id);
        detail::require(m != nullptr, "unknown machine '" + id + "'");
        return *m;
    }
    const Machine* find_machine(const std::string& id) const {
        for (const auto& m : config_.machines) {
            if (m.id == id) return &m;
        }
        return nullptr;
    }
    std::size_t index_of_job(const std::string& id) const {
        for (std::size_t i = 0; i < config_.jobs.size(); ++i) {
            if (config_.jobs[i].job_id == id) return i;
        }
        return config_.jobs.size();
    }
    const JobProfile* find_job(const std::string& id) const {
        const std::size_t i = index_of_job(id);
        return i < config_.jobs.size() ? &config_.jobs[i] : nullptr;
    }

    void apply_placement(Session& s, Placement p) const {
        s.spent += p.cost;
        s.clock_s = p.clock_after;
        s.placements.push_back(std::move(p));
        s.revealed = std::min(s.revealed + 1, config_.jobs.size());
    }

    static nlohmann::json placement_json(const Placement& p, bool energy) {
        nlohmann::json j{{"job_id", p.job_id},   {"machine_id", p.machine_id}, {"cost", p.cost},
                         {"time_s", p.runtime_s}, {"clock_after", p.clock_after}};
        if (energy) j["energy_j"] = p.energy_j;
        return j;
    }

    nlohmann::json board_json(const Session& s) const {
        const bool energy = shows_energy(s.version);
        nlohmann::json machines = nlohmann::json::array();
        for (const auto& m : config_.machines) {
            machines.push_back({{"id", m.id}, {"name", m.name}, {"cores", m.total_cores()}});
        }
        nlohmann::json jobs = nlohmann::json::array();
        for (std::size_t i = 0; i < s.revealed; ++i) {
            const auto& job = config_.jobs[i];
            if (s.placed(job.job_id)) continue;
            nlohmann::json options = nlohmann::json::array();
            for (const auto& m : config_.machines) {
                nlohmann::json o{{"machine_id", m.id}, {"eligible", is_eligible(m, job.cores_requested)}};
                if (o["eligible"].get<bool>()) {
                    const auto& est = job.on(m.id);
                    o["time_s"] = est.runtime_s;
                    o["cost"] = cost(s.version, job, m);
                    if (energy) o["energy_j"] = est.energy_j;
                }
                options.push_back(std::move(o));
            }
            jobs.push_back({{"job_id", job.job_id},
                            {"cores", job.cores_requested},
                            {"priority", std::string(to_string(job.priority))},
                            {"options", std::move(options)}});
        }
        nlohmann::json placements = nlohmann::json::array();
        for (const auto& p : s.placements) placements.push_back(placement_json(p, energy));
        return {{"session_id", s.session_id},
                {"version", std::string(to_string(s.version))},
                {"allocation", s.allocation},
                {"spent", s.spent},
                {"remaining_allocation", s.remaining()},
                {"clock_s", s.clock_s},
                {"deadline_s", s.deadline_s},
                {"remaining_time_s", s.deadline_s - s.clock_s},
                {"finished", s.finished},
                {"jobs_remaining", config_.jobs.size() - s.placements.size()},
                {"machines", std::move(machines)},
                {"jobs", std::move(jobs)},
                {"placements", std::move(placements)}};
    }

    nlohmann::json summary_json(const Session& s, bool energy) const {
        nlohmann::json placements = nlohmann::json::array();
        for (const auto& p : s.placements) placements.push_back(placement_json(p, energy));
        nlohmann::json j{{"session_id", s.session_id},
                         {"participant_id", s.participant_id},
                         {"version", std::string(to_string(s.version))},
                         {"jobs_completed", s.placements.size()},
                         {"jobs_seen", s.revealed},
                         {"charged", s.spent},
                         {"allocation", s.allocation},
                         {"duration_s", s.finished_at - s.created_at},
                         {"flagged_short", flagged(s)},
                         {"placements", std::move(placements)}};
        if (energy) j["energy_j"] = s.energy_j();
        return j;
    }

    void append(const nlohmann::json& record) {
        if (store_path_.empty() || replaying_) return;
        std::lock_guard g(store_mutex_);
        std::ofstream out(store_path_, std::ios::app);
        out << record.dump() << '\n';
        out.flush();
        if (!out) throw std::runtime_error("cannot append to results store '" + store_path_ + "'");
    }

    void replay() {
        std::ifstream in(store_path_);
        if (!in) return;
        replaying_ = true;
        std::string line;
        std::size_t n = 0;
        const WallClock saved = clock_;
        try {
            while (std::getline(in, line)) {
                ++n;
                if (line.empty()) continue;
                const auto r = nlohmann::json::parse(line);
                const double at = r.at("at").get<double>();
                clock_ = [at] { return at; };
                const auto type = r.at("type").get<std::string>();
                if (type == "create") {
                    create_session(r.at("participant_id").get<std::string>());
                    // The version is a pure function of (seed, index); a mismatch means a foreign store.
                    const auto id = r.at("session_id").get<std::string>();
                    detail::require(to_string(snapshot(id).version) == r.at("version").get<std::string>(),
                                    "store was written with a different game fixture or seed");
                } else if (type == "place") {
                    place_job(r.at("session_id").get<std::string>(), r.at("job_id").get<std::string>(),
                              r.at("machine_id").get<std::string>());
                } else if (type == "finish") {
                    finish_session(r.at("session_id").get<std::string>());
                } else {
                    throw ValidationError("unknown record type '" + type + "'");
                }
            }
        } catch (const std::exception& e) {
            replaying_ = false;
            clock_ = saved;
            throw ParseError(store_path_, n, e.what());
        }
        replaying_ = false;
        clock_ = saved;
    }

    GameConfig config_;
    double v3_budget_ = 0.0;
    std::string store_path_;
    WallClock clock_;
    bool replaying_ = false;

    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::unique_ptr<Entry>> sessions_;
    std::map<std::string, std::vector<GameVersion>> versions_of_;
    std::size_t next_index_ = 0;

    std::mutex store_mutex_;
};

}  // namespace ibacct
