#pragma once

// Command-line front end. Each command is a plain function over streams so it
// can run in-process; run_cli() adds argument parsing and exit-code mapping.
//
// Exit codes: 0 success, 1 usage error, 2 fixture or validation error,
// 3 runtime error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "ibacct/accounting.hpp"
#include "ibacct/fixtures.hpp"
#include "ibacct/gamesvc.hpp"
#include "ibacct/gamesvc_http.hpp"
#include "ibacct/mixture.hpp"
#include "ibacct/neighbors.hpp"
#include "ibacct/profiles.hpp"
#include "ibacct/report.hpp"
#include "ibacct/simengine.hpp"
#include "ibacct/synth.hpp"
#include "ibacct/trace.hpp"

namespace ibacct::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kInvalid = 2, kRuntime = 3 };

/// Simulation settings read from a YAML config. Paths are relative to the working directory.
struct SimConfig {
    std::string machines_path;
    std::string reference_machine;
    std::map<std::string, std::string> intensity_paths;  // region id -> file
    std::string profiles_path;                           // ready-made profiles, or
    std::string trace_path;                              // a trace to extrapolate with
    std::string benchmarks_path;                         //   a neighbour training set and
    std::string counters_path;                           //   optional counter captures
    std::size_t mixture_components = 3;
    std::size_t neighbors = 5;
    int repeat = 2;
    bool collapse_repetitions = false;
    std::vector<Method> methods{Method::EBA};
    std::vector<std::string> policies;  // empty: the default set with one Fixed per machine
    BudgetRule budget;
    std::optional<Timestamp> horizon;
    bool single_user = true;
    QuoteOptions quote;
    std::uint64_t seed = 0;
};

namespace detail {

inline Timestamp parse_time(const YAML::Node& n) {
    const auto text = n.as<std::string>();
    double v = 0.0;
    if (ibacct::detail::parse_double(text, v)) return v;
    return parse_iso8601(text);
}

inline IntensityMode parse_mode(const std::string& s) {
    if (s == "at_start") return IntensityMode::AtStart;
    if (s == "integrated") return IntensityMode::Integrated;
    throw ValidationError("unknown intensity mode '" + s + "' (expected at_start or integrated)");
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (auto f : ibacct::detail::split(s)) {
        if (!f.empty()) out.emplace_back(f);
    }
    return out;
}

}  // namespace detail

inline SimConfig parse_sim_config(const YAML::Node& root, const std::string& source) {
    static const std::set<std::string> known{"machines", "reference_machine", "intensity", "workload", "methods",
                                             "policies", "budget",            "horizon",   "single_user", "beta",
                                             "intensity_mode", "seed"};
    static const std::set<std::string> workload_keys{"profiles", "trace", "benchmarks", "counters",
                                                     "mixture_components", "neighbors", "repeat",
                                                     "collapse_repetitions"};
    auto line_of = [](const YAML::Node& n) { return static_cast<std::size_t>(n.Mark().line + 1); };
    if (!root.IsMap()) throw ParseError(source, 1, "config must be a mapping");
    for (const auto& kv : root) {
        if (!known.count(kv.first.as<std::string>())) {
            throw ParseError(source, line_of(kv.first), "unknown key '" + kv.first.as<std::string>() + "'");
        }
    }
    SimConfig c;
    try {
        if (!root["machines"]) throw ParseError(source, 0, "missing key 'machines'");
        c.machines_path = root["machines"].as<std::string>();
        if (root["reference_machine"]) c.reference_machine = root["reference_machine"].as<std::string>();
        if (!root["intensity"] || !root["intensity"].IsMap()) {
            throw ParseError(source, 0, "'intensity' must map region ids to files");
        }
        for (const auto& kv : root["intensity"]) {
            c.intensity_paths[kv.first.as<std::string>()] = kv.second.as<std::string>();
        }
        const YAML::Node w = root["workload"];
        if (!w || !w.IsMap()) throw ParseError(source, 0, "missing 'workload' mapping");
        for (const auto& kv : w) {
            if (!workload_keys.count(kv.first.as<std::string>())) {
                throw ParseError(source, line_of(kv.first), "unknown workload key '" + kv.first.as<std::string>() + "'");
            }
        }
        if (w["profiles"]) c.profiles_path = w["profiles"].as<std::string>();
        if (w["trace"]) c.trace_path = w["trace"].as<std::string>();
        if (w["benchmarks"]) c.benchmarks_path = w["benchmarks"].as<std::string>();
        if (w["counters"]) c.counters_path = w["counters"].as<std::string>();
        if (w["mixture_components"]) c.mixture_components = w["mixture_components"].as<std::size_t>();
        if (w["neighbors"]) c.neighbors = w["neighbors"].as<std::size_t>();
        if (w["repeat"]) c.repeat = w["repeat"].as<int>();
        if (w["collapse_repetitions"]) c.collapse_repetitions = w["collapse_repetitions"].as<bool>();
        if (c.profiles_path.empty() == c.trace_path.empty()) {
            throw ParseError(source, line_of(w), "workload needs exactly one of 'profiles' or 'trace'");
        }
        if (!c.trace_path.empty() && c.benchmarks_path.empty()) {
            throw ParseError(source, line_of(w), "a trace workload needs 'benchmarks'");
        }
        if (root["methods"]) {
            c.methods.clear();
            for (const auto& m : root["methods"]) c.methods.push_back(parse_method(m.as<std::string>()));
            ibacct::detail::require(!c.methods.empty(), "methods must be non-empty");
        }
        if (root["policies"]) {
            for (const auto& p : root["policies"]) {
                c.policies.push_back(p.as<std::string>());
                Policy::parse(c.policies.back());
            }
        }
        if (const YAML::Node b = root["budget"]) {
            const auto rule = b["rule"] ? b["rule"].as<std::string>() : std::string("unlimited");
            if (rule == "unlimited") {
                c.budget = BudgetRule::unlimited();
            } else if (rule == "fixed") {
                if (!b["amount"]) throw ParseError(source, line_of(b), "fixed budget needs 'amount'");
                c.budget = BudgetRule::fixed(b["amount"].as<double>());
            } else if (rule == "greedy_spend") {
                c.budget = BudgetRule::greedy_spend(b["fraction"] ? b["fraction"].as<double>() : 1.0);
            } else {
                throw ParseError(source, line_of(b), "unknown budget rule '" + rule + "'");
            }
        }
        if (root["horizon"]) c.horizon = detail::parse_time(root["horizon"]);
        if (root["single_user"]) c.single_user = root["single_user"].as<bool>();
        if (root["beta"]) c.quote.beta = root["beta"].as<double>();
        if (root["intensity_mode"]) c.quote.mode = detail::parse_mode(root["intensity_mode"].as<std::string>());
        if (root["seed"]) c.seed = root["seed"].as<std::uint64_t>();
    } catch (const YAML::Exception& e) {
        throw ParseError(source, static_cast<std::size_t>(e.mark.line + 1), e.msg);
    }
    return c;
}

inline SimConfig load_sim_config(const std::string& path) {
    try {
        return parse_sim_config(YAML::LoadFile(path), path);
    } catch (const YAML::BadFile&) {
        throw ValidationError("cannot open '" + path + "'");
    } catch (const YAML::Exception& e) {
        throw ParseError(path, static_cast<std::size_t>(e.mark.line + 1), e.msg);
    }
}

/// Everything a simulation needs, loaded and extrapolated.
struct SimInputs {
    std::vector<Machine> machines;
    IntensityMap intensity;
    std::vector<JobProfile> profiles;
    std::string reference_machine;
    std::size_t discarded = 0;  // trace rows without energy
};

inline SimInputs load_sim_inputs(const SimConfig& c, std::uint64_t seed) {
    SimInputs in;
    in.machines = load_machines_file(c.machines_path);
    for (const auto& [region, path] : c.intensity_paths) {
        auto series = load_intensity_file(path);
        ibacct::detail::require(series.region_id() == region,
                                "intensity file '" + path + "' is for region '" + series.region_id() + "', not '" +
                                    region + "'");
        in.intensity.emplace(region, std::move(series));
    }
    if (!c.profiles_path.empty()) {
        auto f = ibacct::detail::open_input(c.profiles_path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(f);
            in.profiles = profiles_from_json(j);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(c.profiles_path, 0, e.what());
        }
        in.reference_machine = c.reference_machine.empty() ? j.value("reference_machine", "") : c.reference_machine;
        return in;
    }
    ibacct::detail::require(!c.reference_machine.empty(), "a trace workload needs 'reference_machine'");
    in.reference_machine = c.reference_machine;
    auto trace_in = ibacct::detail::open_input(c.trace_path);
    const TraceLoad trace = load_trace(trace_in, c.trace_path);
    in.discarded = trace.discarded;
    auto bench_in = ibacct::detail::open_input(c.benchmarks_path);
    const NeighborModel nm(load_training_set(bench_in, c.benchmarks_path), c.neighbors, c.reference_machine);
    MixtureModel mixture = reference_counter_model();
    if (!c.counters_path.empty()) {
        auto counters_in = ibacct::detail::open_input(c.counters_path);
        mixture = fit_mixture(load_counters(counters_in, c.counters_path).rows, c.mixture_components, seed);
    }
    in.profiles = build_profiles(trace.records, in.machines, mixture, nm, {seed, c.repeat, c.collapse_repetitions});
    return in;
}

inline std::vector<Policy> resolve_policies(const SimConfig& c, const std::vector<Machine>& machines) {
    if (c.policies.empty()) {
        std::vector<std::string> ids;
        for (const auto& m : machines) ids.push_back(m.id);
        return default_policies(ids);
    }
    std::vector<Policy> out;
    for (const auto& p : c.policies) out.push_back(Policy::parse(p));
    return out;
}

/// Opens `path` for writing, or returns nullptr meaning standard output.
inline std::unique_ptr<std::ofstream> open_output(const std::string& path) {
    if (path.empty() || path == "-") return nullptr;
    if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) {
        std::filesystem::create_directories(parent);
    }
    auto f = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*f) throw std::runtime_error("cannot write '" + path + "'");
    return f;
}

inline void emit(const Table& t, ReportFormat fmt, const std::string& path, std::ostream& out) {
    auto f = open_output(path);
    write_table(f ? *f : out, t, fmt);
    if (f && !*f) throw std::runtime_error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------- commands

struct QuoteArgs {
    std::string machines;
    std::string executions;
    std::vector<std::string> methods;        // empty: every method the inputs allow
    std::vector<std::string> intensity;      // files; region taken from each header
    bool normalize = false;
    double beta = 1.0;
    std::string intensity_mode = "at_start";
};

inline Table cmd_quote(const QuoteArgs& a) {
    const auto machines = load_machines_file(a.machines);
    const auto executions = load_executions_file(a.executions);
    IntensityMap ci;
    for (const auto& path : a.intensity) {
        auto s = load_intensity_file(path);
        const std::string region = s.region_id();
        ibacct::detail::require(ci.emplace(region, std::move(s)).second, "two intensity files for region '" + region + "'");
    }
    std::vector<Method> methods;
    for (const auto& m : a.methods) methods.push_back(parse_method(m));
    if (methods.empty()) {
        for (Method m : kAllMethods) {
            if (m != Method::CBA || !ci.empty()) methods.push_back(m);
        }
    }
    const ReportSpec spec{ReportKind::QuoteTable, ReportFormat::Csv, a.normalize};
    spec.validate();
    return quote_table(machines, executions, methods, ci, a.normalize, {a.beta, detail::parse_mode(a.intensity_mode)});
}

struct SimulateOutcome {
    std::uint64_t seed = 0;
    std::size_t jobs = 0;
    std::size_t discarded = 0;
    std::vector<JobProfile> profiles;
    std::string reference_machine;
    std::vector<SimulationResult> results;
};

inline SimulateOutcome cmd_simulate(const SimConfig& c, std::optional<std::uint64_t> seed_override) {
    SimulateOutcome o;
    o.seed = seed_override.value_or(c.seed);
    const SimInputs in = load_sim_inputs(c, o.seed);
    o.jobs = in.profiles.size();
    o.discarded = in.discarded;
    o.profiles = in.profiles;
    o.reference_machine = in.reference_machine;
    const auto policies = resolve_policies(c, in.machines);
    SimOptions opts;
    opts.horizon = c.horizon;
    opts.single_user = c.single_user;
    opts.quote = c.quote;
    for (Method m : c.methods) {
        auto r = compare_policies(in.profiles, in.machines, policies, m, in.intensity, c.budget, opts);
        o.results.insert(o.results.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
    }
    return o;
}

/// Writes the three simulation reports into `dir` and a one-line total per run to `out`.
inline void write_simulation(const SimulateOutcome& o, ReportFormat fmt, const std::string& dir, std::ostream& out) {
    std::filesystem::create_directories(dir);
    const std::string ext(extension(fmt));
    emit(policy_summary(o.results), fmt, (std::filesystem::path(dir) / ("policy-summary." + ext)).string(), out);
    emit(timeline(o.results), fmt, (std::filesystem::path(dir) / ("timeline." + ext)).string(), out);
    emit(distribution(o.results), fmt, (std::filesystem::path(dir) / ("distribution." + ext)).string(), out);
    out << "seed " << o.seed << '\n';
    out << "jobs " << o.jobs << " (trace rows discarded: " << o.discarded << ")\n";
    for (const auto& r : o.results) {
        out << to_string(r.method) << ' ' << r.policy << ": completed " << r.jobs_completed << ", work_core_h "
            << format_number(r.work_core_h) << ", energy_kwh " << format_number(r.energy_kwh) << ", spent "
            << format_number(r.spent) << '\n';
    }
}

struct GenTraceArgs {
    TraceGenParams params;
    std::string start;  // ISO-8601, overrides params.start
    std::string machines;
    std::string reference;
    std::string counters_out;
    std::size_t counters_n = 500;
    std::string benchmarks_out;
    std::size_t benchmarks_n = 200;
};

inline void cmd_gen_trace(GenTraceArgs a, std::uint64_t seed, const std::string& out_path, std::ostream& out) {
    if (!a.start.empty()) a.params.start = parse_iso8601(a.start);
    std::vector<Machine> machines;
    if (!a.machines.empty()) {
        machines = load_machines_file(a.machines);
        int largest = 0;
        for (const auto& m : machines) largest = std::max(largest, m.total_cores());
        a.params.max_cores = std::min(a.params.max_cores, largest);
    }
    const auto records = generate_trace(a.params, seed);
    {
        auto f = open_output(out_path);
        write_trace(f ? *f : out, records);
    }
    const MixtureModel truth = reference_counter_model();
    if (!a.counters_out.empty()) {
        CounterTable t{default_counter_names(), sample_counters(truth, a.counters_n, ibacct::detail::mix_seed(seed, 1))};
        auto f = open_output(a.counters_out);
        write_counters(*f, t);
    }
    if (!a.benchmarks_out.empty()) {
        ibacct::detail::require(!machines.empty(), "--benchmarks-out needs --machines");
        ibacct::detail::require(!a.reference.empty(), "--benchmarks-out needs --reference");
        const auto pts = synthetic_benchmarks(machines, a.reference, truth, a.benchmarks_n,
                                              ibacct::detail::mix_seed(seed, 2));
        auto f = open_output(a.benchmarks_out);
        write_training_set(*f, pts, default_counter_names());
    }
}

inline Table cmd_embodied_compare(const std::string& machines_path, const std::vector<int>& ages) {
    std::vector<Machine> machines;
    if (machines_path.empty()) {
        // Without a fixture, rates are per gram of embodied carbon.
        Machine unit;
        unit.id = "per_gram";
        unit.embodied_carbon_g = 1.0;
        machines.push_back(unit);
    } else {
        machines = load_machines_file(machines_path);
    }
    return embodied_comparison(machines, ages);
}

// ---------------------------------------------------------------- entry point

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Accounting, carbon and scheduling-policy toolkit for shared compute"};
    app.name("ibacct");
    app.require_subcommand(1);
    app.fallthrough();

    std::string config, format = "csv", out_path;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config, "YAML config (simulate, serve)");
    app.add_option("--seed", seed, "random seed; overrides the config");
    app.add_option("--format", format, "report format")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--out", out_path, "output file, or directory for simulate");

    QuoteArgs qa;
    std::string methods;
    auto* quote_cmd = app.add_subcommand("quote", "cost of measured executions under each accounting method");
    quote_cmd->add_option("--machines", qa.machines, "machines YAML")->required();
    quote_cmd->add_option("--executions", qa.executions, "executions CSV")->required();
    quote_cmd->add_option("--methods", methods, "comma-separated methods (default: all available)");
    quote_cmd->add_option("--intensity", qa.intensity, "carbon-intensity file (repeatable)");
    quote_cmd->add_flag("--normalize", qa.normalize, "divide each method column by its minimum");
    quote_cmd->add_option("--beta", qa.beta, "EBA weight on potential energy");
    quote_cmd->add_option("--intensity-mode", qa.intensity_mode, "at_start or integrated");

    std::string profiles_out;
    auto* sim_cmd = app.add_subcommand("simulate", "run every configured policy on a workload");
    sim_cmd->add_option("--profiles-out", profiles_out, "also write the extrapolated job profiles as JSON");

    GenTraceArgs ga;
    auto* gen_cmd = app.add_subcommand("gen-trace", "write a seeded synthetic trace");
    gen_cmd->add_option("--jobs", ga.params.jobs, "number of jobs");
    gen_cmd->add_option("--users", ga.params.users, "number of users");
    gen_cmd->add_option("--max-cores", ga.params.max_cores, "largest core count");
    gen_cmd->add_option("--mean-interarrival", ga.params.mean_interarrival_s, "mean gap between submissions (s)");
    gen_cmd->add_option("--runtime-log-mean", ga.params.runtime_log_mean, "lognormal runtime location (ln s)");
    gen_cmd->add_option("--runtime-log-sigma", ga.params.runtime_log_sigma, "lognormal runtime scale");
    gen_cmd->add_option("--power-per-core", ga.params.power_per_core_w, "mean reference power per core (W)");
    gen_cmd->add_option("--missing-energy-fraction", ga.params.missing_energy_fraction,
                        "share of rows written without energy");
    gen_cmd->add_option("--start", ga.start, "first submission no earlier than this ISO-8601 time");
    gen_cmd->add_option("--machines", ga.machines, "machines YAML; caps cores at the largest machine");
    gen_cmd->add_option("--reference", ga.reference, "reference machine id for benchmarks");
    gen_cmd->add_option("--counters-out", ga.counters_out, "also write counter captures here");
    gen_cmd->add_option("--counters-n", ga.counters_n, "number of counter captures");
    gen_cmd->add_option("--benchmarks-out", ga.benchmarks_out, "also write a benchmark training set here");
    gen_cmd->add_option("--benchmarks-n", ga.benchmarks_n, "number of benchmarks");

    std::string emb_machines, ages = "1,2,3,4";
    auto* emb_cmd = app.add_subcommand("embodied-compare", "accelerated vs linear embodied-carbon rates by age");
    emb_cmd->add_option("--machines", emb_machines, "machines YAML (default: per gram of embodied carbon)");
    emb_cmd->add_option("--ages", ages, "comma-separated ages in years");

    std::string host = "127.0.0.1", store;
    int port = 8080;
    auto* serve_cmd = app.add_subcommand("serve", "serve the scheduling game over HTTP");
    serve_cmd->add_option("--host", host, "bind address");
    serve_cmd->add_option("--port", port, "bind port");
    serve_cmd->add_option("--store", store, "append-only results log");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        const ReportFormat fmt = parse_format(format);
        if (*quote_cmd) {
            qa.methods = detail::split_list(methods);
            emit(cmd_quote(qa), fmt, out_path, out);
        } else if (*sim_cmd) {
            if (config.empty()) {
                err << "simulate needs --config\n";
                return kUsage;
            }
            const auto outcome = cmd_simulate(load_sim_config(config), seed);
            write_simulation(outcome, fmt, out_path.empty() ? "results" : out_path, out);
            if (!profiles_out.empty()) {
                auto f = open_output(profiles_out);
                (f ? *f : out) << profiles_to_json(outcome.profiles, outcome.reference_machine).dump(1) << '\n';
            }
        } else if (*gen_cmd) {
            cmd_gen_trace(ga, seed.value_or(0), out_path, out);
        } else if (*emb_cmd) {
            std::vector<int> list;
            for (const auto& s : detail::split_list(ages)) {
                int y = 0;
                if (!ibacct::detail::parse_int(s, y)) throw ValidationError("bad age '" + s + "'");
                list.push_back(y);
            }
            emit(cmd_embodied_compare(emb_machines, list), fmt, out_path, out);
        } else if (*serve_cmd) {
            if (config.empty()) {
                err << "serve needs --config\n";
                return kUsage;
            }
            GameConfig gc = load_game_config(config);
            if (seed) gc.seed = *seed;
            GameService svc(std::move(gc), store);
            httplib::Server server;
            install_routes(server, svc);
            out << "listening on " << host << ':' << port << std::endl;
            if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const MissingIntensity& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}

}  // namespace ibacct::cli
