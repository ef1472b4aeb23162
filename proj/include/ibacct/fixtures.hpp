#pragma once

// Loaders and writers for the on-disk fixtures.
//
// Machines:   YAML, one document per machine, keys exactly the Machine fields.
// Intensity:  two header lines `region_id: <id>` and `start: <ISO-8601 hour>`,
//             then one gCO2e/kWh value per line, one line per hour.
// Executions: CSV `job_id,machine_id,duration_s,energy_j,cores_used,start_time`
//             where start_time is epoch seconds or ISO-8601.
// Counters:   CSV with a header of counter names, one sample per row.

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "ibacct/accounting.hpp"
#include "ibacct/carbon.hpp"
#include "ibacct/error.hpp"
#include "ibacct/mixture.hpp"
#include "ibacct/simengine.hpp"
#include "ibacct/trace.hpp"

namespace ibacct {

namespace detail {

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    return in;
}

template <class T>
T yaml_get(const YAML::Node& doc, const char* key, const std::string& source, std::size_t line) {
    const YAML::Node n = doc[key];
    if (!n) throw ParseError(source, line, std::string("missing field '") + key + "'");
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw ParseError(source, line, std::string("bad value for '") + key + "'");
    }
}

}  // namespace detail

inline Machine machine_from_yaml(const YAML::Node& doc, const std::string& source = "<machines>") {
    static const std::set<std::string> known{"id",        "name",          "cores_per_node",    "node_count",
                                             "tdp_watts", "idle_watts",    "peak_perf_per_core", "year_deployed",
                                             "embodied_carbon_g", "region_id", "pue"};
    const std::size_t line = static_cast<std::size_t>(doc.Mark().line + 1);
    if (!doc.IsMap()) throw ParseError(source, line, "machine document must be a mapping");
    for (const auto& kv : doc) {
        const auto key = kv.first.as<std::string>();
        if (!known.count(key)) throw ParseError(source, line, "unknown machine field '" + key + "'");
    }
    Machine m;
    m.id = detail::yaml_get<std::string>(doc, "id", source, line);
    m.name = doc["name"] ? doc["name"].as<std::string>() : m.id;
    m.cores_per_node = detail::yaml_get<int>(doc, "cores_per_node", source, line);
    m.node_count = doc["node_count"] ? detail::yaml_get<int>(doc, "node_count", source, line) : 1;
    m.tdp_watts = detail::yaml_get<double>(doc, "tdp_watts", source, line);
    m.idle_watts = detail::yaml_get<double>(doc, "idle_watts", source, line);
    m.peak_perf_per_core = detail::yaml_get<double>(doc, "peak_perf_per_core", source, line);
    m.year_deployed = detail::yaml_get<int>(doc, "year_deployed", source, line);
    m.embodied_carbon_g = detail::yaml_get<double>(doc, "embodied_carbon_g", source, line);
    m.region_id = detail::yaml_get<std::string>(doc, "region_id", source, line);
    m.pue = doc["pue"] ? detail::yaml_get<double>(doc, "pue", source, line) : 1.0;
    try {
        m.validate();
    } catch (const ValidationError& e) {
        throw ParseError(source, line, e.what());
    }
    return m;
}

inline std::vector<Machine> load_machines(std::istream& in, const std::string& source = "<machines>") {
    std::vector<YAML::Node> docs;
    try {
        docs = YAML::LoadAll(in);
    } catch (const YAML::ParserException& e) {
        throw ParseError(source, static_cast<std::size_t>(e.mark.line + 1), e.msg);
    }
    std::vector<Machine> out;
    std::set<std::string> ids;
    for (const auto& doc : docs) {
        if (doc.IsNull()) continue;
        Machine m = machine_from_yaml(doc, source);
        if (!ids.insert(m.id).second) {
            throw ParseError(source, static_cast<std::size_t>(doc.Mark().line + 1), "duplicate machine id '" + m.id + "'");
        }
        out.push_back(std::move(m));
    }
    if (out.empty()) throw ValidationError(source + ": no machines defined");
    return out;
}

inline std::vector<Machine> load_machines_file(const std::string& path) {
    auto in = detail::open_input(path);
    return load_machines(in, path);
}

inline CarbonIntensitySeries load_intensity(std::istream& in, const std::string& source = "<intensity>") {
    std::string line, region;
    std::optional<Timestamp> start;
    std::vector<double> values;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_skippable(line)) continue;
        const auto t = detail::trim(line);
        if (auto colon = t.find(':'); values.empty() && colon != std::string_view::npos &&
                                      (t.rfind("region_id", 0) == 0 || t.rfind("start", 0) == 0)) {
            const auto key = detail::trim(t.substr(0, colon));
            const auto val = detail::trim(t.substr(colon + 1));
            if (key == "region_id") {
                region = std::string(val);
            } else if (key == "start") {
                try {
                    start = parse_iso8601(val);
                } catch (const ValidationError& e) {
                    throw ParseError(source, lineno, e.what());
                }
            }
            continue;
        }
        if (region.empty() || !start) throw ParseError(source, lineno, "header must define region_id and start");
        double v = 0.0;
        if (!detail::parse_double(t, v) || v < 0.0) throw ParseError(source, lineno, "bad intensity value");
        values.push_back(v);
    }
    if (region.empty() || !start) throw ParseError(source, lineno, "header must define region_id and start");
    if (values.empty()) throw ParseError(source, lineno, "no intensity values");
    try {
        return {region, *start, std::move(values)};
    } catch (const ValidationError& e) {
        throw ParseError(source, lineno, e.what());
    }
}

inline CarbonIntensitySeries load_intensity_file(const std::string& path) {
    auto in = detail::open_input(path);
    return load_intensity(in, path);
}

inline void write_intensity(std::ostream& os, const CarbonIntensitySeries& ci) {
    os << "region_id: " << ci.region_id() << "\nstart: " << format_iso8601(ci.start()) << '\n';
    char buf[64];
    for (double v : ci.values()) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
        os.write(buf, p - buf);
        os << '\n';
    }
}

inline std::vector<Execution> load_executions(std::istream& in, const std::string& source = "<executions>") {
    static constexpr std::string_view header = "job_id,machine_id,duration_s,energy_j,cores_used,start_time";
    std::vector<Execution> out;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_skippable(line)) continue;
        if (!header_seen) {
            if (detail::trim(line) != header) throw ParseError(source, lineno, "expected header '" + std::string(header) + "'");
            header_seen = true;
            continue;
        }
        const auto f = detail::split(line);
        if (f.size() != 6) throw ParseError(source, lineno, "expected 6 fields");
        Execution e;
        e.job_id = std::string(f[0]);
        e.machine_id = std::string(f[1]);
        if (!detail::parse_double(f[2], e.duration_s)) throw ParseError(source, lineno, "bad duration_s");
        if (!detail::parse_double(f[3], e.energy_j)) throw ParseError(source, lineno, "bad energy_j");
        if (!detail::parse_int(f[4], e.cores_used)) throw ParseError(source, lineno, "bad cores_used");
        if (!detail::parse_double(f[5], e.start_time)) {
            try {
                e.start_time = parse_iso8601(f[5]);
            } catch (const ValidationError&) {
                throw ParseError(source, lineno, "bad start_time");
            }
        }
        try {
            e.validate();
        } catch (const ValidationError& err) {
            throw ParseError(source, lineno, err.what());
        }
        out.push_back(std::move(e));
    }
    if (!header_seen) throw ParseError(source, lineno, "missing header");
    return out;
}

inline std::vector<Execution> load_executions_file(const std::string& path) {
    auto in = detail::open_input(path);
    return load_executions(in, path);
}

struct CounterTable {
    std::vector<std::string> names;
    std::vector<CounterVector> rows;
};

inline CounterTable load_counters(std::istream& in, const std::string& source = "<counters>") {
    CounterTable out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_skippable(line)) continue;
        const auto f = detail::split(line);
        if (out.names.empty()) {
            for (auto s : f) out.names.emplace_back(s);
            continue;
        }
        if (f.size() != out.names.size()) throw ParseError(source, lineno, "field count does not match header");
        CounterVector v(f.size());
        for (std::size_t c = 0; c < f.size(); ++c) {
            if (!detail::parse_double(f[c], v[c]) || v[c] < 0.0) throw ParseError(source, lineno, "bad counter value");
        }
        out.rows.push_back(std::move(v));
    }
    if (out.names.empty()) throw ParseError(source, lineno, "missing header");
    return out;
}

inline void write_counters(std::ostream& os, const CounterTable& t) {
    char buf[64];
    for (std::size_t c = 0; c < t.names.size(); ++c) os << (c ? "," : "") << t.names[c];
    os << '\n';
    for (const auto& r : t.rows) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            auto [p, ec] = std::to_chars(buf, buf + sizeof buf, r[c]);
            os << (c ? "," : "") << std::string_view(buf, static_cast<std::size_t>(p - buf));
        }
        os << '\n';
    }
}

}  // namespace ibacct
