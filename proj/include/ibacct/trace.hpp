#pragma once

// Job trace measured on a single reference machine.
//
// File format: comma-separated text with a header row
//
//   job_id,user_id,submit_time,cores,runtime_s,energy_j
//
// Blank lines and lines starting with '#' are ignored. Records with an empty
// or zero energy field are discarded (and counted), everything else that does
// not parse is an error carrying its line number.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ibacct/error.hpp"
#include "ibacct/time.hpp"

namespace ibacct {

struct TraceRecord {
    std::string job_id;
    std::string user_id;
    Timestamp submit_time = 0.0;
    int cores_requested = 1;
    double runtime_ref_s = 0.0;
    double energy_ref_j = 0.0;
};

struct TraceLoad {
    std::vector<TraceRecord> records;
    std::size_t discarded = 0;
};

inline constexpr std::string_view kTraceHeader = "job_id,user_id,submit_time,cores,runtime_s,energy_j";

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = line.find(sep, pos);
        out.push_back(trim(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

inline bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && p == end && std::isfinite(out);
}

inline bool parse_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && p == end;
}

inline bool is_skippable(std::string_view line) {
    line = trim(line);
    return line.empty() || line.front() == '#';
}

}  // namespace detail

inline TraceLoad load_trace(std::istream& in, const std::string& source = "<trace>") {
    TraceLoad out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_skippable(line)) continue;
        if (!header_seen) {
            if (detail::trim(line) != kTraceHeader) {
                throw ParseError(source, lineno, "expected header '" + std::string(kTraceHeader) + "'");
            }
            header_seen = true;
            continue;
        }
        const auto f = detail::split(line);
        if (f.size() != 6) {
            throw ParseError(source, lineno, "expected 6 fields, got " + std::to_string(f.size()));
        }
        TraceRecord r;
        r.job_id = std::string(f[0]);
        r.user_id = std::string(f[1]);
        if (r.job_id.empty()) throw ParseError(source, lineno, "empty job_id");
        if (!detail::parse_double(f[2], r.submit_time)) throw ParseError(source, lineno, "bad submit_time");
        if (!detail::parse_int(f[3], r.cores_requested) || r.cores_requested < 1) {
            throw ParseError(source, lineno, "cores must be an integer >= 1");
        }
        if (!detail::parse_double(f[4], r.runtime_ref_s) || r.runtime_ref_s <= 0.0) {
            throw ParseError(source, lineno, "runtime_s must be > 0");
        }
        if (f[5].empty()) {
            ++out.discarded;
            continue;
        }
        if (!detail::parse_double(f[5], r.energy_ref_j) || r.energy_ref_j < 0.0) {
            throw ParseError(source, lineno, "bad energy_j");
        }
        if (r.energy_ref_j == 0.0) {
            ++out.discarded;
            continue;
        }
        if (!seen.insert(r.job_id).second) {
            throw ParseError(source, lineno, "duplicate job_id '" + r.job_id + "'");
        }
        out.records.push_back(std::move(r));
    }
    if (!header_seen) throw ParseError(source, lineno, "missing header");
    return out;
}

inline void write_trace(std::ostream& os, const std::vector<TraceRecord>& records) {
    os << kTraceHeader << '\n';
    char buf[64];
    auto num = [&](double v) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, p);
    };
    for (const auto& r : records) {
        os << r.job_id << ',' << r.user_id << ',' << num(r.submit_time) << ',' << r.cores_requested << ','
           << num(r.runtime_ref_s) << ',' << num(r.energy_ref_j) << '\n';
    }
}

}  // namespace ibacct
