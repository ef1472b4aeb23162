#pragma once

// Tabular reports with CSV and JSON renderings. Both renderings print every
// number in its shortest round-trip form, so parsing either one recovers the
// same doubles.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ibacct/accounting.hpp"
#include "ibacct/carbon.hpp"
#include "ibacct/error.hpp"
#include "ibacct/simengine.hpp"

namespace ibacct {

enum class ReportKind { QuoteTable, PolicySummary, Timeline, Distribution, EmbodiedComparison };
enum class ReportFormat { Csv, Json };

inline std::string_view to_string(ReportKind k) {
    switch (k) {
        case ReportKind::QuoteTable: return "quote-table";
        case ReportKind::PolicySummary: return "policy-summary";
        case ReportKind::Timeline: return "timeline";
        case ReportKind::Distribution: return "distribution";
        case ReportKind::EmbodiedComparison: return "embodied-comparison";
    }
    return "?";
}

inline ReportFormat parse_format(std::string_view s) {
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    throw ValidationError("unknown format '" + std::string(s) + "' (expected csv or json)");
}

inline std::string_view extension(ReportFormat f) { return f == ReportFormat::Csv ? "csv" : "json"; }

struct ReportSpec {
    ReportKind kind = ReportKind::QuoteTable;
    ReportFormat format = ReportFormat::Csv;
    bool normalize = false;

    void validate() const {
        detail::require(!normalize || kind == ReportKind::QuoteTable, "normalization applies to quote-table only");
    }
};

/// A cell holds text, an integer count, or a real value.
using Cell = std::variant<std::string, std::int64_t, double>;

struct Table {
    ReportKind kind = ReportKind::QuoteTable;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row) {
        detail::require(row.size() == columns.size(), "row width does not match the header");
        rows.push_back(std::move(row));
    }
    std::size_t column(std::string_view name) const {
        auto it = std::find(columns.begin(), columns.end(), name);
        detail::require(it != columns.end(), "no column '" + std::string(name) + "'");
        return static_cast<std::size_t>(it - columns.begin());
    }
};

/// Shortest text that parses back to exactly `v`; non-finite values are spelled "inf", "-inf" or "nan".
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline std::string cell_text(const Cell& c) {
    if (const auto* s = std::get_if<std::string>(&c)) return csv_field(*s);
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    return format_number(std::get<double>(c));
}

inline nlohmann::json cell_json(const Cell& c) {
    if (const auto* s = std::get_if<std::string>(&c)) return *s;
    if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
    const double v = std::get<double>(c);
    // JSON has no literal for non-finite numbers; the CSV spelling is reused.
    if (!std::isfinite(v)) return format_number(v);
    return v;
}

}  // namespace detail

inline void write_csv(std::ostream& os, const Table& t) {
    for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << detail::csv_field(t.columns[i]);
    os << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << detail::cell_text(row[i]);
        os << '\n';
    }
}

inline nlohmann::json to_json(const Table& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : t.rows) {
        nlohmann::json obj = nlohmann::json::object();
        for (std::size_t i = 0; i < row.size(); ++i) obj[t.columns[i]] = detail::cell_json(row[i]);
        rows.push_back(std::move(obj));
    }
    return {{"report", std::string(to_string(t.kind))}, {"columns", t.columns}, {"rows", std::move(rows)}};
}

inline void write_table(std::ostream& os, const Table& t, ReportFormat f) {
    if (f == ReportFormat::Csv) {
        write_csv(os, t);
    } else {
        os << to_json(t).dump(2) << '\n';
    }
}

/// Cost of every execution under every method. Each execution row is quoted on
/// its own machine; `executions` usually hold one benchmark run per machine.
/// With `normalize`, each method column is divided by its minimum within the
/// same job id, so the cheapest machine reads exactly 1.
inline Table quote_table(const std::vector<Machine>& machines, const std::vector<Execution>& executions,
                         const std::vector<Method>& methods, const IntensityMap& intensity, bool normalize,
                         const QuoteOptions& qopts = {}) {
    detail::require(!methods.empty(), "no accounting methods selected");
    std::map<std::string, const Machine*> by_id;
    for (const auto& m : machines) by_id[m.id] = &m;

    Table t;
    t.kind = ReportKind::QuoteTable;
    t.columns = {"job_id", "machine_id", "duration_s", "energy_j", "cores_used"};
    for (Method m : methods) t.columns.emplace_back(to_string(m));

    std::vector<std::vector<double>> amounts;
    for (const auto& e : executions) {
        auto it = by_id.find(e.machine_id);
        detail::require(it != by_id.end(), "execution '" + e.job_id + "' names unknown machine '" + e.machine_id + "'");
        const Machine& m = *it->second;
        const CarbonIntensitySeries* series = find_series(intensity, m.region_id);
        std::vector<double> row;
        for (Method method : methods) row.push_back(quote(method, e, m, series, qopts).amount);
        amounts.push_back(std::move(row));
    }
    if (normalize) {
        std::map<std::string, std::vector<double>> minima;
        for (std::size_t r = 0; r < executions.size(); ++r) {
            auto& mins = minima.try_emplace(executions[r].job_id, methods.size(), INFINITY).first->second;
            for (std::size_t c = 0; c < methods.size(); ++c) mins[c] = std::min(mins[c], amounts[r][c]);
        }
        for (std::size_t r = 0; r < executions.size(); ++r) {
            const auto& mins = minima.at(executions[r].job_id);
            for (std::size_t c = 0; c < methods.size(); ++c) {
                detail::require(mins[c] > 0.0, "cannot normalize a " + std::string(to_string(methods[c])) +
                                                   " column whose minimum is zero");
                amounts[r][c] /= mins[c];
            }
        }
    }
    for (std::size_t r = 0; r < executions.size(); ++r) {
        const auto& e = executions[r];
        std::vector<Cell> row{e.job_id, e.machine_id, e.duration_s, e.energy_j, std::int64_t{e.cores_used}};
        for (double a : amounts[r]) row.emplace_back(a);
        t.add(std::move(row));
    }
    return t;
}

inline Table policy_summary(const std::vector<SimulationResult>& results) {
    Table t;
    t.kind = ReportKind::PolicySummary;
    t.columns = {"policy",         "method",          "budget",           "spent",           "charged",
                 "jobs_admitted",  "jobs_completed",  "jobs_unfinished",  "jobs_over_budget", "jobs_unplaceable",
                 "work_core_h",    "energy_kwh",      "operational_g",    "attributed_g"};
    for (const auto& r : results) {
        t.add({r.policy, std::string(to_string(r.method)), r.budget, r.spent, r.charged,
               static_cast<std::int64_t>(r.jobs_admitted), static_cast<std::int64_t>(r.jobs_completed),
               static_cast<std::int64_t>(r.jobs_unfinished), static_cast<std::int64_t>(r.jobs_over_budget),
               static_cast<std::int64_t>(r.jobs_unplaceable), r.work_core_h, r.energy_kwh, r.operational_g,
               r.attributed_g});
    }
    return t;
}

/// Completed jobs and cumulative core-hours over time, one series per (policy, method).
inline Table timeline(const std::vector<SimulationResult>& results) {
    Table t;
    t.kind = ReportKind::Timeline;
    t.columns = {"policy", "method", "time", "jobs_completed", "work_core_h"};
    for (const auto& r : results) {
        std::map<std::string, double> work;
        for (const auto& j : r.jobs) work[j.job_id] = j.work_core_h;
        double cumulative = 0.0;
        std::int64_t completed = 0;
        for (const auto& e : r.events) {
            if (e.kind != SimEventKind::End) continue;
            cumulative += work.at(e.job_id);
            t.add({r.policy, std::string(to_string(r.method)), e.time, ++completed, cumulative});
        }
    }
    return t;
}

/// Completed jobs per machine for every (policy, method).
inline Table distribution(const std::vector<SimulationResult>& results) {
    Table t;
    t.kind = ReportKind::Distribution;
    t.columns = {"policy", "method", "machine_id", "jobs_completed"};
    for (const auto& r : results) {
        for (const auto& [id, n] : r.per_machine_jobs) {
            t.add({r.policy, std::string(to_string(r.method)), id, static_cast<std::int64_t>(n)});
        }
    }
    return t;
}

/// Hourly embodied-carbon rate under accelerated and linear depreciation at each age.
inline Table embodied_comparison(const std::vector<Machine>& machines, const std::vector<int>& ages) {
    detail::require(!ages.empty(), "no ages requested");
    Table t;
    t.kind = ReportKind::EmbodiedComparison;
    t.columns = {"machine_id", "age_years", "accelerated_g_per_h", "linear_g_per_h", "ratio"};
    for (const auto& m : machines) {
        DepreciationSchedule accel;
        accel.total_embodied_g = m.embodied_carbon_g;
        DepreciationSchedule lin = accel;
        lin.method = DepreciationMethod::Linear;
        for (int y : ages) {
            const double a = hourly_carbon_rate(accel, y);
            const double l = hourly_carbon_rate(lin, y);
            const double ratio = l > 0.0 ? a / l : std::numeric_limits<double>::quiet_NaN();
            t.add({m.id, std::int64_t{y}, a, l, ratio});
        }
    }
    return t;
}

}  // namespace ibacct
