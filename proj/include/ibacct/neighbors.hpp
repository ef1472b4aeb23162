#pragma once

// k-nearest-neighbour extrapolation of a job's runtime and power from the
// reference machine to other machines.
//
// Each training point is a benchmark's counter vector together with, per
// machine, its runtime and mean power relative to the reference machine.
// Features are z-score normalised; the k nearest points (Euclidean) vote
// with inverse-distance weights.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ibacct/accounting.hpp"
#include "ibacct/error.hpp"
#include "ibacct/mixture.hpp"
#include "ibacct/trace.hpp"

namespace ibacct {

struct RelativeCost {
    double runtime_scale = 1.0;  // runtime on machine / runtime on reference
    double power_scale = 1.0;    // mean power on machine / mean power on reference
};

struct TrainingPoint {
    CounterVector counters;
    std::map<std::string, RelativeCost> per_machine;
};

struct Prediction {
    double runtime_s = 0.0;
    double energy_j = 0.0;
};

class NeighborModel {
public:
    NeighborModel() = default;

    NeighborModel(std::vector<TrainingPoint> points, std::size_t k, std::string reference_machine)
        : points_(std::move(points)), k_(k), reference_(std::move(reference_machine)) {
        detail::require(!points_.empty(), "neighbour model needs training points");
        detail::require(k_ >= 1 && k_ <= points_.size(), "k must be in [1, training-set size]");
        const std::size_t dim = points_.front().counters.size();
        detail::require(dim >= 1, "training counters must be non-empty");
        for (const auto& p : points_) {
            detail::require(p.counters.size() == dim, "inconsistent training counter dimension");
            detail::require(p.per_machine.size() == points_.front().per_machine.size(),
                            "every training point must cover the same machines");
            for (const auto& [id, rc] : p.per_machine) {
                detail::require(points_.front().per_machine.count(id) == 1,
                                "every training point must cover the same machines");
                detail::require(rc.runtime_scale > 0.0 && rc.power_scale > 0.0,
                                "training scales must be positive");
            }
        }
        mean_.assign(dim, 0.0);
        scale_.assign(dim, 0.0);
        for (const auto& p : points_)
            for (std::size_t d = 0; d < dim; ++d) mean_[d] += p.counters[d];
        for (double& m : mean_) m /= static_cast<double>(points_.size());
        for (const auto& p : points_)
            for (std::size_t d = 0; d < dim; ++d) scale_[d] += (p.counters[d] - mean_[d]) * (p.counters[d] - mean_[d]);
        for (double& s : scale_) {
            s = std::sqrt(s / static_cast<double>(points_.size()));
            if (s == 0.0) s = 1.0;
        }
    }

    std::size_t k() const noexcept { return k_; }
    const std::string& reference_machine() const noexcept { return reference_; }
    const std::vector<TrainingPoint>& points() const noexcept { return points_; }
    std::size_t dimension() const { return mean_.size(); }

    bool covers(const std::string& machine_id) const {
        return !points_.empty() && points_.front().per_machine.count(machine_id) == 1;
    }

    /// Inverse-distance-weighted relative cost of `cv` on `machine_id`.
    RelativeCost estimate(const CounterVector& cv, const std::string& machine_id) const {
        detail::require(cv.size() == dimension(), "counter dimension does not match the neighbour model");
        if (!covers(machine_id)) {
            throw ValidationError("machine '" + machine_id + "' is absent from the neighbour training data");
        }
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(points_.size());
        for (std::size_t i = 0; i < points_.size(); ++i) {
            double acc = 0.0;
            for (std::size_t d = 0; d < cv.size(); ++d) {
                const double diff = (cv[d] - points_[i].counters[d]) / scale_[d];
                acc += diff * diff;
            }
            dist.emplace_back(std::sqrt(acc), i);
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());

        // Exact hits short-circuit the 1/d weighting.
        RelativeCost exact{0.0, 0.0};
        std::size_t hits = 0;
        for (std::size_t j = 0; j < k_ && dist[j].first == 0.0; ++j, ++hits) {
            const auto& rc = points_[dist[j].second].per_machine.at(machine_id);
            exact.runtime_scale += rc.runtime_scale;
            exact.power_scale += rc.power_scale;
        }
        if (hits > 0) {
            return {exact.runtime_scale / hits, exact.power_scale / hits};
        }
        double wsum = 0.0;
        RelativeCost out{0.0, 0.0};
        for (std::size_t j = 0; j < k_; ++j) {
            const double w = 1.0 / dist[j].first;
            const auto& rc = points_[dist[j].second].per_machine.at(machine_id);
            out.runtime_scale += w * rc.runtime_scale;
            out.power_scale += w * rc.power_scale;
            wsum += w;
        }
        return {out.runtime_scale / wsum, out.power_scale / wsum};
    }

private:
    std::vector<TrainingPoint> points_;
    std::size_t k_ = 5;
    std::string reference_;
    std::vector<double> mean_;
    std::vector<double> scale_;
};

/// Runtime and energy of `ref`'s job on `target`, extrapolated from its reference measurements.
inline Prediction predict_execution(const NeighborModel& nm, const CounterVector& cv, const TraceRecord& ref,
                                    const Machine& target) {
    const RelativeCost rc = nm.estimate(cv, target.id);
    const double runtime = ref.runtime_ref_s * rc.runtime_scale;
    // runtime * (reference power * power_scale), rearranged so unit scales reproduce the reference energy exactly
    const double energy = ref.energy_ref_j * rc.runtime_scale * rc.power_scale;
    detail::require(runtime > 0.0 && energy > 0.0, "prediction must be strictly positive");
    return {runtime, energy};
}

/// Reads a training set. Columns named `<machine>.runtime_scale` and
/// `<machine>.power_scale` are targets; every other column is a counter.
inline std::vector<TrainingPoint> load_training_set(std::istream& in, const std::string& source = "<training>") {
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    std::vector<TrainingPoint> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_skippable(line)) continue;
        const auto f = detail::split(line);
        if (header.empty()) {
            for (auto s : f) header.emplace_back(s);
            continue;
        }
        if (f.size() != header.size()) throw ParseError(source, lineno, "field count does not match header");
        TrainingPoint p;
        for (std::size_t c = 0; c < f.size(); ++c) {
            double v = 0.0;
            if (!detail::parse_double(f[c], v)) throw ParseError(source, lineno, "bad number in column " + header[c]);
            const auto& name = header[c];
            if (auto pos = name.rfind(".runtime_scale"); pos != std::string::npos && pos + 14 == name.size()) {
                p.per_machine[name.substr(0, pos)].runtime_scale = v;
            } else if (auto pos2 = name.rfind(".power_scale"); pos2 != std::string::npos && pos2 + 12 == name.size()) {
                p.per_machine[name.substr(0, pos2)].power_scale = v;
            } else {
                p.counters.push_back(v);
            }
        }
        out.push_back(std::move(p));
    }
    if (header.empty()) throw ParseError(source, lineno, "missing header");
    return out;
}

}  // namespace ibacct
