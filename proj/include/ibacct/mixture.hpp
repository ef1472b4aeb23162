#pragma once

// Diagonal-covariance Gaussian mixture over hardware-counter rates, fitted by
// expectation-maximization and used to draw synthetic counter vectors for jobs
// whose counters were never captured.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "ibacct/error.hpp"

namespace ibacct {

/// Fixed-order, non-negative counter rates (e.g. instructions/s, LLC-misses/s).
using CounterVector = std::vector<double>;

struct MixtureComponent {
    double weight = 0.0;
    std::vector<double> mean;
    std::vector<double> variance;  // diagonal
};

struct MixtureModel {
    std::vector<MixtureComponent> components;

    std::size_t dimension() const { return components.empty() ? 0 : components.front().mean.size(); }

    /// Weighted mean of the component means.
    std::vector<double> mean() const {
        std::vector<double> m(dimension(), 0.0);
        for (const auto& c : components) {
            for (std::size_t d = 0; d < m.size(); ++d) m[d] += c.weight * c.mean[d];
        }
        return m;
    }

    void validate() const {
        detail::require(!components.empty(), "mixture has no components");
        const std::size_t dim = dimension();
        double total = 0.0;
        for (const auto& c : components) {
            detail::require(c.weight > 0.0, "mixture weights must be positive");
            detail::require(c.mean.size() == dim && c.variance.size() == dim, "inconsistent mixture dimension");
            for (double v : c.variance) detail::require(v >= 0.0, "mixture variances must be >= 0");
            total += c.weight;
        }
        detail::require(std::abs(total - 1.0) < 1e-9, "mixture weights must sum to 1");
    }
};

struct EmOptions {
    double tolerance = 1e-6;  // on the mean per-sample log-likelihood
    int max_iterations = 200;
};

struct MixtureFit {
    MixtureModel model;
    std::vector<double> log_likelihood;  // mean per-sample, one entry per E-step
    bool converged = false;
};

namespace detail {

inline double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

inline double log_gaussian_diag(const std::vector<double>& x, const std::vector<double>& mean,
                                const std::vector<double>& var) {
    double acc = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double diff = x[d] - mean[d];
        acc += -0.5 * (std::log(2.0 * std::numbers::pi * var[d]) + diff * diff / var[d]);
    }
    return acc;
}

}  // namespace detail

inline MixtureFit fit_mixture_traced(const std::vector<CounterVector>& samples, std::size_t k, std::uint64_t seed,
                                     const EmOptions& opts = {}) {
    detail::require(k >= 1, "mixture needs at least one component");
    detail::require(samples.size() >= k, "fewer samples than mixture components");
    const std::size_t n = samples.size();
    const std::size_t dim = samples.front().size();
    detail::require(dim >= 1, "counter vectors must be non-empty");
    for (const auto& s : samples) {
        detail::require(s.size() == dim, "inconsistent counter dimension");
        for (double v : s) detail::require(std::isfinite(v) && v >= 0.0, "counter values must be finite and >= 0");
    }

    std::vector<double> gmean(dim, 0.0), gvar(dim, 0.0);
    for (const auto& s : samples)
        for (std::size_t d = 0; d < dim; ++d) gmean[d] += s[d];
    for (double& m : gmean) m /= static_cast<double>(n);
    for (const auto& s : samples)
        for (std::size_t d = 0; d < dim; ++d) gvar[d] += (s[d] - gmean[d]) * (s[d] - gmean[d]);
    for (double& v : gvar) v /= static_cast<double>(n);
    const bool degenerate = std::all_of(gvar.begin(), gvar.end(), [](double v) { return v == 0.0; });
    detail::require(!degenerate, "degenerate input: all samples are identical");

    // Floor keeps a component from collapsing onto a single point.
    std::vector<double> floor(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        floor[d] = gvar[d] > 0.0 ? 1e-6 * gvar[d] : 1e-9 * std::max(1.0, gmean[d] * gmean[d]);
    }

    // k-means++ style seeding on variance-scaled distances.
    std::mt19937_64 rng(seed);
    auto scaled_dist2 = [&](const CounterVector& a, const std::vector<double>& b) {
        double acc = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            if (gvar[d] > 0.0) acc += (a[d] - b[d]) * (a[d] - b[d]) / gvar[d];
        }
        return acc;
    };
    std::vector<std::vector<double>> centers;
    centers.push_back(samples[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    std::vector<double> d2(n);
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, scaled_dist2(samples[i], c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (pick = 0; pick + 1 < n; ++pick) {
                if (u < d2[pick]) break;
                u -= d2[pick];
            }
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        }
        centers.push_back(samples[pick]);
    }

    MixtureFit fit;
    auto& comps = fit.model.components;
    for (const auto& c : centers) {
        MixtureComponent comp;
        comp.weight = 1.0 / static_cast<double>(k);
        comp.mean = c;
        comp.variance = gvar;
        for (std::size_t d = 0; d < dim; ++d) comp.variance[d] = std::max(comp.variance[d], floor[d]);
        comps.push_back(std::move(comp));
    }

    std::vector<std::vector<double>> resp(n, std::vector<double>(k));
    std::vector<double> logp(k);
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        // E-step
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                logp[j] = std::log(comps[j].weight) + detail::log_gaussian_diag(samples[i], comps[j].mean, comps[j].variance);
            }
            const double lse = detail::log_sum_exp(logp);
            ll += lse;
            for (std::size_t j = 0; j < k; ++j) resp[i][j] = std::exp(logp[j] - lse);
        }
        ll /= static_cast<double>(n);
        fit.log_likelihood.push_back(ll);
        const std::size_t h = fit.log_likelihood.size();
        if (h >= 2 && fit.log_likelihood[h - 1] - fit.log_likelihood[h - 2] < opts.tolerance) {
            fit.converged = true;
            break;
        }

        // M-step
        for (std::size_t j = 0; j < k; ++j) {
            double nk = 0.0;
            for (std::size_t i = 0; i < n; ++i) nk += resp[i][j];
            if (nk <= std::numeric_limits<double>::min()) {
                comps[j].weight = 1e-12;  // keep the old shape; weight renormalised below
                continue;
            }
            comps[j].weight = nk / static_cast<double>(n);
            for (std::size_t d = 0; d < dim; ++d) {
                double m = 0.0;
                for (std::size_t i = 0; i < n; ++i) m += resp[i][j] * samples[i][d];
                m /= nk;
                double v = 0.0;
                for (std::size_t i = 0; i < n; ++i) v += resp[i][j] * (samples[i][d] - m) * (samples[i][d] - m);
                v /= nk;
                comps[j].mean[d] = m;
                comps[j].variance[d] = std::max(v, floor[d]);
            }
        }
        double wsum = 0.0;
        for (const auto& c : comps) wsum += c.weight;
        for (auto& c : comps) c.weight /= wsum;
    }
    return fit;
}

inline MixtureModel fit_mixture(const std::vector<CounterVector>& samples, std::size_t k, std::uint64_t seed,
                                const EmOptions& opts = {}) {
    return fit_mixture_traced(samples, k, seed, opts).model;
}

/// Draws one vector; negative coordinates are clamped to zero.
template <class Rng>
CounterVector sample_counter(const MixtureModel& m, Rng& rng) {
    std::vector<double> weights;
    weights.reserve(m.components.size());
    for (const auto& c : m.components) weights.push_back(c.weight);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const auto& comp = m.components[pick(rng)];
    CounterVector out(comp.mean.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t d = 0; d < out.size(); ++d) {
        const double z = normal(rng);
        out[d] = std::max(0.0, comp.mean[d] + std::sqrt(comp.variance[d]) * z);
    }
    return out;
}

inline std::vector<CounterVector> sample_counters(const MixtureModel& m, std::size_t n, std::uint64_t seed) {
    m.validate();
    detail::require(n >= 1, "sample count must be >= 1");
    std::mt19937_64 rng(seed);
    std::vector<CounterVector> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample_counter(m, rng));
    return out;
}

}  // namespace ibacct
