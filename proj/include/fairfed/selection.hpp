#pragma once

// Client-selection policies, weight normalization, asymptotic weight
// limits, and long-run selection statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace fairfed {

enum class SelectionKind { Random, InverseAvailability, ReactiveReweight };
enum class SelectionMode { SampleProportionalWithoutReplacement, TopK };

inline SelectionKind selection_kind_from_string(const std::string& s) {
    if (s == "random") return SelectionKind::Random;
    if (s == "inverse_availability") return SelectionKind::InverseAvailability;
    if (s == "reactive_reweight") return SelectionKind::ReactiveReweight;
    throw std::invalid_argument("unknown selection kind: " + s);
}

inline SelectionMode selection_mode_from_string(const std::string& s) {
    if (s == "sample") return SelectionMode::SampleProportionalWithoutReplacement;
    if (s == "topk") return SelectionMode::TopK;
    throw std::invalid_argument("unknown selection mode: " + s);
}

struct SelectionPolicy {
    SelectionKind kind = SelectionKind::Random;
    std::size_t m = 1;
    SelectionMode mode = SelectionMode::SampleProportionalWithoutReplacement;
    std::vector<double> alpha;  // per-client boost; empty means all ones
    double lambda = 0.0;
    double epsilon = 0.01;

    double alpha_for(std::size_t k) const { return alpha.empty() ? 1.0 : alpha[k]; }

    void validate(std::size_t n_clients) const {
        if (n_clients == 0) throw std::invalid_argument("selection: no clients");
        if (m < 1 || m > n_clients)
            throw std::invalid_argument("selection: m must satisfy 1 <= m <= N");
        if (!alpha.empty() && alpha.size() != n_clients)
            throw std::invalid_argument("selection: alpha size mismatch");
        for (double a : alpha)
            if (!(a > 0.0) || !std::isfinite(a))
                throw std::invalid_argument("selection: alpha entries must be positive");
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw std::invalid_argument("selection: lambda must be >= 0");
        if (!(epsilon > 0.0) || !std::isfinite(epsilon))
            throw std::invalid_argument("selection: epsilon must be > 0");
    }
};

// Raw (unnormalized) per-client weights. Estimates must be positive;
// missed counts are consulted only by ReactiveReweight.
inline std::vector<double> weights(const SelectionPolicy& policy,
                                   std::span<const double> pi_hat,
                                   std::span<const std::uint64_t> missed) {
    const std::size_t n = pi_hat.size();
    policy.validate(n);
    for (double p : pi_hat)
        if (!(p > 0.0) || !std::isfinite(p))
            throw std::invalid_argument("weights: estimates must be positive");
    std::vector<double> w(n, 1.0);
    switch (policy.kind) {
        case SelectionKind::Random:
            break;
        case SelectionKind::InverseAvailability:
            for (std::size_t k = 0; k < n; ++k) w[k] = 1.0 / pi_hat[k];
            break;
        case SelectionKind::ReactiveReweight:
            if (missed.size() != n)
                throw std::invalid_argument("weights: missed-count size mismatch");
            for (std::size_t k = 0; k < n; ++k)
                w[k] = policy.alpha_for(k) / (pi_hat[k] + policy.epsilon) *
                       (1.0 + policy.lambda * static_cast<double>(missed[k]));
            break;
    }
    return w;
}

inline std::vector<double> normalize(std::span<const double> raw) {
    if (raw.empty()) throw std::invalid_argument("normalize: empty selection set");
    double sum = 0.0;
    for (double w : raw) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw std::invalid_argument("normalize: weights must be non-negative");
        sum += w;
    }
    if (!(sum > 0.0)) throw std::invalid_argument("normalize: no positive weight");
    std::vector<double> p(raw.begin(), raw.end());
    for (double& v : p) v /= sum;
    return p;
}

// Chosen client ids (ascending), size min(m, |available|); never includes
// an unavailable client. Sampling mode draws sequentially, removing each
// draw and renormalizing; TopK breaks weight ties by lowest id.
inline std::vector<std::size_t> select(const SelectionPolicy& policy,
                                       std::span<const std::uint8_t> available,
                                       std::span<const double> raw_weights,
                                       Rng& rng) {
    const std::size_t n = available.size();
    policy.validate(n);
    if (raw_weights.size() != n)
        throw std::invalid_argument("select: weight size mismatch");
    std::vector<std::size_t> pool;
    for (std::size_t k = 0; k < n; ++k)
        if (available[k]) pool.push_back(k);
    if (pool.empty()) return {};
    const std::size_t take = std::min(policy.m, pool.size());
    std::vector<std::size_t> chosen;
    chosen.reserve(take);

    if (policy.mode == SelectionMode::TopK) {
        std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
            if (raw_weights[a] != raw_weights[b]) return raw_weights[a] > raw_weights[b];
            return a < b;
        });
        chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    } else {
        std::vector<double> w;
        w.reserve(pool.size());
        double total = 0.0;
        for (std::size_t k : pool) {
            if (!(raw_weights[k] > 0.0) || !std::isfinite(raw_weights[k]))
                throw std::invalid_argument("select: weights must be positive");
            w.push_back(raw_weights[k]);
            total += raw_weights[k];
        }
        for (std::size_t d = 0; d < take; ++d) {
            double x = uniform01(rng) * total;
            std::size_t pick = pool.size() - 1;
            for (std::size_t i = 0; i < pool.size(); ++i) {
                if (x < w[i]) { pick = i; break; }
                x -= w[i];
            }
            chosen.push_back(pool[pick]);
            total -= w[pick];
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
            w.erase(w.begin() + static_cast<std::ptrdiff_t>(pick));
        }
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

// m independent proportional draws among the available clients, counting
// multiplicity per client. This is the draw model behind the long-run
// E[S_k(T)]/T -> m/N parity claim; per-client counts sum to m whenever any
// client is available.
inline std::vector<std::uint64_t> multinomial_counts(std::span<const std::uint8_t> available,
                                                     std::span<const double> raw_weights,
                                                     std::size_t m, Rng& rng) {
    const std::size_t n = available.size();
    if (raw_weights.size() != n)
        throw std::invalid_argument("multinomial_counts: weight size mismatch");
    std::vector<std::uint64_t> counts(n, 0);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (!available[k]) continue;
        if (!(raw_weights[k] > 0.0) || !std::isfinite(raw_weights[k]))
            throw std::invalid_argument("multinomial_counts: weights must be positive");
        total += raw_weights[k];
    }
    if (!(total > 0.0)) return counts;
    for (std::size_t d = 0; d < m; ++d) {
        double x = uniform01(rng) * total;
        std::size_t pick = n;
        for (std::size_t k = 0; k < n; ++k) {
            if (!available[k]) continue;
            pick = k;
            if (x < raw_weights[k]) break;
            x -= raw_weights[k];
        }
        counts[pick]++;
    }
    return counts;
}

// Limiting normalized reactive weights: for lambda > 0 proportional to
// alpha_k (1 - pi_k) / (pi_k + eps); for lambda = 0 to alpha_k / (pi_k + eps).
inline std::vector<double> asymptotic_weight_limit(std::span<const double> pi,
                                                   std::span<const double> alpha,
                                                   double lambda, double epsilon) {
    const std::size_t n = pi.size();
    if (n == 0) throw std::invalid_argument("asymptotic_weight_limit: no clients");
    if (!alpha.empty() && alpha.size() != n)
        throw std::invalid_argument("asymptotic_weight_limit: alpha size mismatch");
    if (!(lambda >= 0.0)) throw std::invalid_argument("asymptotic_weight_limit: lambda < 0");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("asymptotic_weight_limit: epsilon < 0");
    std::vector<double> u(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (!(pi[k] > 0.0) || pi[k] > 1.0)
            throw std::invalid_argument("asymptotic_weight_limit: pi must be in (0, 1]");
        const double a = alpha.empty() ? 1.0 : alpha[k];
        if (!(a > 0.0)) throw std::invalid_argument("asymptotic_weight_limit: alpha <= 0");
        if (!(pi[k] + epsilon > 0.0))
            throw std::invalid_argument("asymptotic_weight_limit: pi + epsilon <= 0");
        u[k] = lambda > 0.0 ? a * (1.0 - pi[k]) / (pi[k] + epsilon)
                            : a / (pi[k] + epsilon);
    }
    if (lambda > 0.0 && std::accumulate(u.begin(), u.end(), 0.0) <= 0.0)
        throw std::domain_error(
            "asymptotic_weight_limit: degenerate limit, all clients always available");
    return normalize(u);
}

inline std::vector<double> asymptotic_weight_limit(std::initializer_list<double> pi,
                                                   std::initializer_list<double> alpha,
                                                   double lambda, double epsilon) {
    return asymptotic_weight_limit(std::span<const double>(pi.begin(), pi.size()),
                                   std::span<const double>(alpha.begin(), alpha.size()),
                                   lambda, epsilon);
}

struct SelectionStats {
    std::vector<double> frequency;  // S_k / T
    std::vector<double> deviation;  // |S_k / T - m / N|
    double std_dev = 0.0;           // population std-dev of the frequencies
};

inline SelectionStats selection_stats(std::span<const std::uint64_t> counts,
                                      std::uint64_t rounds, std::size_t m,
                                      std::size_t n) {
    if (rounds < 1) throw std::invalid_argument("selection_stats: T must be >= 1");
    if (counts.size() != n) throw std::invalid_argument("selection_stats: count size mismatch");
    if (n == 0) throw std::invalid_argument("selection_stats: no clients");
    SelectionStats st;
    st.frequency.resize(n);
    st.deviation.resize(n);
    const double share = static_cast<double>(m) / static_cast<double>(n);
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        st.frequency[k] = static_cast<double>(counts[k]) / static_cast<double>(rounds);
        st.deviation[k] = std::abs(st.frequency[k] - share);
        mean += st.frequency[k];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double f : st.frequency) var += (f - mean) * (f - mean);
    st.std_dev = std::sqrt(var / static_cast<double>(n));
    return st;
}

}  // namespace fairfed
