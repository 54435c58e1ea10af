#pragma once

// Scalar fairness metrics reported each round: Jain index, coefficient of
// variation of normalized utilities, selection-count gap, and Gini over
// selection counts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairfed {

inline double mean_of(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean_of: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Population (biased) variance; the cross-client dispersion quantities
// below all use 1/N, not 1/(N-1).
inline double population_variance(std::span<const double> v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

// Jain index (sum v)^2 / (N sum v^2), in [1/N, 1]. An all-zero vector is
// defined as 1 (everyone equally served); `degenerate` reports that case.
inline double jain(std::span<const double> v, bool* degenerate = nullptr) {
    if (v.empty()) throw std::invalid_argument("jain: empty input");
    double s = 0.0, s2 = 0.0;
    for (double x : v) {
        if (x < 0.0) throw std::invalid_argument("jain: negative entry");
        s += x;
        s2 += x * x;
    }
    if (s2 == 0.0) {
        if (degenerate) *degenerate = true;
        return 1.0;
    }
    if (degenerate) *degenerate = false;
    return (s * s) / (static_cast<double>(v.size()) * s2);
}

inline double jain(std::initializer_list<double> v, bool* degenerate = nullptr) {
    return jain(std::span<const double>(v.begin(), v.size()), degenerate);
}

// Coefficient of variation with an epsilon-guarded denominator:
// population std / (mean + epsilon).
inline double utility_cv(std::span<const double> v, double epsilon = 1e-8) {
    if (v.empty()) throw std::invalid_argument("utility_cv: empty input");
    if (epsilon < 0.0) throw std::invalid_argument("utility_cv: negative epsilon");
    const double sd = std::sqrt(population_variance(v));
    return sd / (mean_of(v) + epsilon);
}

inline double utility_cv(std::initializer_list<double> v, double epsilon = 1e-8) {
    return utility_cv(std::span<const double>(v.begin(), v.size()), epsilon);
}

enum class SelectionGapVariant {
    PerRound,         // (1/T) sum_k |S_k/m - T/N|
    FrequencyShare,   // sum_k |S_k/(mT) - 1/N|
};

inline SelectionGapVariant selection_gap_variant_from_string(const std::string& s) {
    if (s == "per_round") return SelectionGapVariant::PerRound;
    if (s == "frequency_share") return SelectionGapVariant::FrequencyShare;
    throw std::invalid_argument("selection gap variant must be per_round or frequency_share");
}

inline double selection_gap(std::span<const std::uint64_t> counts,
                            std::uint64_t clients_per_round,
                            std::uint64_t rounds,
                            SelectionGapVariant variant) {
    if (counts.empty()) throw std::invalid_argument("selection_gap: empty counts");
    if (clients_per_round == 0) throw std::invalid_argument("selection_gap: m must be positive");
    if (rounds == 0) throw std::invalid_argument("selection_gap: T must be positive");
    const double n = static_cast<double>(counts.size());
    const double m = static_cast<double>(clients_per_round);
    const double t = static_cast<double>(rounds);
    double gap = 0.0;
    if (variant == SelectionGapVariant::PerRound) {
        for (std::uint64_t s : counts) gap += std::abs(static_cast<double>(s) / m - t / n);
        gap /= t;
    } else {
        for (std::uint64_t s : counts) gap += std::abs(static_cast<double>(s) / (m * t) - 1.0 / n);
    }
    return gap;
}

inline double selection_gap(std::initializer_list<std::uint64_t> counts,
                            std::uint64_t clients_per_round,
                            std::uint64_t rounds,
                            SelectionGapVariant variant) {
    return selection_gap(std::span<const std::uint64_t>(counts.begin(), counts.size()),
                         clients_per_round, rounds, variant);
}

// Gini coefficient sum_ij |x_i - x_j| / (2 N^2 mean) over non-negative
// counts; undefined (error) when the total is zero.
inline double gini(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("gini: empty input");
    double total = 0.0;
    for (double x : v) {
        if (x < 0.0) throw std::invalid_argument("gini: negative entry");
        total += x;
    }
    if (total == 0.0) throw std::invalid_argument("gini: undefined for all-zero input");
    const double n = static_cast<double>(v.size());
    // O(n log n) via the sorted-rank identity; equals the pairwise double sum.
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    double weighted = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i)
        weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * sorted[i];
    return weighted / (n * total);
}

inline double gini(std::initializer_list<double> v) {
    return gini(std::span<const double>(v.begin(), v.size()));
}

}  // namespace fairfed
