#pragma once

// Cumulative utility bookkeeping and its availability-normalized view.
// u_k accumulates bounded per-round increments; u_k / pi_k compares clients
// on a per-opportunity basis, and the cross-client population variance of
// that quantity is the fairness signal the simulator tracks.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fairfed/metrics.hpp"
#include "fairfed/rng.hpp"

namespace fairfed {

struct ClientState {
    std::size_t id = 0;
    double u = 0.0;                // cumulative utility
    std::uint64_t selected = 0;    // rounds this client participated
    std::uint64_t missed = 0;      // rounds this client was unavailable
    std::uint64_t idle = 0;        // rounds available but not picked
    std::optional<std::uint64_t> last_participation;
    double pi_hat = 0.0;           // estimate used when normalizing utilities
};

enum class AccrualMode {
    SelectedAndAvailable,  // utility flows only to participants (default)
    AvailabilityOnly,      // utility flows on every available round
};

// Record one round for one client. `delta` must lie in [0, bound]; selecting
// an unavailable client is a protocol violation.
inline void accrue(ClientState& state, bool available, bool selected, double delta,
                   double bound, AccrualMode mode) {
    if (selected && !available)
        throw std::invalid_argument("accrue: selected an unavailable client");
    if (!(delta >= 0.0) || delta > bound)
        throw std::invalid_argument("accrue: increment outside [0, bound]");
    switch (mode) {
        case AccrualMode::SelectedAndAvailable:
            if (selected && available) state.u += delta;
            break;
        case AccrualMode::AvailabilityOnly:
            if (available) state.u += delta;
            break;
    }
    if (!available) ++state.missed;
    else if (selected) ++state.selected;
    else ++state.idle;
}

// Additive utility credit from a cached stand-in signal; deliberately does
// not touch the participation counters.
inline void credit_surrogate(ClientState& state, double credit) {
    if (!(credit >= 0.0)) throw std::invalid_argument("credit_surrogate: negative credit");
    state.u += credit;
}

enum class NormalizationSource {
    TruePi,       // divide by the supplied ground-truth vector
    EstimatedPi,  // divide by each state's tracked pi_hat
};

struct NormalizedUtilities {
    std::vector<double> values;
    double mean = 0.0;
};

inline NormalizedUtilities normalized_utilities(std::span<const ClientState> states,
                                                std::span<const double> true_pi,
                                                NormalizationSource source,
                                                double floor_value = 0.01) {
    if (states.empty()) throw std::invalid_argument("normalized_utilities: no clients");
    if (source == NormalizationSource::TruePi && true_pi.size() != states.size())
        throw std::invalid_argument("normalized_utilities: pi size mismatch");
    NormalizedUtilities out;
    out.values.reserve(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
        const double pi = source == NormalizationSource::TruePi ? true_pi[k]
                                                                : states[k].pi_hat;
        if (pi < floor_value - 1e-15)
            throw std::invalid_argument("normalized_utilities: pi below the floor");
        out.values.push_back(states[k].u / pi);
        out.mean += out.values.back();
    }
    out.mean /= static_cast<double>(states.size());
    return out;
}

inline NormalizedUtilities normalized_utilities(const std::vector<ClientState>& states,
                                                const std::vector<double>& true_pi,
                                                NormalizationSource source,
                                                double floor_value = 0.01) {
    return normalized_utilities(std::span<const ClientState>(states),
                                std::span<const double>(true_pi), source, floor_value);
}

// Population variance of the normalized utilities.
inline double fairness_variance(std::span<const double> u_tilde) {
    return population_variance(u_tilde);
}

inline double fairness_variance(std::initializer_list<double> u_tilde) {
    return population_variance(std::span<const double>(u_tilde.begin(), u_tilde.size()));
}

enum class IncrementKind {
    Constant,        // delta = mu_k every time
    UniformBounded,  // uniform on [max(0, mu-sigma), min(M, mu+sigma)]
    LossDelta,       // supplied by the training workload, not sampled here
};

struct UtilityModel {
    IncrementKind kind = IncrementKind::Constant;
    std::vector<double> mu;  // per-client mean increment
    double sigma = 0.0;
    double bound = 1.0;      // M

    void validate() const {
        if (!(bound > 0.0)) throw std::invalid_argument("utility: bound must be positive");
        if (mu.empty()) throw std::invalid_argument("utility: empty mu vector");
        for (double m : mu)
            if (!(m >= 0.0) || m > bound)
                throw std::invalid_argument("utility: mu must lie in [0, bound]");
        if (sigma < 0.0) throw std::invalid_argument("utility: sigma must be non-negative");
    }
};

inline double sample_increment(const UtilityModel& model, std::size_t k, Rng& rng) {
    if (k >= model.mu.size()) throw std::out_of_range("utility: client index");
    switch (model.kind) {
        case IncrementKind::Constant:
            return model.mu[k];
        case IncrementKind::UniformBounded: {
            const double lo = std::max(0.0, model.mu[k] - model.sigma);
            const double hi = std::min(model.bound, model.mu[k] + model.sigma);
            return uniform_in(rng, lo, hi);
        }
        case IncrementKind::LossDelta:
            throw std::logic_error("utility: loss-delta increments come from the workload");
    }
    throw std::logic_error("utility: unknown increment kind");
}

// Closed-form expectation of the normalized utilities under idealized
// inverse-availability participation, where every available client transmits
// independently with probability (1/pi_k)/C and C = sum_j 1/pi_j. Each
// client's expected per-round contribution is then mu_k/C regardless of
// pi_k, and the normalized means concentrate at rounds*mu_k/(C*pi_k).
struct ParityPrediction {
    std::vector<double> expected;   // E[u_k / pi_k]
    double mean = 0.0;
    std::vector<double> deviation;  // |expected_k - mean|
    double uniform_bound = 0.0;     // 2*T*M / (C * min pi)
};

inline ParityPrediction expected_parity(std::span<const double> pi,
                                        std::span<const double> mu,
                                        std::uint64_t rounds, double bound) {
    if (pi.empty() || pi.size() != mu.size())
        throw std::invalid_argument("expected_parity: shape mismatch");
    if (!(bound > 0.0)) throw std::invalid_argument("expected_parity: bound must be positive");
    double c = 0.0;
    double pi_min = 1.0;
    for (double p : pi) {
        if (!(p > 0.0) || p > 1.0)
            throw std::invalid_argument("expected_parity: pi must lie in (0, 1]");
        c += 1.0 / p;
        pi_min = std::min(pi_min, p);
    }
    ParityPrediction out;
    const double t = static_cast<double>(rounds);
    out.expected.reserve(pi.size());
    for (std::size_t k = 0; k < pi.size(); ++k) {
        if (mu[k] < 0.0 || mu[k] > bound)
            throw std::invalid_argument("expected_parity: mu must lie in [0, bound]");
        out.expected.push_back(t * mu[k] / (c * pi[k]));
        out.mean += out.expected.back();
    }
    out.mean /= static_cast<double>(pi.size());
    out.deviation.reserve(pi.size());
    for (double e : out.expected) out.deviation.push_back(std::abs(e - out.mean));
    out.uniform_bound = 2.0 * t * bound / (c * pi_min);
    return out;
}

inline ParityPrediction expected_parity(const std::vector<double>& pi,
                                        const std::vector<double>& mu,
                                        std::uint64_t rounds, double bound) {
    return expected_parity(std::span<const double>(pi), std::span<const double>(mu),
                           rounds, bound);
}

inline ParityPrediction expected_parity(std::initializer_list<double> pi,
                                        std::initializer_list<double> mu,
                                        std::uint64_t rounds, double bound) {
    return expected_parity(std::span<const double>(pi.begin(), pi.size()),
                           std::span<const double>(mu.begin(), mu.size()), rounds, bound);
}

}  // namespace fairfed
