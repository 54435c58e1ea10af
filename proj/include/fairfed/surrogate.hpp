#pragma once

// Last-seen signal cache, staleness-decayed reliability weights,
// surrogate-corrected aggregation, and the bias/descent-gap bounds.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace fairfed {

struct SurrogateConfig {
    double eta_0 = 1.0;        // reliability at staleness 1 scale
    double lambda_decay = 0.5; // exponential decay rate per stale round
    double epsilon_sur = 0.0;  // assumed uniform per-client surrogate error bound

    void validate() const {
        if (!(eta_0 > 0.0) || !std::isfinite(eta_0))
            throw std::invalid_argument("surrogate: eta_0 must be > 0");
        if (!(lambda_decay >= 0.0) || !std::isfinite(lambda_decay))
            throw std::invalid_argument("surrogate: lambda_decay must be >= 0");
        if (!(epsilon_sur >= 0.0) || !std::isfinite(epsilon_sur))
            throw std::invalid_argument("surrogate: epsilon_sur must be >= 0");
    }
};

// eta = eta_0 exp(-lambda * delta), strictly decreasing in delta for
// lambda > 0; requires delta >= 1 (a cached signal is at least one round old).
inline double reliability(std::uint64_t delta, const SurrogateConfig& cfg) {
    cfg.validate();
    if (delta < 1) throw std::invalid_argument("reliability: staleness must be >= 1");
    return cfg.eta_0 * std::exp(-cfg.lambda_decay * static_cast<double>(delta));
}

struct WeightedSignal {
    double beta = 0.0;
    std::vector<double> signal;
};

struct SurrogateAggregate {
    std::vector<double> aggregate;
    double contribution = 0.0;  // weight mass supplied by surrogates
};

// G = sum_active beta_k F_k + sum_missing beta_k' F_k'; the contribution is
// the missing-side weight mass.
inline SurrogateAggregate aggregate_with_surrogates(std::span<const WeightedSignal> active,
                                                    std::span<const WeightedSignal> missing) {
    const WeightedSignal* first = nullptr;
    if (!active.empty()) first = &active.front();
    else if (!missing.empty()) first = &missing.front();
    if (first == nullptr)
        throw std::invalid_argument("aggregate_with_surrogates: no signals");
    const std::size_t d = first->signal.size();

    SurrogateAggregate out;
    out.aggregate.assign(d, 0.0);
    auto fold = [&](const WeightedSignal& ws) {
        if (ws.signal.size() != d)
            throw std::invalid_argument("aggregate_with_surrogates: dimension mismatch");
        if (!(ws.beta >= 0.0) || !std::isfinite(ws.beta))
            throw std::invalid_argument("aggregate_with_surrogates: weights must be >= 0");
        for (std::size_t j = 0; j < d; ++j) out.aggregate[j] += ws.beta * ws.signal[j];
    };
    for (const auto& ws : active) fold(ws);
    for (const auto& ws : missing) {
        fold(ws);
        out.contribution += ws.beta;
    }
    return out;
}

inline SurrogateAggregate aggregate_with_surrogates(std::initializer_list<WeightedSignal> active,
                                                    std::initializer_list<WeightedSignal> missing) {
    return aggregate_with_surrogates(std::span<const WeightedSignal>(active.begin(), active.size()),
                                     std::span<const WeightedSignal>(missing.begin(), missing.size()));
}

struct BiasBounds {
    double bias_norm = 0.0;           // Euclidean norm of sum beta (sur - truth)
    double deterministic_bound = 0.0; // eps * sum beta
    double exponential_bound = 0.0;   // eps * eta_0 * sum exp(-lambda delta)
};

inline BiasBounds bias_and_bound(std::span<const std::vector<double>> true_signals,
                                 std::span<const std::vector<double>> surrogate_signals,
                                 std::span<const double> beta,
                                 std::span<const std::uint64_t> staleness,
                                 const SurrogateConfig& cfg) {
    cfg.validate();
    const std::size_t n = true_signals.size();
    if (surrogate_signals.size() != n || beta.size() != n || staleness.size() != n)
        throw std::invalid_argument("bias_and_bound: per-client list sizes differ");
    BiasBounds out;
    if (n == 0) return out;
    const std::size_t d = true_signals.front().size();
    std::vector<double> delta(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (true_signals[i].size() != d || surrogate_signals[i].size() != d)
            throw std::invalid_argument("bias_and_bound: dimension mismatch");
        if (!(beta[i] >= 0.0) || !std::isfinite(beta[i]))
            throw std::invalid_argument("bias_and_bound: weights must be >= 0");
        if (staleness[i] < 1)
            throw std::invalid_argument("bias_and_bound: staleness must be >= 1");
        for (std::size_t j = 0; j < d; ++j)
            delta[j] += beta[i] * (surrogate_signals[i][j] - true_signals[i][j]);
        out.deterministic_bound += cfg.epsilon_sur * beta[i];
        out.exponential_bound += cfg.epsilon_sur * reliability(staleness[i], cfg);
    }
    double sq = 0.0;
    for (double v : delta) sq += v * v;
    out.bias_norm = std::sqrt(sq);
    return out;
}

// gamma |grad| |bias| + L gamma^2 |agg| |bias| + (L gamma^2 / 2) |bias|^2.
inline double descent_gap_bound(double gamma, double smoothness, double grad_norm,
                                double agg_norm, double bias_norm) {
    if (!(gamma > 0.0)) throw std::invalid_argument("descent_gap_bound: gamma must be > 0");
    if (!(smoothness > 0.0)) throw std::invalid_argument("descent_gap_bound: L must be > 0");
    if (!(grad_norm >= 0.0) || !(agg_norm >= 0.0) || !(bias_norm >= 0.0))
        throw std::invalid_argument("descent_gap_bound: norms must be >= 0");
    return gamma * grad_norm * bias_norm +
           smoothness * gamma * gamma * agg_norm * bias_norm +
           0.5 * smoothness * gamma * gamma * bias_norm * bias_norm;
}

struct SurrogateEntry {
    std::size_t client = 0;
    std::vector<double> signal;
    std::uint64_t capture_round = 0;
    double loss = 0.0;
};

// Per-client last-transmitted signal store; an entry is usable only at
// rounds strictly after its capture round.
class SurrogateCache {
  public:
    explicit SurrogateCache(std::size_t n_clients) : entries_(n_clients) {}

    void store(std::size_t client, std::vector<double> signal, std::uint64_t round,
               double loss) {
        check_client(client);
        entries_[client] = SurrogateEntry{client, std::move(signal), round, loss};
    }

    bool has(std::size_t client) const {
        check_client(client);
        return entries_[client].has_value();
    }

    const SurrogateEntry& entry(std::size_t client) const {
        check_client(client);
        if (!entries_[client])
            throw std::out_of_range("surrogate cache: no entry for client");
        return *entries_[client];
    }

    std::uint64_t staleness(std::size_t client, std::uint64_t now) const {
        const auto& e = entry(client);
        if (now <= e.capture_round)
            throw std::invalid_argument("surrogate cache: entry not older than current round");
        return now - e.capture_round;
    }

    std::size_t size() const { return entries_.size(); }

  private:
    void check_client(std::size_t client) const {
        if (client >= entries_.size())
            throw std::out_of_range("surrogate cache: client id out of range");
    }

    std::vector<std::optional<SurrogateEntry>> entries_;
};

}  // namespace fairfed
