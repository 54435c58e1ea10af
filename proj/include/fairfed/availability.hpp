#pragma once

// Client availability processes and the server-side availability estimator.
//
// Four model families share one sampler interface: independent Bernoulli(pi_k),
// a two-state Markov chain with stationary mean pi_k, a piecewise-linear
// drifting mean pi_k(t), and verbatim trace playback. The Markov chain flips
// on->off with probability (1-pi)/s and off->on with probability pi/s, so the
// stationary mean is pi for every valid (pi, s), s = 1 degenerates to the
// iid Bernoulli case, and larger s stretches sojourns (mean on-run s/(1-pi),
// lag-1 autocorrelation 1 - 1/s).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairfed/rng.hpp"

namespace fairfed {

struct DriftPoint {
    std::uint64_t round = 1;  // 1-based
    double value = 0.0;       // pi at that round, in (0, 1]
};

enum class AvailabilityKind { Bernoulli, TwoStateMarkov, Drifting, TraceDriven };

class AvailabilityModel {
public:
    static AvailabilityModel bernoulli(std::vector<double> pi) {
        AvailabilityModel m;
        m.kind_ = AvailabilityKind::Bernoulli;
        m.pi_ = std::move(pi);
        m.validate_pi(m.pi_);
        return m;
    }

    static AvailabilityModel two_state_markov(std::vector<double> pi,
                                              std::vector<double> sojourn) {
        AvailabilityModel m;
        m.kind_ = AvailabilityKind::TwoStateMarkov;
        m.pi_ = std::move(pi);
        m.sojourn_ = std::move(sojourn);
        m.validate_pi(m.pi_);
        if (m.sojourn_.size() != m.pi_.size())
            throw std::invalid_argument("availability: sojourn size must match pi size");
        for (double s : m.sojourn_)
            if (!(s >= 1.0))
                throw std::invalid_argument("availability: sojourn must be >= 1 round");
        return m;
    }

    static AvailabilityModel drifting(std::vector<std::vector<DriftPoint>> schedule) {
        AvailabilityModel m;
        m.kind_ = AvailabilityKind::Drifting;
        m.schedule_ = std::move(schedule);
        if (m.schedule_.empty())
            throw std::invalid_argument("availability: empty drift schedule");
        for (const auto& client : m.schedule_) {
            if (client.empty())
                throw std::invalid_argument("availability: client drift schedule is empty");
            std::uint64_t prev = 0;
            for (const auto& p : client) {
                if (p.round < 1 || p.round <= prev)
                    throw std::invalid_argument(
                        "availability: drift breakpoints must have strictly increasing rounds");
                if (!(p.value > 0.0) || p.value > 1.0)
                    throw std::invalid_argument("availability: drift values must lie in (0, 1]");
                prev = p.round;
            }
        }
        return m;
    }

    static AvailabilityModel trace_driven(std::vector<std::vector<std::uint8_t>> timelines) {
        AvailabilityModel m;
        m.kind_ = AvailabilityKind::TraceDriven;
        m.trace_ = std::move(timelines);
        if (m.trace_.empty())
            throw std::invalid_argument("availability: empty trace");
        const std::size_t len = m.trace_.front().size();
        if (len == 0)
            throw std::invalid_argument("availability: empty trace timeline");
        for (const auto& tl : m.trace_)
            if (tl.size() != len)
                throw std::invalid_argument("availability: trace timelines differ in length");
        return m;
    }

    AvailabilityKind kind() const { return kind_; }

    std::size_t n_clients() const {
        switch (kind_) {
            case AvailabilityKind::Drifting: return schedule_.size();
            case AvailabilityKind::TraceDriven: return trace_.size();
            default: return pi_.size();
        }
    }

    // Instantaneous mean pi_k(t). Constant for Bernoulli/Markov, interpolated
    // for Drifting, and the recorded 0/1 value for traces.
    double mean_at(std::size_t k, std::uint64_t t) const {
        check_client(k);
        if (t == 0) throw std::invalid_argument("availability: rounds are 1-based");
        switch (kind_) {
            case AvailabilityKind::Bernoulli:
            case AvailabilityKind::TwoStateMarkov:
                return pi_[k];
            case AvailabilityKind::Drifting: {
                const auto& pts = schedule_[k];
                if (t <= pts.front().round) return pts.front().value;
                if (t >= pts.back().round) return pts.back().value;
                for (std::size_t i = 1; i < pts.size(); ++i) {
                    if (t <= pts[i].round) {
                        const double span =
                            static_cast<double>(pts[i].round - pts[i - 1].round);
                        const double frac =
                            static_cast<double>(t - pts[i - 1].round) / span;
                        return pts[i - 1].value + frac * (pts[i].value - pts[i - 1].value);
                    }
                }
                return pts.back().value;
            }
            case AvailabilityKind::TraceDriven:
                if (t > trace_[k].size())
                    throw std::out_of_range("availability: round beyond trace length");
                return trace_[k][t - 1] ? 1.0 : 0.0;
        }
        throw std::logic_error("availability: unknown kind");
    }

    // Long-run mean availability; for traces this is the timeline average.
    double long_run_mean(std::size_t k) const {
        check_client(k);
        switch (kind_) {
            case AvailabilityKind::Bernoulli:
            case AvailabilityKind::TwoStateMarkov:
                return pi_[k];
            case AvailabilityKind::Drifting:
                return schedule_[k].back().value;
            case AvailabilityKind::TraceDriven: {
                double s = 0.0;
                for (auto v : trace_[k]) s += v;
                return s / static_cast<double>(trace_[k].size());
            }
        }
        throw std::logic_error("availability: unknown kind");
    }

    std::uint64_t trace_rounds() const {
        return kind_ == AvailabilityKind::TraceDriven ? trace_.front().size() : 0;
    }

    double sojourn(std::size_t k) const {
        check_client(k);
        return sojourn_.empty() ? 1.0 : sojourn_[k];
    }

private:
    void check_client(std::size_t k) const {
        if (k >= n_clients()) throw std::out_of_range("availability: client index");
    }

    static void validate_pi(const std::vector<double>& pi) {
        if (pi.empty()) throw std::invalid_argument("availability: empty pi vector");
        for (double p : pi)
            if (!(p > 0.0) || p > 1.0)
                throw std::invalid_argument("availability: pi must lie in (0, 1]");
    }

    AvailabilityKind kind_ = AvailabilityKind::Bernoulli;
    std::vector<double> pi_;
    std::vector<double> sojourn_;
    std::vector<std::vector<DriftPoint>> schedule_;
    std::vector<std::vector<std::uint8_t>> trace_;
};

// Draws one availability vector per round. Rounds must advance sequentially
// from 1 so that the trajectory is a pure function of (model, seed); the
// Markov family carries its chain state between rounds.
class AvailabilitySampler {
public:
    AvailabilitySampler(AvailabilityModel model, std::uint64_t seed)
        : model_(std::move(model)), rng_(make_rng(seed, 0x41)) {
        if (model_.kind() == AvailabilityKind::TwoStateMarkov) {
            // Start each chain from its stationary law so the mean is pi
            // from round 1 onward.
            markov_state_.resize(model_.n_clients());
            for (std::size_t k = 0; k < markov_state_.size(); ++k)
                markov_state_[k] = bernoulli(rng_, model_.mean_at(k, 1)) ? 1 : 0;
        }
        current_.resize(model_.n_clients(), 0);
    }

    const std::vector<std::uint8_t>& step(std::uint64_t t) {
        if (t != next_round_)
            throw std::invalid_argument("availability: rounds must advance sequentially");
        const std::size_t n = model_.n_clients();
        switch (model_.kind()) {
            case AvailabilityKind::Bernoulli:
            case AvailabilityKind::Drifting:
                for (std::size_t k = 0; k < n; ++k)
                    current_[k] = bernoulli(rng_, model_.mean_at(k, t)) ? 1 : 0;
                break;
            case AvailabilityKind::TwoStateMarkov:
                for (std::size_t k = 0; k < n; ++k) {
                    const double pi = model_.mean_at(k, t);
                    const double s = model_.sojourn(k);
                    const double flip = markov_state_[k] ? (1.0 - pi) / s : pi / s;
                    if (bernoulli(rng_, flip)) markov_state_[k] ^= 1;
                    current_[k] = markov_state_[k];
                }
                break;
            case AvailabilityKind::TraceDriven:
                for (std::size_t k = 0; k < n; ++k)
                    current_[k] = model_.mean_at(k, t) > 0.5 ? 1 : 0;
                break;
        }
        ++next_round_;
        return current_;
    }

    const AvailabilityModel& model() const { return model_; }

private:
    AvailabilityModel model_;
    Rng rng_;
    std::vector<std::uint8_t> markov_state_;
    std::vector<std::uint8_t> current_;
    std::uint64_t next_round_ = 1;
};

enum class EstimatorMode { RunningMean, SlidingWindow };

// Per-client mean estimate over 0/1 observations, floored at epsilon so the
// inverse-estimate selection weights stay bounded. RunningMean averages the
// whole history; SlidingWindow averages the last W observations.
class AvailabilityEstimator {
public:
    AvailabilityEstimator(std::size_t n_clients, EstimatorMode mode,
                          std::uint64_t window = 0, double floor_value = 0.01)
        : mode_(mode), window_(window), floor_(floor_value),
          count_(n_clients, 0), sum_(n_clients, 0),
          estimates_(n_clients, floor_value) {
        if (n_clients == 0)
            throw std::invalid_argument("estimator: need at least one client");
        if (!(floor_value > 0.0) || floor_value >= 1.0)
            throw std::invalid_argument("estimator: floor must lie in (0, 1)");
        if (mode == EstimatorMode::SlidingWindow) {
            if (window == 0)
                throw std::invalid_argument("estimator: sliding window must be >= 1");
            history_.assign(n_clients, {});
        }
    }

    // Record A_k(t) and return the updated floored estimate. t must be the
    // next unseen round for client k.
    double update(std::size_t k, bool observed, std::uint64_t t) {
        if (k >= count_.size()) throw std::out_of_range("estimator: client index");
        if (t != count_[k] + 1)
            throw std::invalid_argument("estimator: observations must arrive in round order");
        ++count_[k];
        sum_[k] += observed ? 1 : 0;
        double mean = 0.0;
        if (mode_ == EstimatorMode::RunningMean) {
            mean = static_cast<double>(sum_[k]) / static_cast<double>(count_[k]);
        } else {
            auto& h = history_[k];
            h.push_back(observed ? 1 : 0);
            if (h.size() > window_) h.erase(h.begin());
            std::uint64_t s = 0;
            for (auto v : h) s += v;
            mean = static_cast<double>(s) / static_cast<double>(h.size());
        }
        estimates_[k] = std::max(mean, floor_);
        return estimates_[k];
    }

    void update_all(const std::vector<std::uint8_t>& observed, std::uint64_t t) {
        if (observed.size() != count_.size())
            throw std::invalid_argument("estimator: observation size mismatch");
        for (std::size_t k = 0; k < observed.size(); ++k) update(k, observed[k] != 0, t);
    }

    double estimate(std::size_t k) const {
        if (k >= estimates_.size()) throw std::out_of_range("estimator: client index");
        return estimates_[k];
    }

    const std::vector<double>& estimates() const { return estimates_; }
    double floor_value() const { return floor_; }
    EstimatorMode mode() const { return mode_; }

private:
    EstimatorMode mode_;
    std::uint64_t window_;
    double floor_;
    std::vector<std::uint64_t> count_;
    std::vector<std::uint64_t> sum_;
    std::vector<double> estimates_;
    std::vector<std::vector<std::uint8_t>> history_;
};

// Estimator-quality diagnostics over the window [start, start+window-1]
// (1-based rounds): the worst tracking error and the largest per-client
// total drift of the true mean.
struct WindowDiagnostics {
    double epsilon_t = 0.0;  // max_{t, k} |pi_hat_k(t) - pi_k(t)|
    double delta_t = 0.0;    // max_k sum_t |pi_k(t+1) - pi_k(t)|
    std::uint64_t start = 1;
    std::uint64_t window = 1;
};

inline WindowDiagnostics window_diagnostics(
    const std::vector<std::vector<double>>& true_pi,
    const std::vector<std::vector<double>>& estimates,
    std::uint64_t start, std::uint64_t window) {
    if (true_pi.empty() || true_pi.size() != estimates.size())
        throw std::invalid_argument("window_diagnostics: trajectory shape mismatch");
    if (start < 1 || window < 1)
        throw std::invalid_argument("window_diagnostics: start and window are 1-based positives");
    const std::size_t len = true_pi.front().size();
    for (std::size_t k = 0; k < true_pi.size(); ++k)
        if (true_pi[k].size() != len || estimates[k].size() != len)
            throw std::invalid_argument("window_diagnostics: ragged trajectories");
    if (start + window - 1 > len)
        throw std::out_of_range("window_diagnostics: window exceeds trajectory");

    WindowDiagnostics d;
    d.start = start;
    d.window = window;
    for (std::size_t k = 0; k < true_pi.size(); ++k) {
        double drift = 0.0;
        for (std::uint64_t t = start; t <= start + window - 1; ++t) {
            const double err = std::abs(estimates[k][t - 1] - true_pi[k][t - 1]);
            if (err > d.epsilon_t) d.epsilon_t = err;
            if (t < start + window - 1)
                drift += std::abs(true_pi[k][t] - true_pi[k][t - 1]);
        }
        if (drift > d.delta_t) d.delta_t = drift;
    }
    return d;
}

}  // namespace fairfed
