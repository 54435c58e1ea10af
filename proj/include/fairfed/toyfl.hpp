#pragma once

// Miniature federated optimization workload on quadratic client objectives:
// local mixing + gradient steps, global aggregation steps, and numerical
// verification of the smoothness/descent bounds along a trajectory.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace fairfed {

struct QuadraticClient {
    std::vector<double> w_star;  // local optimum
    double curvature = 1.0;      // c_k; f_k(w) = (c_k/2) |w - w_star|^2
    std::vector<double> w;       // local model

    void validate() const {
        if (!(curvature > 0.0) || !std::isfinite(curvature))
            throw std::invalid_argument("toyfl: curvature must be > 0");
        if (w_star.empty() || w.size() != w_star.size())
            throw std::invalid_argument("toyfl: model/optimum dimensions disagree");
    }
};

inline double client_loss(const QuadraticClient& c, std::span<const double> at) {
    if (at.size() != c.w_star.size())
        throw std::invalid_argument("client_loss: dimension mismatch");
    double sq = 0.0;
    for (std::size_t j = 0; j < at.size(); ++j) {
        const double d = at[j] - c.w_star[j];
        sq += d * d;
    }
    return 0.5 * c.curvature * sq;
}

inline std::vector<double> client_gradient(const QuadraticClient& c,
                                           std::span<const double> at) {
    if (at.size() != c.w_star.size())
        throw std::invalid_argument("client_gradient: dimension mismatch");
    std::vector<double> g(at.size());
    for (std::size_t j = 0; j < at.size(); ++j)
        g[j] = c.curvature * (at[j] - c.w_star[j]);
    return g;
}

struct TrainerConfig {
    double gamma = 0.1;       // local/global step size
    std::uint64_t epochs = 1; // local full-gradient steps per round
    double alpha = 1.0;       // mixing factor toward the global model
    double angle_c = 1.0;     // descent-angle constant in (0, 1]

    void validate() const {
        if (!(gamma > 0.0) || !std::isfinite(gamma))
            throw std::invalid_argument("trainer: gamma must be > 0");
        if (epochs < 1) throw std::invalid_argument("trainer: epochs must be >= 1");
        if (!(alpha >= 0.0) || !(alpha <= 1.0))
            throw std::invalid_argument("trainer: alpha must be in [0, 1]");
        if (!(angle_c > 0.0) || !(angle_c <= 1.0))
            throw std::invalid_argument("trainer: angle_c must be in (0, 1]");
    }
};

struct LocalUpdate {
    double delta_f = 0.0;        // loss reduction, clipped to [0, clip_bound]
    std::vector<double> signal;  // post-mix gradient
    double loss_after = 0.0;
    bool unstable = false;       // gamma * curvature >= 2
};

// Mix w_k toward the global model, take E gradient steps, and report the
// clipped loss reduction measured from the post-mix point.
inline LocalUpdate local_update(QuadraticClient& client, std::span<const double> w_global,
                                const TrainerConfig& cfg, double clip_bound) {
    client.validate();
    cfg.validate();
    if (!(clip_bound > 0.0))
        throw std::invalid_argument("local_update: clip bound must be > 0");
    if (w_global.size() != client.w.size())
        throw std::invalid_argument("local_update: dimension mismatch");
    for (std::size_t j = 0; j < client.w.size(); ++j)
        client.w[j] = (1.0 - cfg.alpha) * client.w[j] + cfg.alpha * w_global[j];

    LocalUpdate out;
    out.signal = client_gradient(client, client.w);
    out.unstable = cfg.gamma * client.curvature >= 2.0;
    const double before = client_loss(client, client.w);
    for (std::uint64_t e = 0; e < cfg.epochs; ++e) {
        auto g = client_gradient(client, client.w);
        for (std::size_t j = 0; j < client.w.size(); ++j)
            client.w[j] -= cfg.gamma * g[j];
    }
    out.loss_after = client_loss(client, client.w);
    out.delta_f = std::min(std::max(before - out.loss_after, 0.0), clip_bound);
    return out;
}

inline std::vector<double> global_step(std::span<const double> w,
                                       std::span<const double> aggregate, double gamma) {
    if (w.size() != aggregate.size())
        throw std::invalid_argument("global_step: dimension mismatch");
    std::vector<double> next(w.begin(), w.end());
    for (std::size_t j = 0; j < next.size(); ++j) next[j] -= gamma * aggregate[j];
    return next;
}

inline double weighted_objective(std::span<const QuadraticClient> clients,
                                 std::span<const double> beta, std::span<const double> at) {
    if (clients.size() != beta.size())
        throw std::invalid_argument("weighted_objective: weight size mismatch");
    double f = 0.0;
    for (std::size_t k = 0; k < clients.size(); ++k)
        f += beta[k] * client_loss(clients[k], at);
    return f;
}

inline std::vector<double> weighted_gradient(std::span<const QuadraticClient> clients,
                                             std::span<const double> beta,
                                             std::span<const double> at) {
    if (clients.size() != beta.size())
        throw std::invalid_argument("weighted_gradient: weight size mismatch");
    std::vector<double> g(at.size(), 0.0);
    for (std::size_t k = 0; k < clients.size(); ++k) {
        auto gk = client_gradient(clients[k], at);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += beta[k] * gk[j];
    }
    return g;
}

// Smoothness constant of the weighted quadratic sum: sum beta_k c_k.
inline double smoothness_constant(std::span<const QuadraticClient> clients,
                                  std::span<const double> beta) {
    if (clients.size() != beta.size())
        throw std::invalid_argument("smoothness_constant: weight size mismatch");
    double L = 0.0;
    for (std::size_t k = 0; k < clients.size(); ++k)
        L += beta[k] * clients[k].curvature;
    return L;
}

struct ToyTrajectoryPoint {
    std::vector<double> w;         // global model at the start of the round
    std::vector<double> true_agg;  // aggregate with true current signals
    std::vector<double> sur_agg;   // aggregate actually applied
    std::vector<double> grad;      // gradient of the reference objective at w
};

struct DescentReport {
    std::size_t rounds_checked = 0;  // rounds passing the angle condition
    std::size_t rounds_flagged = 0;  // rounds excluded from the descent check
    std::size_t descent_violations = 0;
    std::size_t gap_violations = 0;
    double min_descent_slack = std::numeric_limits<double>::infinity();
    double min_gap_slack = std::numeric_limits<double>::infinity();
};

// Checks, per recorded round, the smoothness descent inequality (gated on
// the measured angle condition) and the surrogate-bias gap inequality
// (ungated). Violations are counted, never thrown.
inline DescentReport verify_descent_bounds(std::span<const QuadraticClient> clients,
                                           std::span<const double> beta,
                                           std::span<const ToyTrajectoryPoint> trajectory,
                                           const TrainerConfig& cfg, double smoothness) {
    cfg.validate();
    if (!(smoothness > 0.0))
        throw std::invalid_argument("verify_descent_bounds: smoothness must be > 0");
    DescentReport report;
    const double g = cfg.gamma;
    for (const auto& pt : trajectory) {
        const std::size_t d = pt.w.size();
        if (pt.true_agg.size() != d || pt.sur_agg.size() != d || pt.grad.size() != d)
            throw std::invalid_argument("verify_descent_bounds: ragged trajectory point");
        double dot = 0.0, grad_sq = 0.0, sur_sq = 0.0, true_sq = 0.0, bias_sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dot += pt.grad[j] * pt.sur_agg[j];
            grad_sq += pt.grad[j] * pt.grad[j];
            sur_sq += pt.sur_agg[j] * pt.sur_agg[j];
            true_sq += pt.true_agg[j] * pt.true_agg[j];
            const double b = pt.sur_agg[j] - pt.true_agg[j];
            bias_sq += b * b;
        }
        const double grad_norm = std::sqrt(grad_sq);
        const double sur_norm = std::sqrt(sur_sq);
        const double true_norm = std::sqrt(true_sq);
        const double bias_norm = std::sqrt(bias_sq);
        const double f_now = weighted_objective(clients, beta, pt.w);

        if (dot < cfg.angle_c * grad_norm * sur_norm) {
            report.rounds_flagged++;
        } else {
            const double f_next =
                weighted_objective(clients, beta, global_step(pt.w, pt.sur_agg, g));
            const double rhs = f_now - g * cfg.angle_c * grad_norm * sur_norm +
                               0.5 * smoothness * g * g * sur_sq;
            const double slack = rhs - f_next;
            report.rounds_checked++;
            report.min_descent_slack = std::min(report.min_descent_slack, slack);
            if (f_next > rhs + 1e-9 * (1.0 + std::abs(rhs))) report.descent_violations++;
        }

        const double f_sur = weighted_objective(clients, beta, global_step(pt.w, pt.sur_agg, g));
        const double f_true = weighted_objective(clients, beta, global_step(pt.w, pt.true_agg, g));
        const double gap = std::abs(f_sur - f_true);
        const double bound = bias_norm > 0.0
                                 ? descent_gap_bound(g, smoothness, grad_norm, true_norm, bias_norm)
                                 : 0.0;
        const double gap_slack = bound - gap;
        report.min_gap_slack = std::min(report.min_gap_slack, gap_slack);
        if (gap > bound + 1e-9 * (1.0 + bound)) report.gap_violations++;
    }
    return report;
}

}  // namespace fairfed
