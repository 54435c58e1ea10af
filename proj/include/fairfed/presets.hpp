#pragma once
// Canned experiment scenarios with embedded pass/fail checks. Each preset
// runs a bespoke verification protocol and then a companion experiment that
// writes the standard output files, so every preset is reproducible from
// (name, seed) alone. Protocol functions are exposed for reuse by the
// verification suite.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fairfed/engine.hpp"

namespace fairfed::presets {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct PresetOutcome {
    std::string preset;
    std::vector<CheckResult> checks;
    std::filesystem::path out_dir;

    bool all_pass() const {
        return std::all_of(checks.begin(), checks.end(),
                           [](const CheckResult& c) { return c.pass; });
    }
};

inline const std::array<const char*, 8>& preset_names() {
    static const std::array<const char*, 8> names{
        "lemma1_convergence", "lemma2_parity",    "theorem2_limits",
        "appendix_a_identity", "appendix_c_drift", "surrogate_bounds",
        "table2_comparison",   "figs34_trend"};
    return names;
}

namespace detail {

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k)
        v[k] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
    return v;
}

// One-sided exact binomial tail: P[X >= wins] under fair coin, ties dropped.
inline double sign_test_p(int wins, int trials) {
    if (trials <= 0) return 1.0;
    double p = 0.0;
    for (int k = wins; k <= trials; ++k) {
        double logc = std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) -
                      std::lgamma(trials - k + 1.0);
        p += std::exp(logc - trials * std::log(2.0));
    }
    return std::min(p, 1.0);
}

// Spearman rank correlation with average ranks for ties.
inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n != y.size() || n < 2) throw std::invalid_argument("spearman_rho: need paired data");
    auto ranks = [](const std::vector<double>& v) {
        const std::size_t m = v.size();
        std::vector<std::size_t> idx(m);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(m);
        std::size_t i = 0;
        while (i < m) {
            std::size_t j = i;
            while (j + 1 < m && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t u = i; u <= j; ++u) r[idx[u]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) { mx += rx[i]; my += ry[i]; }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Selection parity: inverse-availability sampling equalizes long-run selection
// frequencies across heterogeneous availabilities, and narrows their spread
// against a paired uniform-random arm sharing the same availability draws.

struct ParityReport {
    int seeds = 0;
    int within = 0;    // seeds with max_k |S_k/T - m/N| <= dev_tol
    int narrower = 0;  // seeds where the fair frequency spread beats random
    double worst_dev = 0.0;
};

inline ParityReport selection_parity_trial(std::uint64_t base_seed, int n_seeds, std::size_t n,
                                           std::size_t m, std::uint64_t rounds, double dev_tol) {
    ParityReport rep;
    rep.seeds = n_seeds;
    const double share = static_cast<double>(m) / static_cast<double>(n);
    for (int s = 0; s < n_seeds; ++s) {
        const std::uint64_t master = base_seed + static_cast<std::uint64_t>(s);
        auto prng = make_rng(master, 0x70);
        std::vector<double> pi(n);
        for (auto& p : pi) p = uniform_in(prng, 0.1, 1.0);
        AvailabilitySampler sampler(AvailabilityModel::bernoulli(pi), mix_seed(master, 0x41));
        AvailabilityEstimator est(n, EstimatorMode::RunningMean);
        auto fair_rng = make_rng(master, 0x51);
        auto rand_rng = make_rng(master, 0x52);
        SelectionPolicy fair;
        fair.kind = SelectionKind::InverseAvailability;
        fair.m = m;
        const std::vector<double> ones(n, 1.0);
        const std::vector<std::uint64_t> no_missed(n, 0);
        std::vector<std::uint64_t> s_fair(n, 0), s_rand(n, 0);
        for (std::uint64_t t = 1; t <= rounds; ++t) {
            const auto& a = sampler.step(t);
            est.update_all(a, t);
            const auto w = weights(fair, est.estimates(), no_missed);
            const auto cf = multinomial_counts(a, w, m, fair_rng);
            const auto cr = multinomial_counts(a, ones, m, rand_rng);
            for (std::size_t k = 0; k < n; ++k) {
                s_fair[k] += cf[k];
                s_rand[k] += cr[k];
            }
        }
        double maxdev = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            maxdev = std::max(maxdev,
                              std::abs(static_cast<double>(s_fair[k]) / static_cast<double>(rounds) -
                                       share));
        auto spread = [&](const std::vector<std::uint64_t>& c) {
            double mean = 0.0;
            for (auto v : c) mean += static_cast<double>(v);
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (auto v : c) {
                const double d = static_cast<double>(v) - mean;
                var += d * d;
            }
            return std::sqrt(var / static_cast<double>(n));
        };
        if (maxdev <= dev_tol) rep.within++;
        if (spread(s_fair) < spread(s_rand)) rep.narrower++;
        rep.worst_dev = std::max(rep.worst_dev, maxdev);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Reactive-weight limits: normalized reactive weights driven by realized
// missed counts approach the closed-form limit distribution.

struct LimitReport {
    int seeds = 0;
    int within = 0;
    double worst_rel = 0.0;
};

inline LimitReport reactive_limit_trial(const std::vector<double>& pi, double lambda, double tol,
                                        int n_seeds, std::uint64_t base_seed) {
    const std::uint64_t horizon = 10000;
    LimitReport rep;
    rep.seeds = n_seeds;
    SelectionPolicy pol;
    pol.kind = SelectionKind::ReactiveReweight;
    pol.m = 1;
    pol.lambda = lambda;
    pol.epsilon = 0.01;
    const auto lim = asymptotic_weight_limit(pi, {}, lambda, 0.01);
    for (int s = 0; s < n_seeds; ++s) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
        AvailabilitySampler sampler(AvailabilityModel::bernoulli(pi), mix_seed(seed, 0x41));
        std::vector<std::uint64_t> missed(pi.size(), 0);
        for (std::uint64_t t = 1; t <= horizon; ++t) {
            const auto& a = sampler.step(t);
            for (std::size_t k = 0; k < pi.size(); ++k)
                if (!a[k]) missed[k]++;
        }
        const auto w = normalize(weights(pol, pi, missed));
        double maxrel = 0.0;
        for (std::size_t k = 0; k < pi.size(); ++k)
            maxrel = std::max(maxrel, std::abs(w[k] - lim[k]) / lim[k]);
        rep.worst_rel = std::max(rep.worst_rel, maxrel);
        if (maxrel <= tol) rep.within++;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Idealized participation identity: selecting available clients with
// probability proportional to 1/pi makes the Monte Carlo mean of normalized
// utility match T mu_k / (C pi_k), within the uniform deviation bound.

struct IdentityReport {
    int clients = 0;
    double worst_mean_rel = 0.0;       // worst relative gap of the MC mean
    std::size_t bound_violations = 0;  // per-client deviations beyond the bound
};

inline IdentityReport idealized_identity_trial(const std::vector<double>& pi, double mu,
                                               std::uint64_t rounds, int replicates,
                                               std::uint64_t base_seed) {
    const std::size_t n = pi.size();
    double c = 0.0;
    for (double p : pi) c += 1.0 / p;
    IdentityReport rep;
    rep.clients = static_cast<int>(n);
    std::vector<double> mc_mean(n, 0.0);
    auto meta = make_rng(base_seed);
    for (int r = 0; r < replicates; ++r) {
        const std::uint64_t seed = meta();
        auto rng = make_rng(seed);
        std::vector<ClientState> states(n);
        for (std::size_t k = 0; k < n; ++k) states[k].id = k;
        for (std::uint64_t t = 1; t <= rounds; ++t) {
            for (std::size_t k = 0; k < n; ++k) {
                const bool avail = bernoulli(rng, pi[k]);
                const bool sel = avail && bernoulli(rng, (1.0 / pi[k]) / c);
                accrue(states[k], avail, sel, mu, 1.0, AccrualMode::SelectedAndAvailable);
            }
        }
        const auto norm = normalized_utilities(states, pi, NormalizationSource::TruePi);
        for (std::size_t k = 0; k < n; ++k) mc_mean[k] += norm.values[k];
    }
    const auto par = expected_parity(pi, std::vector<double>(n, mu), rounds, 1.0);
    double mc_bar = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mc_mean[k] /= static_cast<double>(replicates);
        mc_bar += mc_mean[k];
        rep.worst_mean_rel = std::max(
            rep.worst_mean_rel, std::abs(mc_mean[k] - par.expected[k]) / par.expected[k]);
    }
    mc_bar /= static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k)
        if (std::abs(mc_mean[k] - mc_bar) > par.uniform_bound) rep.bound_violations++;
    return rep;
}

// ---------------------------------------------------------------------------
// Surrogate bias and descent bounds: randomized aggregation trials never
// exceed the deterministic bias bound eps * sum(beta), quadratic trajectories
// with stale cached gradients satisfy both descent inequalities, and the
// frozen exponential-bound example evaluates to its closed form.

struct SurrogateTrialReport {
    int trials = 0;
    int bias_violations = 0;
    std::size_t traj_rounds = 0;
    std::size_t rounds_checked = 0;
    std::size_t descent_violations = 0;
    std::size_t gap_violations = 0;
    double exponential_example = 0.0;
};

namespace detail {

// Surrogate-corrected quadratic trajectory: active clients contribute fresh
// gradients, unavailable clients with a cache contribute the stale gradient
// scaled by its reliability.
inline DescentReport stale_trajectory_report(std::uint64_t seed, std::uint64_t rounds,
                                             std::size_t* checked_out) {
    auto rng = make_rng(seed, 0x99);
    const std::size_t n = 2 + rng() % 11, d = 1 + rng() % 8;
    std::vector<QuadraticClient> clients;
    std::vector<double> pi(n), beta(n, 1.0 / static_cast<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<double> w_star(d);
        for (auto& v : w_star) v = uniform_in(rng, -2.0, 2.0);
        clients.push_back(
            QuadraticClient{w_star, uniform_in(rng, 0.3, 3.0), std::vector<double>(d, 0.0)});
        pi[k] = uniform_in(rng, 0.3, 0.9);
    }
    const double smooth = smoothness_constant(clients, beta);
    TrainerConfig cfg;
    cfg.gamma = uniform_in(rng, 0.1, 0.9) / smooth;
    cfg.epochs = 1;
    cfg.alpha = 1.0;
    cfg.angle_c = 0.25;
    SurrogateConfig scfg{uniform_in(rng, 0.5, 1.0), uniform_in(rng, 0.1, 1.0), 0.0};

    AvailabilitySampler sampler(AvailabilityModel::bernoulli(pi), mix_seed(seed, 0x41));
    SurrogateCache cache(n);
    std::vector<double> w(d);
    for (auto& v : w) v = uniform_in(rng, -3.0, 3.0);

    std::vector<ToyTrajectoryPoint> traj;
    for (std::uint64_t t = 1; t <= rounds; ++t) {
        const auto& a = sampler.step(t);
        ToyTrajectoryPoint pt;
        pt.w = w;
        pt.grad = weighted_gradient(clients, beta, w);
        pt.true_agg.assign(d, 0.0);
        pt.sur_agg.assign(d, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            const auto g_now = client_gradient(clients[k], w);
            if (a[k]) {
                for (std::size_t j = 0; j < d; ++j) {
                    pt.true_agg[j] += beta[k] * g_now[j];
                    pt.sur_agg[j] += beta[k] * g_now[j];
                }
                cache.store(k, g_now, t, client_loss(clients[k], w));
            } else if (cache.has(k)) {
                const double eta = reliability(cache.staleness(k, t), scfg);
                for (std::size_t j = 0; j < d; ++j) {
                    pt.true_agg[j] += beta[k] * eta * g_now[j];
                    pt.sur_agg[j] += beta[k] * eta * cache.entry(k).signal[j];
                }
            }
        }
        w = global_step(w, pt.sur_agg, cfg.gamma);
        traj.push_back(std::move(pt));
    }
    auto report = verify_descent_bounds(clients, beta, traj, cfg, smooth);
    if (checked_out) *checked_out = report.rounds_checked;
    return report;
}

}  // namespace detail

inline SurrogateTrialReport surrogate_bound_trial(std::uint64_t base_seed) {
    SurrogateTrialReport rep;

    auto rng = make_rng(base_seed, 0x88);
    rep.trials = 1000;
    for (int trial = 0; trial < rep.trials; ++trial) {
        const std::size_t d = 1 + rng() % 16;
        const std::size_t n_missing = 1 + rng() % 8;
        const double eps = uniform_in(rng, 0.0, 0.5);
        SurrogateConfig cfg{uniform_in(rng, 0.1, 2.0), uniform_in(rng, 0.0, 1.0), eps};
        std::vector<std::vector<double>> truth(n_missing), sur(n_missing);
        std::vector<double> beta(n_missing);
        std::vector<std::uint64_t> staleness(n_missing);
        double beta_sum = 0.0;
        for (std::size_t i = 0; i < n_missing; ++i) {
            truth[i].resize(d);
            sur[i].resize(d);
            std::vector<double> err(d);
            double norm = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                truth[i][j] = uniform_in(rng, -3.0, 3.0);
                err[j] = uniform_in(rng, -1.0, 1.0);
                norm += err[j] * err[j];
            }
            norm = std::sqrt(norm);
            const double target = uniform_in(rng, 0.0, eps);
            const double scale = norm > 0.0 ? target / norm : 0.0;
            for (std::size_t j = 0; j < d; ++j) sur[i][j] = truth[i][j] + scale * err[j];
            beta[i] = uniform_in(rng, 0.0, 2.0);
            beta_sum += beta[i];
            staleness[i] = 1 + rng() % 20;
        }
        const auto r = bias_and_bound(truth, sur, beta, staleness, cfg);
        if (r.bias_norm > r.deterministic_bound + 1e-12 ||
            r.bias_norm > eps * beta_sum + 1e-12)
            rep.bias_violations++;
    }

    for (std::uint64_t s = 1; s <= 5; ++s) {
        std::size_t checked = 0;
        const auto traj = detail::stale_trajectory_report(base_seed + 4500 + s, 200, &checked);
        rep.traj_rounds += 200;
        rep.rounds_checked += checked;
        rep.descent_violations += traj.descent_violations;
        rep.gap_violations += traj.gap_violations;
    }

    // eps=0.1, eta0=1, lambda=0.5, staleness {1,2}: 0.1 (e^{-1/2} + e^{-1}).
    SurrogateConfig cfg{1.0, 0.5, 0.1};
    std::vector<std::vector<double>> truth{{0.0}, {0.0}};
    std::vector<std::vector<double>> sur{{0.01}, {-0.02}};
    rep.exponential_example =
        bias_and_bound(truth, sur, std::vector<double>{1.0, 1.0},
                       std::vector<std::uint64_t>{1, 2}, cfg)
            .exponential_bound;
    return rep;
}

// ---------------------------------------------------------------------------
// Drift alignment: under drifting availability, the window-averaged gap
// between estimate-driven selection probabilities and their true-availability
// ideal grows with the measured tracking error plus within-window drift.
// Cells pair three drift magnitudes with two estimator windows; the measured
// participation error must rank the cells exactly as (epsilon_T + delta_T).

struct DriftCell {
    double drift = 0.0;
    std::size_t window = 0;
    double participation_error = 0.0;
    double epsilon_t = 0.0;
    double delta_t = 0.0;
};

struct DriftReport {
    std::vector<DriftCell> cells;
    double spearman = 0.0;
};

namespace detail {

inline DriftCell drift_cell_mean(double drift, std::size_t window, std::uint64_t rounds,
                                 std::size_t n, int seeds, std::uint64_t base_seed) {
    DriftCell cell;
    cell.drift = drift;
    cell.window = window;
    const auto start_pi = linspace(0.91, 0.95, n);
    std::vector<std::vector<DriftPoint>> schedule(n);
    for (std::size_t k = 0; k < n; ++k)
        schedule[k] = {{1, start_pi[k]}, {rounds, start_pi[k] - drift}};
    const auto model = AvailabilityModel::drifting(schedule);
    const std::uint64_t w_start = rounds - static_cast<std::uint64_t>(window) + 1;

    for (int s = 0; s < seeds; ++s) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
        AvailabilitySampler sampler(model, mix_seed(seed, 0x41));
        AvailabilityEstimator est(n, EstimatorMode::SlidingWindow, window);
        std::vector<std::vector<double>> true_pi(n, std::vector<double>(rounds));
        std::vector<std::vector<double>> est_pi(n, std::vector<double>(rounds));
        std::vector<double> gap_sum(n, 0.0);
        for (std::uint64_t t = 1; t <= rounds; ++t) {
            const auto& a = sampler.step(t);
            est.update_all(a, t);
            const auto& hat = est.estimates();
            double inv_hat = 0.0, inv_true = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                true_pi[k][t - 1] = model.mean_at(k, t);
                est_pi[k][t - 1] = hat[k];
                inv_hat += 1.0 / hat[k];
                inv_true += 1.0 / true_pi[k][t - 1];
            }
            if (t >= w_start)
                for (std::size_t k = 0; k < n; ++k)
                    gap_sum[k] += std::abs((1.0 / hat[k]) / inv_hat -
                                           (1.0 / true_pi[k][t - 1]) / inv_true);
        }
        double worst = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            worst = std::max(worst, gap_sum[k] / static_cast<double>(window));
        const auto diag = window_diagnostics(true_pi, est_pi, w_start, window);
        cell.participation_error += worst;
        cell.epsilon_t += diag.epsilon_t;
        cell.delta_t += diag.delta_t;
    }
    cell.participation_error /= seeds;
    cell.epsilon_t /= seeds;
    cell.delta_t /= seeds;
    return cell;
}

}  // namespace detail

inline DriftReport drift_alignment_trial(std::uint64_t base_seed, int seeds_per_cell) {
    const std::uint64_t rounds = 3000;
    const std::size_t n = 10;
    const std::array<double, 3> drifts{0.1, 0.2, 0.3};
    const std::array<std::size_t, 2> windows{240, 60};
    DriftReport rep;
    std::uint64_t cell_base = base_seed;
    for (std::size_t w = 0; w < windows.size(); ++w)
        for (std::size_t d = 0; d < drifts.size(); ++d) {
            rep.cells.push_back(detail::drift_cell_mean(drifts[d], windows[w], rounds, n,
                                                        seeds_per_cell, cell_base));
            cell_base += 1000;
        }
    std::vector<double> err, eps_plus_delta;
    for (const auto& c : rep.cells) {
        err.push_back(c.participation_error);
        eps_plus_delta.push_back(c.epsilon_t + c.delta_t);
    }
    rep.spearman = detail::spearman_rho(err, eps_plus_delta);
    return rep;
}

// ---------------------------------------------------------------------------
// Paired fairness comparison: across paired seeds, the fair arm beats the
// vanilla arm on raw-utility dispersion and selection-concentration metrics,
// and enabling utility-crediting surrogates narrows raw-utility dispersion
// further without touching selection.

struct PairedComparisonReport {
    int seeds = 0;
    int cv_wins = 0;
    int jain_wins = 0;
    int gap_wins = 0;
    int gini_wins = 0;
    int surrogate_cv_wins = 0;
    int selection_equal = 0;
};

namespace detail {

inline ExperimentConfig comparison_config(std::uint64_t seed, bool with_surrogates) {
    ExperimentConfig cfg;
    cfg.n = 100;
    cfg.m = 10;
    cfg.rounds = 50;
    cfg.seed = seed;
    cfg.availability.kind = AvailabilityKind::Bernoulli;
    cfg.availability.pi = ParamGen::uniform(0.1, 1.0);
    cfg.selection.kind = SelectionKind::InverseAvailability;
    cfg.workload.kind = WorkloadKind::UniformBounded;
    cfg.workload.mu = ParamGen::constant(0.5);
    cfg.workload.sigma = 0.2;
    cfg.workload.bound = 1.0;
    cfg.surrogate.enabled = with_surrogates;
    cfg.surrogate.eta_0 = 1.0;
    cfg.surrogate.lambda_decay = 1.0;
    cfg.surrogate.utility_credit = true;
    return cfg;
}

}  // namespace detail

inline PairedComparisonReport table_comparison_trial(std::uint64_t base_seed, int n_seeds) {
    PairedComparisonReport rep;
    rep.seeds = n_seeds;
    for (int s = 0; s < n_seeds; ++s) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
        const auto off = simulate(detail::comparison_config(seed, false), seed);
        const auto on = simulate(detail::comparison_config(seed, true), seed);
        const auto fair = off.final_row("fair");
        const auto vanilla = off.final_row("vanilla");
        if (fair.utility_cv < vanilla.utility_cv) rep.cv_wins++;
        if (fair.jain_utility > vanilla.jain_utility) rep.jain_wins++;
        if (fair.selgap_paper < vanilla.selgap_paper) rep.gap_wins++;
        if (fair.gini_coefficient < vanilla.gini_coefficient) rep.gini_wins++;
        const auto fair_on = on.final_row("fair");
        if (fair_on.utility_cv < fair.utility_cv) rep.surrogate_cv_wins++;
        if (fair_on.selgap_paper == fair.selgap_paper &&
            fair_on.selgap_share == fair.selgap_share &&
            fair_on.gini_coefficient == fair.gini_coefficient)
            rep.selection_equal++;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Dispersion trend: normalized-utility variance of the vanilla arm keeps
// growing while the fair arm stays below it, per seed and on the
// seed-averaged trajectory.

struct TrendReport {
    int seeds = 0;
    int fair_wins = 0;          // seeds with final fair variance below vanilla
    double sign_p = 1.0;
    double mean_fair = 0.0;     // seed-mean final fairness variance
    double mean_vanilla = 0.0;
    bool vanilla_nondecreasing = false;  // late-window mean >= early-window mean
    bool fair_growth_smaller = false;    // fair windowed growth < vanilla growth
};

namespace detail {

inline ExperimentConfig trend_config(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.n = 50;
    cfg.m = 10;
    cfg.rounds = 1000;
    cfg.seed = seed;
    cfg.availability.kind = AvailabilityKind::Bernoulli;
    cfg.availability.pi = ParamGen::split(0.2, 0.9);
    cfg.selection.kind = SelectionKind::InverseAvailability;
    cfg.workload.kind = WorkloadKind::UniformBounded;
    cfg.workload.mu = ParamGen::constant(0.5);
    cfg.workload.sigma = 0.3;
    cfg.workload.bound = 1.0;
    return cfg;
}

}  // namespace detail

inline TrendReport dispersion_trend_trial(std::uint64_t base_seed, int n_seeds) {
    TrendReport rep;
    rep.seeds = n_seeds;
    const std::uint64_t rounds = 1000, window = 100;
    std::vector<double> fair_traj(rounds, 0.0), van_traj(rounds, 0.0);
    for (int s = 0; s < n_seeds; ++s) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
        const auto res = simulate(detail::trend_config(seed), seed);
        for (const auto& row : res.log) {
            auto& traj = row.arm == "fair" ? fair_traj : van_traj;
            traj[row.round - 1] += row.fairness_variance;
        }
        const double f = res.final_row("fair").fairness_variance;
        const double v = res.final_row("vanilla").fairness_variance;
        rep.mean_fair += f;
        rep.mean_vanilla += v;
        if (f < v) rep.fair_wins++;
    }
    rep.mean_fair /= n_seeds;
    rep.mean_vanilla /= n_seeds;
    rep.sign_p = detail::sign_test_p(rep.fair_wins, n_seeds);
    auto window_mean = [&](const std::vector<double>& traj, std::uint64_t lo, std::uint64_t hi) {
        double sum = 0.0;
        for (std::uint64_t t = lo; t <= hi; ++t) sum += traj[t - 1] / n_seeds;
        return sum / static_cast<double>(hi - lo + 1);
    };
    const double van_early = window_mean(van_traj, 1, window);
    const double van_late = window_mean(van_traj, rounds - window + 1, rounds);
    const double fair_early = window_mean(fair_traj, 1, window);
    const double fair_late = window_mean(fair_traj, rounds - window + 1, rounds);
    rep.vanilla_nondecreasing = van_late >= van_early;
    rep.fair_growth_smaller = (fair_late - fair_early) < (van_late - van_early);
    return rep;
}

// ---------------------------------------------------------------------------
// Normalized-utility convergence: when utility accrues on every available
// round, availability-normalized utility per round approaches the mean
// increment, and the dispersion of the normalized vector relative to its
// scale vanishes as the horizon grows.

struct ConvergenceReport {
    int seeds = 0;
    int within = 0;                    // seeds with final max_k |ratio - 1| <= tol
    double worst_rel = 0.0;
    std::vector<std::uint64_t> checkpoints;
    std::vector<double> scaled_variance;  // seed-mean sigma^2(T)/T^2 per checkpoint
};

inline ConvergenceReport parity_convergence_trial(std::uint64_t base_seed, int n_seeds,
                                                  double tol) {
    const std::size_t n = 20;
    const double mu = 0.5, sigma = 0.2, bound = 1.0;
    const auto pi = detail::linspace(0.1, 0.9, n);
    ConvergenceReport rep;
    rep.seeds = n_seeds;
    rep.checkpoints = {250, 1000, 4000, 10000};
    rep.scaled_variance.assign(rep.checkpoints.size(), 0.0);
    UtilityModel model{IncrementKind::UniformBounded, std::vector<double>(n, mu), sigma, bound};
    for (int s = 0; s < n_seeds; ++s) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(s);
        AvailabilitySampler sampler(AvailabilityModel::bernoulli(pi), mix_seed(seed, 0x41));
        auto util_rng = make_rng(seed, 0x61);
        std::vector<ClientState> states(n);
        for (std::size_t k = 0; k < n; ++k) states[k].id = k;
        std::size_t next_cp = 0;
        for (std::uint64_t t = 1; t <= rep.checkpoints.back(); ++t) {
            const auto& a = sampler.step(t);
            for (std::size_t k = 0; k < n; ++k) {
                const double delta = sample_increment(model, k, util_rng);
                accrue(states[k], a[k] != 0, false, delta, bound,
                       AccrualMode::AvailabilityOnly);
            }
            if (next_cp < rep.checkpoints.size() && t == rep.checkpoints[next_cp]) {
                const auto norm = normalized_utilities(states, pi, NormalizationSource::TruePi);
                const double scale = static_cast<double>(t) * static_cast<double>(t);
                rep.scaled_variance[next_cp] +=
                    population_variance(norm.values) / scale / n_seeds;
                next_cp++;
            }
        }
        const auto norm = normalized_utilities(states, pi, NormalizationSource::TruePi);
        double maxrel = 0.0;
        const double horizon = static_cast<double>(rep.checkpoints.back());
        for (std::size_t k = 0; k < n; ++k)
            maxrel = std::max(maxrel, std::abs(norm.values[k] / (horizon * mu) - 1.0));
        rep.worst_rel = std::max(rep.worst_rel, maxrel);
        if (maxrel <= tol) rep.within++;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Preset assembly: protocol checks plus a companion experiment writing the
// standard outputs.

namespace detail {

inline CheckResult check(std::string name, bool pass, std::string detail_text) {
    return CheckResult{std::move(name), pass, std::move(detail_text)};
}

inline std::string fmt_count(int got, int total) {
    return std::to_string(got) + "/" + std::to_string(total);
}

inline ExperimentConfig companion_config(const std::string& name, std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.label = name;
    cfg.selection.kind = SelectionKind::InverseAvailability;
    cfg.workload.kind = WorkloadKind::UniformBounded;
    cfg.workload.mu = ParamGen::constant(0.5);
    cfg.workload.sigma = 0.2;
    cfg.workload.bound = 1.0;
    if (name == "lemma1_convergence") {
        cfg.n = 20;
        cfg.m = 5;
        cfg.rounds = 2000;
        cfg.availability.pi = ParamGen::linspace(0.1, 0.9);
        cfg.accrual = AccrualMode::AvailabilityOnly;
        cfg.normalization = NormalizationSource::TruePi;
    } else if (name == "lemma2_parity") {
        cfg.n = 100;
        cfg.m = 10;
        cfg.rounds = 5000;
        cfg.availability.pi = ParamGen::uniform(0.1, 1.0);
    } else if (name == "theorem2_limits") {
        cfg.n = 10;
        cfg.m = 1;
        cfg.rounds = 10000;
        cfg.availability.pi = ParamGen::linspace(0.02, 0.06);
        cfg.selection.kind = SelectionKind::ReactiveReweight;
        cfg.selection.lambda = 0.7;
        cfg.selection.epsilon = 0.01;
    } else if (name == "appendix_a_identity") {
        cfg.n = 10;
        cfg.m = 1;
        cfg.rounds = 5000;
        cfg.availability.pi = ParamGen::linspace(0.3, 1.0);
        cfg.normalization = NormalizationSource::TruePi;
    } else if (name == "appendix_c_drift") {
        cfg.n = 10;
        cfg.m = 2;
        cfg.rounds = 3000;
        cfg.availability.kind = AvailabilityKind::Drifting;
        cfg.availability.drift_start = ParamGen::linspace(0.91, 0.95);
        cfg.availability.drift_end = ParamGen::linspace(0.61, 0.65);
        cfg.availability.drift_start_round = 1;
        cfg.availability.drift_end_round = 3000;
        cfg.estimator.mode = EstimatorMode::SlidingWindow;
        cfg.estimator.window = 60;
    } else if (name == "surrogate_bounds") {
        cfg.n = 12;
        cfg.m = 3;
        cfg.rounds = 500;
        cfg.availability.pi = ParamGen::uniform(0.3, 0.9);
        cfg.workload.kind = WorkloadKind::ToyFl;
        cfg.workload.dim = 4;
        cfg.workload.curvature = ParamGen::constant(1.0);
        cfg.workload.optimum_spread = 1.0;
        cfg.workload.optimum_center = 2.0;
        cfg.workload.gamma = 0.1;
        cfg.workload.bound = 25.0;
        cfg.surrogate.enabled = true;
        cfg.surrogate.eta_0 = 1.0;
        cfg.surrogate.lambda_decay = 0.5;
    } else if (name == "table2_comparison") {
        cfg = comparison_config(seed, true);
        cfg.label = name;
    } else if (name == "figs34_trend") {
        cfg = trend_config(seed);
        cfg.label = name;
    } else {
        throw ConfigError("preset", "unknown preset: " + name);
    }
    return cfg;
}

}  // namespace detail

inline std::vector<CheckResult> preset_checks(const std::string& name, std::uint64_t seed) {
    using detail::check;
    using detail::fmt_count;
    std::vector<CheckResult> out;

    if (name == "lemma1_convergence") {
        const auto rep = parity_convergence_trial(seed, 10, 0.15);
        bool decreasing = true;
        for (std::size_t i = 1; i < rep.scaled_variance.size(); ++i)
            if (!(rep.scaled_variance[i] < rep.scaled_variance[i - 1])) decreasing = false;
        out.push_back(check("scaled_variance_decreasing", decreasing,
                            "sigma^2(T)/T^2 at T=250..10000: " +
                                format_g6(rep.scaled_variance.front()) + " -> " +
                                format_g6(rep.scaled_variance.back())));
        out.push_back(check("normalized_rate_near_mu", rep.within >= 9,
                            fmt_count(rep.within, rep.seeds) +
                                " seeds with max |u_norm/(T mu) - 1| <= 0.15, worst " +
                                format_g6(rep.worst_rel)));
    } else if (name == "lemma2_parity") {
        const auto rep = selection_parity_trial(seed, 20, 100, 10, 5000, 0.03);
        out.push_back(check("frequency_parity", rep.within >= 18,
                            fmt_count(rep.within, rep.seeds) +
                                " seeds with max |S_k/T - m/N| <= 0.03, worst " +
                                format_g6(rep.worst_dev)));
        out.push_back(check("narrower_than_random", rep.narrower == rep.seeds,
                            fmt_count(rep.narrower, rep.seeds) +
                                " seeds with fair frequency spread below random"));
    } else if (name == "theorem2_limits") {
        const auto pi = detail::linspace(0.02, 0.06, 10);
        const auto boosted = reactive_limit_trial(pi, 0.7, 0.01, 40, seed);
        const auto flat = reactive_limit_trial(pi, 0.0, 0.01, 40, seed + 101);
        out.push_back(check("limit_lambda_0.7", boosted.within >= 38,
                            fmt_count(boosted.within, boosted.seeds) +
                                " seeds within 1% of the limit, worst " +
                                format_g6(boosted.worst_rel)));
        out.push_back(check("limit_lambda_0", flat.within == flat.seeds,
                            fmt_count(flat.within, flat.seeds) +
                                " seeds within 1% of the limit, worst " +
                                format_g6(flat.worst_rel)));
    } else if (name == "appendix_a_identity") {
        const auto two = idealized_identity_trial({0.5, 1.0}, 1.0, 10000, 100, seed);
        const auto ten = idealized_identity_trial(detail::linspace(0.3, 1.0, 10), 1.0, 10000,
                                                  100, seed + 1);
        out.push_back(check("mc_mean_matches_identity",
                            two.worst_mean_rel <= 0.02 && ten.worst_mean_rel <= 0.02,
                            "worst relative gap " +
                                format_g6(std::max(two.worst_mean_rel, ten.worst_mean_rel))));
        out.push_back(check("uniform_bound_holds",
                            two.bound_violations + ten.bound_violations == 0,
                            std::to_string(two.bound_violations + ten.bound_violations) +
                                " per-client deviations beyond 2TM/(C pi_min)"));
    } else if (name == "appendix_c_drift") {
        const auto rep = drift_alignment_trial(seed, 20);
        std::ostringstream cells;
        for (const auto& c : rep.cells)
            cells << " (d=" << format_g6(c.drift) << ",W=" << c.window
                  << ": err=" << format_g6(c.participation_error)
                  << ", e+d=" << format_g6(c.epsilon_t + c.delta_t) << ")";
        out.push_back(check("error_tracks_eps_plus_delta", rep.spearman >= 0.999,
                            "Spearman " + format_g6(rep.spearman) + " over" + cells.str()));
    } else if (name == "surrogate_bounds") {
        const auto rep = surrogate_bound_trial(seed);
        out.push_back(check("bias_within_deterministic_bound", rep.bias_violations == 0,
                            std::to_string(rep.bias_violations) + " violations in " +
                                std::to_string(rep.trials) + " randomized trials"));
        out.push_back(check("descent_inequalities_hold",
                            rep.descent_violations == 0 && rep.gap_violations == 0 &&
                                rep.traj_rounds == 1000 && rep.rounds_checked > 0,
                            std::to_string(rep.traj_rounds) + " trajectory rounds, " +
                                std::to_string(rep.rounds_checked) + " descent-checked, " +
                                std::to_string(rep.descent_violations + rep.gap_violations) +
                                " violations"));
        out.push_back(check("exponential_bound_example",
                            std::abs(rep.exponential_example - 0.097441) <= 1e-6,
                            "bound " + format_g6(rep.exponential_example) +
                                " vs 0.097441"));
    } else if (name == "table2_comparison") {
        const auto rep = table_comparison_trial(seed, 20);
        out.push_back(check("fair_beats_vanilla_cv", rep.cv_wins >= 18,
                            fmt_count(rep.cv_wins, rep.seeds) + " utility-CV wins"));
        out.push_back(check("fair_beats_vanilla_jain", rep.jain_wins >= 18,
                            fmt_count(rep.jain_wins, rep.seeds) + " Jain-utility wins"));
        out.push_back(check("fair_beats_vanilla_gap", rep.gap_wins >= 18,
                            fmt_count(rep.gap_wins, rep.seeds) + " selection-gap wins"));
        out.push_back(check("fair_beats_vanilla_gini", rep.gini_wins >= 18,
                            fmt_count(rep.gini_wins, rep.seeds) + " Gini wins"));
        out.push_back(check("surrogates_narrow_cv", rep.surrogate_cv_wins >= 15,
                            fmt_count(rep.surrogate_cv_wins, rep.seeds) +
                                " seeds with lower fair-arm utility CV when enabled"));
        out.push_back(check("surrogates_leave_selection_alone",
                            rep.selection_equal == rep.seeds,
                            fmt_count(rep.selection_equal, rep.seeds) +
                                " seeds with identical selection metrics"));
    } else if (name == "figs34_trend") {
        const auto rep = dispersion_trend_trial(seed, 20);
        out.push_back(check("fair_dispersion_below_vanilla",
                            rep.mean_fair < rep.mean_vanilla && rep.sign_p < 0.05,
                            "mean " + format_g6(rep.mean_fair) + " vs " +
                                format_g6(rep.mean_vanilla) + ", " +
                                fmt_count(rep.fair_wins, rep.seeds) +
                                " wins, sign-test p " + format_g6(rep.sign_p)));
        out.push_back(check("vanilla_trend_nondecreasing", rep.vanilla_nondecreasing,
                            "late-window mean vs early-window mean on the seed average"));
        out.push_back(check("fair_growth_below_vanilla", rep.fair_growth_smaller,
                            "windowed variance growth, fair vs vanilla"));
    } else {
        throw ConfigError("preset", "unknown preset: " + name);
    }
    return out;
}

inline void write_checks_file(const PresetOutcome& outcome, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw EngineError("cannot open " + path.string());
    for (const auto& c : outcome.checks)
        out << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.detail << "\n";
    if (!out) throw EngineError("write failed: " + path.string());
}

inline PresetOutcome run_preset(const std::string& name, std::uint64_t seed,
                                const std::filesystem::path& out_dir) {
    const auto& names = preset_names();
    if (std::find_if(names.begin(), names.end(),
                     [&](const char* p) { return name == p; }) == names.end())
        throw ConfigError("preset", "unknown preset: " + name);
    PresetOutcome outcome;
    outcome.preset = name;
    outcome.out_dir = out_dir;
    outcome.checks = preset_checks(name, seed);
    execute(detail::companion_config(name, seed), out_dir);
    write_checks_file(outcome, out_dir / "preset_checks.txt");
    return outcome;
}

}  // namespace fairfed::presets
