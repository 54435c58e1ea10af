#pragma once

// Dual-arm round loop on shared availability realizations, plus CSV logging,
// replicate orchestration, and cross-replicate summaries.
//
// Per round: one availability vector is drawn and both arms observe it; the
// fair arm selects through the configured policy, the vanilla arm uniformly
// at random from the same available set. Each arm accrues utility from its
// own increment stream, the fair arm additionally applies cached stand-in
// signals when enabled. An empty available set logs a round with no
// selections and no model update.
//
// Metric conventions: fairness_variance is the population variance of the
// normalized utilities; jain_utility and utility_cv are computed over raw
// cumulative utilities; performance is 1 - f(w_t)/f(w_0) for the quadratic
// workload and the mean utility rate otherwise.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "availability.hpp"
#include "config.hpp"
#include "metrics.hpp"
#include "rng.hpp"
#include "selection.hpp"
#include "surrogate.hpp"
#include "toyfl.hpp"
#include "trace.hpp"
#include "utility.hpp"

namespace fairfed {

class EngineError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct RoundMetrics {
    std::uint64_t round = 0;
    std::string arm;
    double performance = 0.0;
    double fairness_variance = 0.0;
    double jain_perf = 0.0;
    double jain_utility = 0.0;
    double utility_cv = 0.0;
    double selgap_paper = 0.0;
    double selgap_share = 0.0;
    double gini_coefficient = 0.0;
    double surrogate_contribution = 0.0;
    std::size_t n_available = 0;
};

struct ArmResult {
    std::string name;
    std::vector<ClientState> clients;
    std::vector<double> u_norm;  // final normalized utilities
    double initial_objective = 0.0;  // quadratic workload only
    double final_objective = 0.0;
};

struct RunResult {
    std::vector<double> pi_true;
    std::vector<RoundMetrics> log;  // two rows per round: fair then vanilla
    ArmResult fair;
    ArmResult vanilla;

    const RoundMetrics& final_row(const std::string& arm) const {
        for (auto it = log.rbegin(); it != log.rend(); ++it)
            if (it->arm == arm) return *it;
        throw EngineError("final_row: arm not present: " + arm);
    }
};

namespace detail {

// RNG stream tags; the availability stream lives inside AvailabilitySampler.
inline constexpr std::uint64_t kStreamSelFair = 0x51;
inline constexpr std::uint64_t kStreamSelVanilla = 0x52;
inline constexpr std::uint64_t kStreamUtilFair = 0x61;
inline constexpr std::uint64_t kStreamUtilVanilla = 0x62;
inline constexpr std::uint64_t kStreamParams = 0x70;

struct Materialized {
    AvailabilityModel model = AvailabilityModel::bernoulli({0.5});
    std::vector<double> pi_true;
    UtilityModel utility;                  // synthetic increments
    std::vector<QuadraticClient> clients;  // quadratic workload, w = w0
    TrainerConfig trainer;
    std::vector<double> w0;
    SelectionPolicy fair_policy;
    SelectionPolicy vanilla_policy;
    SurrogateConfig surrogate;
};

// Parameter draws happen in one pinned order (availability, workload,
// selection) so a run is a pure function of (config, seed).
inline Materialized materialize(const ExperimentConfig& cfg, std::uint64_t seed) {
    Materialized mat;
    Rng prng = make_rng(seed, kStreamParams);
    const std::size_t n = cfg.n;

    switch (cfg.availability.kind) {
        case AvailabilityKind::Bernoulli:
            mat.model = AvailabilityModel::bernoulli(cfg.availability.pi.materialize(n, prng));
            break;
        case AvailabilityKind::TwoStateMarkov: {
            auto pi = cfg.availability.pi.materialize(n, prng);
            auto sojourn = cfg.availability.sojourn.materialize(n, prng);
            mat.model = AvailabilityModel::two_state_markov(std::move(pi), std::move(sojourn));
            break;
        }
        case AvailabilityKind::Drifting: {
            auto start = cfg.availability.drift_start.materialize(n, prng);
            auto end = cfg.availability.drift_end.materialize(n, prng);
            std::vector<std::vector<DriftPoint>> schedule(n);
            for (std::size_t k = 0; k < n; ++k)
                schedule[k] = {{cfg.availability.drift_start_round, start[k]},
                               {cfg.availability.drift_end_round, end[k]}};
            mat.model = AvailabilityModel::drifting(std::move(schedule));
            break;
        }
        case AvailabilityKind::TraceDriven: {
            std::ifstream in(cfg.availability.trace_file);
            if (!in)
                throw ConfigError("availability.file",
                                  "cannot open trace: " + cfg.availability.trace_file);
            const auto parsed = parse_device_trace(in, cfg.availability.trace_round_seconds,
                                                   cfg.availability.trace_horizon);
            mat.model = to_availability_model(parsed);
            if (mat.model.n_clients() != n)
                throw ConfigError("n", "trace supplies " +
                                           std::to_string(mat.model.n_clients()) +
                                           " devices, config expects " + std::to_string(n));
            if (cfg.rounds > mat.model.trace_rounds())
                throw ConfigError("rounds", "trace covers only " +
                                                std::to_string(mat.model.trace_rounds()) +
                                                " rounds");
            break;
        }
    }
    mat.pi_true.resize(n);
    for (std::size_t k = 0; k < n; ++k) mat.pi_true[k] = mat.model.long_run_mean(k);

    if (cfg.workload.kind == WorkloadKind::ToyFl) {
        auto curvature = cfg.workload.curvature.materialize(n, prng);
        mat.w0.assign(cfg.workload.dim, 0.0);
        mat.clients.reserve(n);
        for (std::size_t k = 0; k < n; ++k) {
            QuadraticClient c;
            c.curvature = curvature[k];
            c.w_star.resize(cfg.workload.dim);
            for (auto& x : c.w_star)
                x = cfg.workload.optimum_center +
                    uniform_in(prng, -cfg.workload.optimum_spread, cfg.workload.optimum_spread);
            c.w = mat.w0;
            c.validate();
            mat.clients.push_back(std::move(c));
        }
        mat.trainer.gamma = cfg.workload.gamma;
        mat.trainer.epochs = cfg.workload.epochs;
        mat.trainer.alpha = cfg.workload.mix_alpha;
        mat.trainer.angle_c = cfg.workload.angle_c;
        mat.trainer.validate();
    } else {
        mat.utility.kind = cfg.workload.kind == WorkloadKind::Constant
                               ? IncrementKind::Constant
                               : IncrementKind::UniformBounded;
        mat.utility.mu = cfg.workload.mu.materialize(n, prng);
        mat.utility.sigma = cfg.workload.sigma;
        mat.utility.bound = cfg.workload.bound;
        mat.utility.validate();
    }

    mat.fair_policy.kind = cfg.selection.kind;
    mat.fair_policy.m = cfg.m;
    mat.fair_policy.mode = cfg.selection.mode;
    mat.fair_policy.lambda = cfg.selection.lambda;
    mat.fair_policy.epsilon = cfg.selection.epsilon;
    if (cfg.selection.alpha) mat.fair_policy.alpha = cfg.selection.alpha->materialize(n, prng);
    mat.fair_policy.validate(n);

    mat.vanilla_policy.kind = SelectionKind::Random;
    mat.vanilla_policy.m = cfg.m;
    mat.vanilla_policy.mode = SelectionMode::SampleProportionalWithoutReplacement;
    mat.vanilla_policy.validate(n);

    mat.surrogate.eta_0 = cfg.surrogate.eta_0;
    mat.surrogate.lambda_decay = cfg.surrogate.lambda_decay;
    mat.surrogate.epsilon_sur = cfg.surrogate.epsilon_sur;
    mat.surrogate.validate();
    return mat;
}

struct ArmState {
    std::string name;
    SelectionPolicy policy;
    bool surrogates = false;
    std::vector<ClientState> clients;
    std::vector<QuadraticClient> model_clients;
    std::vector<double> w;
    std::vector<double> beta;
    std::vector<double> fk0;  // per-client initial losses
    double f0 = 0.0;
    SurrogateCache cache{1};
    double cum_contribution = 0.0;

    ArmState(std::string arm_name, const SelectionPolicy& pol, bool with_surrogates,
             const Materialized& mat, std::size_t n)
        : name(std::move(arm_name)), policy(pol), surrogates(with_surrogates),
          cache(n) {
        clients.resize(n);
        for (std::size_t k = 0; k < n; ++k) clients[k].id = k;
        if (!mat.clients.empty()) {
            model_clients = mat.clients;
            w = mat.w0;
            beta.assign(n, 1.0 / static_cast<double>(n));
            fk0.resize(n);
            for (std::size_t k = 0; k < n; ++k)
                fk0[k] = client_loss(model_clients[k], w);
            f0 = weighted_objective(model_clients, beta, w);
        }
    }
};

inline void arm_round(ArmState& arm, const ExperimentConfig& cfg, const Materialized& mat,
                      const std::vector<std::uint8_t>& avail,
                      const std::vector<double>& estimates, std::uint64_t t, Rng& sel_rng,
                      Rng& util_rng) {
    const std::size_t n = cfg.n;
    std::size_t n_avail = 0;
    for (auto a : avail) n_avail += a;

    std::vector<std::size_t> chosen;
    if (n_avail > 0) {
        std::vector<std::uint64_t> missed(n);
        for (std::size_t k = 0; k < n; ++k) missed[k] = arm.clients[k].missed;
        const auto raw = weights(arm.policy, estimates, missed);
        chosen = select(arm.policy, avail, raw, sel_rng);
    }
    std::vector<std::uint8_t> is_sel(n, 0);
    for (std::size_t id : chosen) is_sel[id] = 1;

    std::vector<double> delta(n, 0.0);
    if (cfg.workload.kind == WorkloadKind::ToyFl) {
        if (!chosen.empty()) {
            std::vector<WeightedSignal> active;
            active.reserve(chosen.size());
            std::vector<std::vector<double>> fresh(chosen.size());
            for (std::size_t i = 0; i < chosen.size(); ++i) {
                const std::size_t id = chosen[i];
                auto up = local_update(arm.model_clients[id], arm.w, mat.trainer,
                                       cfg.workload.bound);
                delta[id] = up.delta_f;
                fresh[i] = up.signal;
                active.push_back({arm.beta[id], std::move(up.signal)});
            }
            std::vector<WeightedSignal> missing;
            if (arm.surrogates) {
                for (std::size_t k = 0; k < n; ++k) {
                    if (avail[k] || !arm.cache.has(k)) continue;
                    const auto& entry = arm.cache.entry(k);
                    const double eta = reliability(arm.cache.staleness(k, t), mat.surrogate);
                    missing.push_back({eta * arm.beta[k], entry.signal});
                    if (cfg.surrogate.utility_credit)
                        credit_surrogate(arm.clients[k], eta * entry.loss);
                }
            }
            const auto agg = aggregate_with_surrogates(active, missing);
            arm.cum_contribution += agg.contribution;
            arm.w = global_step(arm.w, agg.aggregate, mat.trainer.gamma);
            if (arm.surrogates)
                for (std::size_t i = 0; i < chosen.size(); ++i)
                    arm.cache.store(chosen[i], fresh[i], t, delta[chosen[i]]);
        }
    } else {
        for (std::size_t k = 0; k < n; ++k) {
            const bool accrues = cfg.accrual == AccrualMode::SelectedAndAvailable
                                     ? is_sel[k] != 0
                                     : avail[k] != 0;
            if (accrues) delta[k] = sample_increment(mat.utility, k, util_rng);
        }
        if (arm.surrogates && !chosen.empty()) {
            for (std::size_t k = 0; k < n; ++k) {
                if (avail[k] || !arm.cache.has(k)) continue;
                const double eta = reliability(arm.cache.staleness(k, t), mat.surrogate);
                arm.cum_contribution += eta / static_cast<double>(n);
                if (cfg.surrogate.utility_credit)
                    credit_surrogate(arm.clients[k], eta * arm.cache.entry(k).loss);
            }
            for (std::size_t id : chosen) arm.cache.store(id, {}, t, delta[id]);
        }
    }

    for (std::size_t k = 0; k < n; ++k)
        accrue(arm.clients[k], avail[k] != 0, is_sel[k] != 0, delta[k], cfg.workload.bound,
               cfg.accrual);

    // Normalization estimate: the participation rate when utility follows
    // selection, the availability estimate when it follows availability.
    for (std::size_t k = 0; k < n; ++k) {
        if (cfg.accrual == AccrualMode::SelectedAndAvailable) {
            const double rate = static_cast<double>(arm.clients[k].selected) /
                                static_cast<double>(t);
            arm.clients[k].pi_hat = std::max(rate, cfg.estimator.floor);
        } else {
            arm.clients[k].pi_hat = estimates[k];
        }
    }
}

inline std::vector<double> normalized_for(const ArmState& arm, const ExperimentConfig& cfg,
                                          const Materialized& mat) {
    const double floor_value = cfg.normalization == NormalizationSource::TruePi
                                   ? 1e-12
                                   : cfg.estimator.floor;
    return normalized_utilities(std::span<const ClientState>(arm.clients),
                                std::span<const double>(mat.pi_true), cfg.normalization,
                                floor_value)
        .values;
}

inline RoundMetrics arm_metrics(const ArmState& arm, const ExperimentConfig& cfg,
                                const Materialized& mat, std::uint64_t t,
                                std::size_t n_avail) {
    const std::size_t n = cfg.n;
    RoundMetrics r;
    r.round = t;
    r.arm = arm.name;
    r.n_available = n_avail;

    const auto u_norm = normalized_for(arm, cfg, mat);
    r.fairness_variance = population_variance(u_norm);

    std::vector<double> u_raw(n);
    for (std::size_t k = 0; k < n; ++k) u_raw[k] = arm.clients[k].u;
    r.jain_utility = jain(u_raw);
    r.utility_cv = utility_cv(u_raw);

    std::vector<double> rates(n, 0.0);
    if (cfg.workload.kind == WorkloadKind::ToyFl) {
        const double f_now = weighted_objective(arm.model_clients, arm.beta, arm.w);
        r.performance = arm.f0 > 0.0 ? 1.0 - f_now / arm.f0 : 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (arm.fk0[k] > 0.0) {
                const double fk = client_loss(arm.model_clients[k], arm.w);
                rates[k] = std::max(0.0, 1.0 - fk / arm.fk0[k]);
            }
        }
    } else {
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            rates[k] = arm.clients[k].u / static_cast<double>(t);
            sum += rates[k];
        }
        r.performance = sum / static_cast<double>(n);
    }
    r.jain_perf = jain(rates);

    std::vector<std::uint64_t> counts(n);
    std::vector<double> dcounts(n);
    for (std::size_t k = 0; k < n; ++k) {
        counts[k] = arm.clients[k].selected;
        dcounts[k] = static_cast<double>(counts[k]);
    }
    r.selgap_paper = selection_gap(counts, cfg.m, t, SelectionGapVariant::PerRound);
    r.selgap_share = selection_gap(counts, cfg.m, t, SelectionGapVariant::FrequencyShare);
    try {
        r.gini_coefficient = gini(dcounts);
    } catch (const std::invalid_argument&) {
        r.gini_coefficient = 0.0;  // no selections yet
    }
    r.surrogate_contribution = arm.cum_contribution;
    return r;
}

}  // namespace detail

// One replicate: the full dual-arm trajectory for (config, seed). Pure
// in-memory computation; file emission is separate.
inline RunResult simulate(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const auto mat = detail::materialize(cfg, seed);
    const std::size_t n = cfg.n;

    AvailabilitySampler sampler(mat.model, seed);
    AvailabilityEstimator estimator(n, cfg.estimator.mode, cfg.estimator.window,
                                    cfg.estimator.floor);
    Rng sel_fair = make_rng(seed, detail::kStreamSelFair);
    Rng sel_vanilla = make_rng(seed, detail::kStreamSelVanilla);
    Rng util_fair = make_rng(seed, detail::kStreamUtilFair);
    Rng util_vanilla = make_rng(seed, detail::kStreamUtilVanilla);

    detail::ArmState fair("fair", mat.fair_policy, cfg.surrogate.enabled, mat, n);
    detail::ArmState vanilla("vanilla", mat.vanilla_policy, false, mat, n);

    RunResult res;
    res.pi_true = mat.pi_true;
    res.log.reserve(2 * cfg.rounds);

    for (std::uint64_t t = 1; t <= cfg.rounds; ++t) {
        const auto& avail = sampler.step(t);
        estimator.update_all(avail, t);
        const auto& estimates = estimator.estimates();
        std::size_t n_avail = 0;
        for (auto a : avail) n_avail += a;

        detail::arm_round(fair, cfg, mat, avail, estimates, t, sel_fair, util_fair);
        detail::arm_round(vanilla, cfg, mat, avail, estimates, t, sel_vanilla, util_vanilla);

        res.log.push_back(detail::arm_metrics(fair, cfg, mat, t, n_avail));
        res.log.push_back(detail::arm_metrics(vanilla, cfg, mat, t, n_avail));
    }

    auto finish = [&](detail::ArmState& arm, ArmResult& out) {
        out.name = arm.name;
        out.u_norm = detail::normalized_for(arm, cfg, mat);
        out.clients = std::move(arm.clients);
        if (cfg.workload.kind == WorkloadKind::ToyFl) {
            out.initial_objective = arm.f0;
            out.final_objective = weighted_objective(arm.model_clients, arm.beta, arm.w);
        }
    };
    finish(fair, res.fair);
    finish(vanilla, res.vanilla);
    return res;
}

inline std::string format_g6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline constexpr const char* kMetricsHeader =
    "round,arm,performance,fairness_variance,jain_perf,jain_utility,utility_cv,"
    "selgap_paper,selgap_share,gini,surrogate_contribution,n_available";

namespace detail {

// A failed write leaves a .partial marker next to the target so downstream
// tooling never mistakes a truncated log for a finished one.
inline void commit_stream(std::ofstream& out, const std::filesystem::path& file) {
    out.flush();
    if (!out) {
        std::ofstream marker(file.string() + ".partial");
        marker << "write failure\n";
        throw EngineError("write failure (partial log): " + file.string());
    }
}

}  // namespace detail

inline void write_metrics_csv(const std::vector<RoundMetrics>& log,
                              const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw EngineError("cannot open for writing: " + file.string());
    out << kMetricsHeader << '\n';
    for (const auto& r : log) {
        out << r.round << ',' << r.arm << ',' << format_g6(r.performance) << ','
            << format_g6(r.fairness_variance) << ',' << format_g6(r.jain_perf) << ','
            << format_g6(r.jain_utility) << ',' << format_g6(r.utility_cv) << ','
            << format_g6(r.selgap_paper) << ',' << format_g6(r.selgap_share) << ','
            << format_g6(r.gini_coefficient) << ',' << format_g6(r.surrogate_contribution)
            << ',' << r.n_available << '\n';
    }
    detail::commit_stream(out, file);
}

inline void write_clients_csv(const ArmResult& arm, const std::vector<double>& pi_true,
                              const std::filesystem::path& file) {
    if (pi_true.size() != arm.clients.size() || arm.u_norm.size() != arm.clients.size())
        throw EngineError("write_clients_csv: size mismatch");
    std::ofstream out(file);
    if (!out) throw EngineError("cannot open for writing: " + file.string());
    out << "id,pi_true,pi_hat,u,u_norm,selected,missed\n";
    for (std::size_t k = 0; k < arm.clients.size(); ++k) {
        const auto& c = arm.clients[k];
        out << c.id << ',' << format_g6(pi_true[k]) << ',' << format_g6(c.pi_hat) << ','
            << format_g6(c.u) << ',' << format_g6(arm.u_norm[k]) << ',' << c.selected << ','
            << c.missed << '\n';
    }
    detail::commit_stream(out, file);
}

inline std::vector<RoundMetrics> load_metrics_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw EngineError("cannot open metrics log: " + file.string());
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw EngineError("unexpected metrics header in " + file.string());
    std::vector<RoundMetrics> log;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 12)
            throw EngineError("malformed metrics row in " + file.string());
        RoundMetrics r;
        r.round = std::stoull(cells[0]);
        r.arm = cells[1];
        r.performance = std::stod(cells[2]);
        r.fairness_variance = std::stod(cells[3]);
        r.jain_perf = std::stod(cells[4]);
        r.jain_utility = std::stod(cells[5]);
        r.utility_cv = std::stod(cells[6]);
        r.selgap_paper = std::stod(cells[7]);
        r.selgap_share = std::stod(cells[8]);
        r.gini_coefficient = std::stod(cells[9]);
        r.surrogate_contribution = std::stod(cells[10]);
        r.n_available = std::stoul(cells[11]);
        log.push_back(std::move(r));
    }
    return log;
}

struct MetricStat {
    double mean = 0.0;
    double stddev = 0.0;  // population std across replicates
};

struct SummaryRow {
    std::string arm;
    std::size_t replicates = 0;
    MetricStat performance, fairness_variance, jain_perf, jain_utility, utility_cv,
        selgap_paper, selgap_share, gini_coefficient, surrogate_contribution;
};

// Final-round metrics aggregated across replicate logs, one row per arm in
// order of first appearance.
inline std::vector<SummaryRow> summarize(const std::vector<std::vector<RoundMetrics>>& logs) {
    if (logs.empty()) throw EngineError("summarize: no replicate logs");
    std::vector<std::string> arms;
    for (const auto& r : logs.front())
        if (std::find(arms.begin(), arms.end(), r.arm) == arms.end()) arms.push_back(r.arm);
    if (arms.empty()) throw EngineError("summarize: empty metrics log");

    auto final_of = [](const std::vector<RoundMetrics>& log,
                       const std::string& arm) -> const RoundMetrics& {
        for (auto it = log.rbegin(); it != log.rend(); ++it)
            if (it->arm == arm) return *it;
        throw EngineError("summarize: arm missing from a replicate: " + arm);
    };

    std::vector<SummaryRow> rows;
    for (const auto& arm : arms) {
        std::vector<const RoundMetrics*> finals;
        finals.reserve(logs.size());
        for (const auto& log : logs) finals.push_back(&final_of(log, arm));
        auto stat = [&](double RoundMetrics::*field) {
            std::vector<double> v;
            v.reserve(finals.size());
            for (const auto* r : finals) v.push_back(r->*field);
            MetricStat s;
            s.mean = mean_of(v);
            // Identical replicates report exactly zero spread.
            const bool all_equal =
                std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
            s.stddev = all_equal ? 0.0 : std::sqrt(population_variance(v));
            return s;
        };
        SummaryRow row;
        row.arm = arm;
        row.replicates = logs.size();
        row.performance = stat(&RoundMetrics::performance);
        row.fairness_variance = stat(&RoundMetrics::fairness_variance);
        row.jain_perf = stat(&RoundMetrics::jain_perf);
        row.jain_utility = stat(&RoundMetrics::jain_utility);
        row.utility_cv = stat(&RoundMetrics::utility_cv);
        row.selgap_paper = stat(&RoundMetrics::selgap_paper);
        row.selgap_share = stat(&RoundMetrics::selgap_share);
        row.gini_coefficient = stat(&RoundMetrics::gini_coefficient);
        row.surrogate_contribution = stat(&RoundMetrics::surrogate_contribution);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows,
                              const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) throw EngineError("cannot open for writing: " + file.string());
    out << "arm,replicates";
    for (const char* name :
         {"performance", "fairness_variance", "jain_perf", "jain_utility", "utility_cv",
          "selgap_paper", "selgap_share", "gini", "surrogate_contribution"})
        out << ',' << name << "_mean," << name << "_std";
    out << '\n';
    for (const auto& r : rows) {
        out << r.arm << ',' << r.replicates;
        for (const MetricStat* s :
             {&r.performance, &r.fairness_variance, &r.jain_perf, &r.jain_utility,
              &r.utility_cv, &r.selgap_paper, &r.selgap_share, &r.gini_coefficient,
              &r.surrogate_contribution})
            out << ',' << format_g6(s->mean) << ',' << format_g6(s->stddev);
        out << '\n';
    }
    detail::commit_stream(out, file);
}

// Fixed-width comparison table, arms as rows.
inline std::string format_summary_table(const std::vector<SummaryRow>& rows) {
    const std::vector<std::pair<const char*, const MetricStat SummaryRow::*>> cols = {
        {"performance", &SummaryRow::performance},
        {"jain_perf", &SummaryRow::jain_perf},
        {"jain_utility", &SummaryRow::jain_utility},
        {"utility_cv", &SummaryRow::utility_cv},
        {"selgap_paper", &SummaryRow::selgap_paper},
        {"selgap_share", &SummaryRow::selgap_share},
        {"gini", &SummaryRow::gini_coefficient},
        {"fairness_var", &SummaryRow::fairness_variance},
    };
    std::ostringstream out;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10s", "arm");
    out << buf;
    for (const auto& [name, field] : cols) {
        std::snprintf(buf, sizeof buf, " %20s", name);
        out << buf;
    }
    out << '\n';
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-10s", r.arm.c_str());
        out << buf;
        for (const auto& [name, field] : cols) {
            const MetricStat& s = r.*field;
            std::string cell = format_g6(s.mean) + " +- " + format_g6(s.stddev);
            std::snprintf(buf, sizeof buf, " %20s", cell.c_str());
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

// metrics_log.csv directly in `dir`, or one per rep_* subdirectory.
inline std::vector<std::filesystem::path> discover_metrics_logs(
    const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::vector<fs::path> found;
    if (fs::exists(dir / "metrics_log.csv")) found.push_back(dir / "metrics_log.csv");
    if (fs::is_directory(dir)) {
        std::vector<fs::path> reps;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_directory() && e.path().filename().string().rfind("rep_", 0) == 0 &&
                fs::exists(e.path() / "metrics_log.csv"))
                reps.push_back(e.path() / "metrics_log.csv");
        }
        std::sort(reps.begin(), reps.end());
        found.insert(found.end(), reps.begin(), reps.end());
    }
    if (found.empty())
        throw EngineError("no metrics_log.csv under " + dir.string());
    return found;
}

struct ExecutionOutcome {
    std::vector<RunResult> replicates;
    std::filesystem::path out_dir;
    std::vector<SummaryRow> summary;
};

// Run every replicate as an isolated task, then emit per-replicate files and
// the merged summary. A single replicate uses the master seed and writes at
// the output root; R > 1 derives seed_r = mix(seed, r) under rep_00r/.
inline ExecutionOutcome execute(const ExperimentConfig& cfg,
                                const std::optional<std::filesystem::path>& out_dir) {
    cfg.validate();
    ExecutionOutcome outcome;
    const std::size_t reps = cfg.replicates;

    std::vector<std::uint64_t> seeds(reps);
    if (reps == 1) {
        seeds[0] = cfg.seed;
    } else {
        for (std::size_t r = 0; r < reps; ++r)
            seeds[r] = mix_seed(cfg.seed, static_cast<std::uint64_t>(r));
    }

    std::vector<std::future<RunResult>> tasks;
    tasks.reserve(reps);
    for (std::size_t r = 0; r < reps; ++r)
        tasks.push_back(std::async(std::launch::async,
                                   [&cfg, seed = seeds[r]] { return simulate(cfg, seed); }));
    outcome.replicates.reserve(reps);
    for (auto& t : tasks) outcome.replicates.push_back(t.get());

    std::vector<std::vector<RoundMetrics>> logs;
    logs.reserve(reps);
    for (const auto& res : outcome.replicates) logs.push_back(res.log);
    outcome.summary = summarize(logs);

    if (out_dir) {
        namespace fs = std::filesystem;
        outcome.out_dir = *out_dir;
        fs::create_directories(outcome.out_dir);
        for (std::size_t r = 0; r < reps; ++r) {
            fs::path dir = outcome.out_dir;
            if (reps > 1) {
                char sub[32];
                std::snprintf(sub, sizeof sub, "rep_%03u", static_cast<unsigned>(r));
                dir /= sub;
                fs::create_directories(dir);
            }
            const auto& res = outcome.replicates[r];
            write_metrics_csv(res.log, dir / "metrics_log.csv");
            write_clients_csv(res.fair, res.pi_true, dir / "clients_final.csv");
            write_clients_csv(res.vanilla, res.pi_true, dir / "clients_final_vanilla.csv");
        }
        write_summary_csv(outcome.summary, outcome.out_dir / "summary.csv");
    }
    return outcome;
}

}  // namespace fairfed
