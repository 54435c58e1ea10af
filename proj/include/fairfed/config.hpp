#pragma once

// Experiment configuration: JSON schema ingestion with field-path error
// reporting, per-client parameter generators, and cross-field validation.

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "availability.hpp"
#include "rng.hpp"
#include "selection.hpp"
#include "surrogate.hpp"
#include "toyfl.hpp"
#include "utility.hpp"

namespace fairfed {

class ConfigError : public std::runtime_error {
  public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

  private:
    std::string field_;
};

// Per-client parameter generator: a constant, an explicit list, an evenly
// spaced ramp, independent uniform draws, or a half/half split.
struct ParamGen {
    enum class Kind { Value, Values, Linspace, Uniform, Split };
    Kind kind = Kind::Value;
    double a = 0.0, b = 0.0;
    std::vector<double> values;

    static ParamGen constant(double v) {
        ParamGen g;
        g.kind = Kind::Value;
        g.a = v;
        return g;
    }
    static ParamGen linspace(double lo, double hi) {
        ParamGen g;
        g.kind = Kind::Linspace;
        g.a = lo;
        g.b = hi;
        return g;
    }
    static ParamGen uniform(double lo, double hi) {
        ParamGen g;
        g.kind = Kind::Uniform;
        g.a = lo;
        g.b = hi;
        return g;
    }
    static ParamGen split(double first_half, double second_half) {
        ParamGen g;
        g.kind = Kind::Split;
        g.a = first_half;
        g.b = second_half;
        return g;
    }
    static ParamGen explicit_values(std::vector<double> v) {
        ParamGen g;
        g.kind = Kind::Values;
        g.values = std::move(v);
        return g;
    }

    std::vector<double> materialize(std::size_t n, Rng& rng) const {
        std::vector<double> out(n);
        switch (kind) {
            case Kind::Value:
                for (auto& v : out) v = a;
                break;
            case Kind::Values:
                if (values.size() != n)
                    throw ConfigError("values", "expected " + std::to_string(n) +
                                                    " entries, got " +
                                                    std::to_string(values.size()));
                out = values;
                break;
            case Kind::Linspace:
                for (std::size_t k = 0; k < n; ++k)
                    out[k] = n == 1 ? a
                                    : a + (b - a) * static_cast<double>(k) /
                                              static_cast<double>(n - 1);
                break;
            case Kind::Uniform:
                for (auto& v : out) v = uniform_in(rng, a, b);
                break;
            case Kind::Split:
                for (std::size_t k = 0; k < n; ++k) out[k] = k < n / 2 ? a : b;
                break;
        }
        return out;
    }
};

enum class WorkloadKind { Constant, UniformBounded, ToyFl };

struct AvailabilitySpec {
    AvailabilityKind kind = AvailabilityKind::Bernoulli;
    ParamGen pi = ParamGen::constant(0.5);
    ParamGen sojourn = ParamGen::constant(1.0);   // markov only
    ParamGen drift_start = ParamGen::constant(0.5);
    ParamGen drift_end = ParamGen::constant(0.5);
    std::uint64_t drift_start_round = 1;
    std::uint64_t drift_end_round = 1;
    std::string trace_file;
    double trace_round_seconds = 0.0;
    std::optional<double> trace_horizon;
};

struct EstimatorSpec {
    EstimatorMode mode = EstimatorMode::RunningMean;
    std::size_t window = 0;
    double floor = 0.01;
};

struct SelectionSpec {
    SelectionKind kind = SelectionKind::InverseAvailability;
    SelectionMode mode = SelectionMode::SampleProportionalWithoutReplacement;
    double lambda = 0.0;
    double epsilon = 0.01;
    std::optional<ParamGen> alpha;
};

struct WorkloadSpec {
    WorkloadKind kind = WorkloadKind::Constant;
    // synthetic increments
    ParamGen mu = ParamGen::constant(0.5);
    double sigma = 0.0;
    double bound = 1.0;
    // quadratic workload
    std::size_t dim = 2;
    ParamGen curvature = ParamGen::constant(1.0);
    double optimum_spread = 1.0;
    double optimum_center = 0.0;
    double gamma = 0.1;
    std::uint64_t epochs = 1;
    double mix_alpha = 1.0;
    double angle_c = 0.25;
};

struct SurrogateSpec {
    bool enabled = false;
    double eta_0 = 1.0;
    double lambda_decay = 0.5;
    double epsilon_sur = 0.0;
    bool utility_credit = true;
};

struct ExperimentConfig {
    std::size_t n = 1;
    std::size_t m = 1;
    std::uint64_t rounds = 1;
    std::uint64_t seed = 0;
    std::size_t replicates = 1;
    std::string out_dir;
    std::string label;
    AvailabilitySpec availability;
    EstimatorSpec estimator;
    SelectionSpec selection;
    WorkloadSpec workload;
    AccrualMode accrual = AccrualMode::SelectedAndAvailable;
    NormalizationSource normalization = NormalizationSource::EstimatedPi;
    SurrogateSpec surrogate;

    void validate() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(path.empty() ? it.key() : path + "." + it.key(),
                                   "unknown field");
    }
}

inline const nlohmann::json& need(const nlohmann::json& j, const char* key,
                                  const std::string& path) {
    auto it = j.find(key);
    if (it == j.end())
        throw ConfigError(path.empty() ? key : path + "." + key, "missing required field");
    return *it;
}

inline std::string join(const std::string& path, const char* key) {
    return path.empty() ? key : path + "." + key;
}

inline double as_number(const nlohmann::json& j, const std::string& field) {
    if (!j.is_number()) throw ConfigError(field, "expected a number");
    return j.get<double>();
}

inline std::uint64_t as_uint(const nlohmann::json& j, const std::string& field) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
        throw ConfigError(field, "expected a non-negative integer");
    return j.get<std::uint64_t>();
}

inline std::string as_string(const nlohmann::json& j, const std::string& field) {
    if (!j.is_string()) throw ConfigError(field, "expected a string");
    return j.get<std::string>();
}

inline bool as_bool(const nlohmann::json& j, const std::string& field) {
    if (!j.is_boolean()) throw ConfigError(field, "expected a boolean");
    return j.get<bool>();
}

inline ParamGen parse_param(const nlohmann::json& j, const std::string& field) {
    if (j.is_number()) return ParamGen::constant(j.get<double>());
    if (!j.is_object()) throw ConfigError(field, "expected a number or generator object");
    check_keys(j, field, {"value", "values", "linspace", "uniform", "split"});
    if (j.size() != 1) throw ConfigError(field, "expected exactly one generator key");
    if (j.contains("value")) return ParamGen::constant(as_number(j["value"], field + ".value"));
    if (j.contains("values")) {
        const auto& arr = j["values"];
        if (!arr.is_array() || arr.empty())
            throw ConfigError(field + ".values", "expected a non-empty array");
        std::vector<double> v;
        for (const auto& e : arr) v.push_back(as_number(e, field + ".values"));
        return ParamGen::explicit_values(std::move(v));
    }
    auto pair_of = [&](const char* key) {
        const auto& arr = j[key];
        const std::string f = field + "." + key;
        if (!arr.is_array() || arr.size() != 2)
            throw ConfigError(f, "expected [a, b]");
        return std::pair<double, double>{as_number(arr[0], f), as_number(arr[1], f)};
    };
    if (j.contains("linspace")) {
        auto [lo, hi] = pair_of("linspace");
        return ParamGen::linspace(lo, hi);
    }
    if (j.contains("uniform")) {
        auto [lo, hi] = pair_of("uniform");
        if (!(lo <= hi)) throw ConfigError(field + ".uniform", "requires a <= b");
        return ParamGen::uniform(lo, hi);
    }
    auto [a, b] = pair_of("split");
    return ParamGen::split(a, b);
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& root) {
    using namespace detail;
    if (!root.is_object()) throw ConfigError("config", "top level must be an object");
    check_keys(root, "",
               {"n", "m", "rounds", "seed", "replicates", "out_dir", "label",
                "availability", "estimator", "selection", "utility", "accrual",
                "normalization", "surrogate"});
    ExperimentConfig cfg;
    cfg.n = as_uint(need(root, "n", ""), "n");
    cfg.m = as_uint(need(root, "m", ""), "m");
    cfg.rounds = as_uint(need(root, "rounds", ""), "rounds");
    cfg.seed = as_uint(need(root, "seed", ""), "seed");
    if (root.contains("replicates"))
        cfg.replicates = as_uint(root["replicates"], "replicates");
    if (root.contains("out_dir")) cfg.out_dir = as_string(root["out_dir"], "out_dir");
    if (root.contains("label")) cfg.label = as_string(root["label"], "label");

    {
        const auto& a = need(root, "availability", "");
        const std::string p = "availability";
        if (!a.is_object()) throw ConfigError(p, "expected an object");
        const std::string model = as_string(need(a, "model", p), p + ".model");
        if (model == "bernoulli") {
            check_keys(a, p, {"model", "pi"});
            cfg.availability.kind = AvailabilityKind::Bernoulli;
            cfg.availability.pi = parse_param(need(a, "pi", p), p + ".pi");
        } else if (model == "markov") {
            check_keys(a, p, {"model", "pi", "sojourn"});
            cfg.availability.kind = AvailabilityKind::TwoStateMarkov;
            cfg.availability.pi = parse_param(need(a, "pi", p), p + ".pi");
            cfg.availability.sojourn = parse_param(need(a, "sojourn", p), p + ".sojourn");
        } else if (model == "drifting") {
            check_keys(a, p, {"model", "start", "end", "start_round", "end_round"});
            cfg.availability.kind = AvailabilityKind::Drifting;
            cfg.availability.drift_start = parse_param(need(a, "start", p), p + ".start");
            cfg.availability.drift_end = parse_param(need(a, "end", p), p + ".end");
            cfg.availability.drift_start_round = 1;
            cfg.availability.drift_end_round = cfg.rounds;
            if (a.contains("start_round"))
                cfg.availability.drift_start_round = as_uint(a["start_round"], p + ".start_round");
            if (a.contains("end_round"))
                cfg.availability.drift_end_round = as_uint(a["end_round"], p + ".end_round");
        } else if (model == "trace") {
            check_keys(a, p, {"model", "file", "round_seconds", "horizon"});
            cfg.availability.kind = AvailabilityKind::TraceDriven;
            cfg.availability.trace_file = as_string(need(a, "file", p), p + ".file");
            cfg.availability.trace_round_seconds =
                as_number(need(a, "round_seconds", p), p + ".round_seconds");
            if (a.contains("horizon"))
                cfg.availability.trace_horizon = as_number(a["horizon"], p + ".horizon");
        } else {
            throw ConfigError(p + ".model", "unknown model: " + model);
        }
    }

    if (root.contains("estimator")) {
        const auto& e = root["estimator"];
        const std::string p = "estimator";
        if (!e.is_object()) throw ConfigError(p, "expected an object");
        check_keys(e, p, {"mode", "window", "floor"});
        if (e.contains("mode")) {
            const std::string mode = as_string(e["mode"], p + ".mode");
            if (mode == "running_mean") cfg.estimator.mode = EstimatorMode::RunningMean;
            else if (mode == "sliding_window") cfg.estimator.mode = EstimatorMode::SlidingWindow;
            else throw ConfigError(p + ".mode", "unknown mode: " + mode);
        }
        if (e.contains("window")) cfg.estimator.window = as_uint(e["window"], p + ".window");
        if (e.contains("floor")) cfg.estimator.floor = as_number(e["floor"], p + ".floor");
    }

    if (root.contains("selection")) {
        const auto& s = root["selection"];
        const std::string p = "selection";
        if (!s.is_object()) throw ConfigError(p, "expected an object");
        check_keys(s, p, {"kind", "mode", "lambda", "epsilon", "alpha"});
        if (s.contains("kind")) {
            try {
                cfg.selection.kind = selection_kind_from_string(as_string(s["kind"], p + ".kind"));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(p + ".kind", e.what());
            }
        }
        if (s.contains("mode")) {
            try {
                cfg.selection.mode = selection_mode_from_string(as_string(s["mode"], p + ".mode"));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(p + ".mode", e.what());
            }
        }
        if (s.contains("lambda")) cfg.selection.lambda = as_number(s["lambda"], p + ".lambda");
        if (s.contains("epsilon")) cfg.selection.epsilon = as_number(s["epsilon"], p + ".epsilon");
        if (s.contains("alpha")) cfg.selection.alpha = parse_param(s["alpha"], p + ".alpha");
    }

    {
        const auto& u = need(root, "utility", "");
        const std::string p = "utility";
        if (!u.is_object()) throw ConfigError(p, "expected an object");
        const std::string kind = as_string(need(u, "kind", p), p + ".kind");
        if (kind == "constant" || kind == "uniform_bounded") {
            check_keys(u, p, {"kind", "mu", "sigma", "bound"});
            cfg.workload.kind =
                kind == "constant" ? WorkloadKind::Constant : WorkloadKind::UniformBounded;
            cfg.workload.mu = parse_param(need(u, "mu", p), p + ".mu");
            if (u.contains("sigma")) cfg.workload.sigma = as_number(u["sigma"], p + ".sigma");
            if (u.contains("bound")) cfg.workload.bound = as_number(u["bound"], p + ".bound");
        } else if (kind == "toyfl") {
            check_keys(u, p, {"kind", "dim", "curvature", "optimum_spread", "optimum_center",
                              "gamma", "epochs", "mix_alpha", "angle_c", "bound"});
            cfg.workload.kind = WorkloadKind::ToyFl;
            if (u.contains("dim")) cfg.workload.dim = as_uint(u["dim"], p + ".dim");
            if (u.contains("curvature"))
                cfg.workload.curvature = parse_param(u["curvature"], p + ".curvature");
            if (u.contains("optimum_spread"))
                cfg.workload.optimum_spread = as_number(u["optimum_spread"], p + ".optimum_spread");
            if (u.contains("optimum_center"))
                cfg.workload.optimum_center = as_number(u["optimum_center"], p + ".optimum_center");
            if (u.contains("gamma")) cfg.workload.gamma = as_number(u["gamma"], p + ".gamma");
            if (u.contains("epochs")) cfg.workload.epochs = as_uint(u["epochs"], p + ".epochs");
            if (u.contains("mix_alpha"))
                cfg.workload.mix_alpha = as_number(u["mix_alpha"], p + ".mix_alpha");
            if (u.contains("angle_c")) cfg.workload.angle_c = as_number(u["angle_c"], p + ".angle_c");
            if (u.contains("bound")) cfg.workload.bound = as_number(u["bound"], p + ".bound");
        } else {
            throw ConfigError(p + ".kind", "unknown kind: " + kind);
        }
    }

    if (root.contains("accrual")) {
        const std::string v = as_string(root["accrual"], "accrual");
        if (v == "selected_and_available") cfg.accrual = AccrualMode::SelectedAndAvailable;
        else if (v == "availability_only") cfg.accrual = AccrualMode::AvailabilityOnly;
        else throw ConfigError("accrual", "unknown mode: " + v);
    }
    if (root.contains("normalization")) {
        const std::string v = as_string(root["normalization"], "normalization");
        if (v == "estimated") cfg.normalization = NormalizationSource::EstimatedPi;
        else if (v == "true") cfg.normalization = NormalizationSource::TruePi;
        else throw ConfigError("normalization", "unknown source: " + v);
    }

    if (root.contains("surrogate")) {
        const auto& s = root["surrogate"];
        const std::string p = "surrogate";
        if (!s.is_object()) throw ConfigError(p, "expected an object");
        check_keys(s, p, {"enabled", "eta_0", "lambda_decay", "epsilon_sur", "utility_credit"});
        if (s.contains("enabled")) cfg.surrogate.enabled = as_bool(s["enabled"], p + ".enabled");
        if (s.contains("eta_0")) cfg.surrogate.eta_0 = as_number(s["eta_0"], p + ".eta_0");
        if (s.contains("lambda_decay"))
            cfg.surrogate.lambda_decay = as_number(s["lambda_decay"], p + ".lambda_decay");
        if (s.contains("epsilon_sur"))
            cfg.surrogate.epsilon_sur = as_number(s["epsilon_sur"], p + ".epsilon_sur");
        if (s.contains("utility_credit"))
            cfg.surrogate.utility_credit = as_bool(s["utility_credit"], p + ".utility_credit");
    }

    cfg.validate();
    return cfg;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }
    return from_json(j);
}

inline void ExperimentConfig::validate() const {
    if (n < 1) throw ConfigError("n", "must be >= 1");
    if (m < 1 || m > n) throw ConfigError("m", "must satisfy 1 <= m <= n");
    if (rounds < 1) throw ConfigError("rounds", "must be >= 1");
    if (replicates < 1) throw ConfigError("replicates", "must be >= 1");
    if (estimator.mode == EstimatorMode::SlidingWindow && estimator.window < 1)
        throw ConfigError("estimator.window", "must be >= 1 for sliding_window");
    if (!(estimator.floor > 0.0) || estimator.floor >= 1.0)
        throw ConfigError("estimator.floor", "must be in (0, 1)");
    if (!(selection.lambda >= 0.0)) throw ConfigError("selection.lambda", "must be >= 0");
    if (!(selection.epsilon > 0.0)) throw ConfigError("selection.epsilon", "must be > 0");
    if (availability.kind == AvailabilityKind::Drifting) {
        if (availability.drift_start_round < 1)
            throw ConfigError("availability.start_round", "must be >= 1");
        if (availability.drift_end_round <= availability.drift_start_round)
            throw ConfigError("availability.end_round", "must be > start_round");
    }
    if (availability.kind == AvailabilityKind::TraceDriven) {
        if (availability.trace_file.empty())
            throw ConfigError("availability.file", "must be non-empty");
        if (!(availability.trace_round_seconds > 0.0))
            throw ConfigError("availability.round_seconds", "must be > 0");
    }
    if (workload.kind == WorkloadKind::ToyFl) {
        if (workload.dim < 1) throw ConfigError("utility.dim", "must be >= 1");
        if (!(workload.gamma > 0.0)) throw ConfigError("utility.gamma", "must be > 0");
        if (workload.epochs < 1) throw ConfigError("utility.epochs", "must be >= 1");
        if (!(workload.mix_alpha >= 0.0) || workload.mix_alpha > 1.0)
            throw ConfigError("utility.mix_alpha", "must be in [0, 1]");
        if (!(workload.angle_c > 0.0) || workload.angle_c > 1.0)
            throw ConfigError("utility.angle_c", "must be in (0, 1]");
        if (!(workload.optimum_spread >= 0.0))
            throw ConfigError("utility.optimum_spread", "must be >= 0");
    } else {
        if (!(workload.sigma >= 0.0)) throw ConfigError("utility.sigma", "must be >= 0");
    }
    if (!(workload.bound > 0.0)) throw ConfigError("utility.bound", "must be > 0");
    if (!(surrogate.eta_0 > 0.0)) throw ConfigError("surrogate.eta_0", "must be > 0");
    if (!(surrogate.lambda_decay >= 0.0))
        throw ConfigError("surrogate.lambda_decay", "must be >= 0");
    if (!(surrogate.epsilon_sur >= 0.0))
        throw ConfigError("surrogate.epsilon_sur", "must be >= 0");
}

}  // namespace fairfed
