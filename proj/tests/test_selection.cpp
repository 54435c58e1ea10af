#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "fairfed/availability.hpp"
#include "fairfed/rng.hpp"
#include "fairfed/selection.hpp"

using namespace fairfed;
using Catch::Approx;

namespace {

SelectionPolicy make_policy(SelectionKind kind, std::size_t m,
                            SelectionMode mode = SelectionMode::SampleProportionalWithoutReplacement,
                            double lambda = 0.0, double epsilon = 0.01) {
    SelectionPolicy p;
    p.kind = kind;
    p.m = m;
    p.mode = mode;
    p.lambda = lambda;
    p.epsilon = epsilon;
    return p;
}

// Tail probability P(Binomial(n, 1/2) >= wins), the one-sided sign test.
double sign_test_p(int wins, int n) {
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        double c = 1.0;
        for (int i = 0; i < k; ++i) c *= static_cast<double>(n - i) / (i + 1);
        p += c;
    }
    return p * std::pow(0.5, n);
}

}  // namespace

// Frozen by hand from the weight formulas.
TEST_CASE("policy weights follow the documented formulas") {
    const std::vector<std::uint64_t> no_missed{0, 0};

    auto rnd = weights(make_policy(SelectionKind::Random, 1), std::vector<double>{0.3, 0.9}, no_missed);
    CHECK(rnd == std::vector<double>{1.0, 1.0});

    auto inv = weights(make_policy(SelectionKind::InverseAvailability, 1),
                       std::vector<double>{0.5, 0.25}, no_missed);
    CHECK(inv[0] == Approx(2.0));
    CHECK(inv[1] == Approx(4.0));

    // alpha=1, eps=0.01, lambda=0: 1/0.51 = 1.9608, 1/0.81 = 1.2346.
    auto flat = weights(make_policy(SelectionKind::ReactiveReweight, 1,
                                    SelectionMode::SampleProportionalWithoutReplacement, 0.0),
                        std::vector<double>{0.5, 0.8}, no_missed);
    CHECK(flat[0] == Approx(1.9608).epsilon(1e-4));
    CHECK(flat[1] == Approx(1.2346).epsilon(1e-4));

    // lambda=0.7, missed=(10,0): factors (1+7, 1) on top of 1/0.51.
    auto boosted = weights(make_policy(SelectionKind::ReactiveReweight, 1,
                                       SelectionMode::SampleProportionalWithoutReplacement, 0.7),
                           std::vector<double>{0.5, 0.5}, std::vector<std::uint64_t>{10, 0});
    CHECK(boosted[0] == Approx(1.9608 * 8.0).epsilon(1e-4));
    CHECK(boosted[1] == Approx(1.9608 * 1.0).epsilon(1e-4));
}

TEST_CASE("lambda zero reduces reactive weights to shifted reciprocals") {
    const std::vector<double> pi_hat{0.13, 0.4, 0.77, 1.0};
    const std::vector<std::uint64_t> missed{5, 0, 99, 3};
    auto w = weights(make_policy(SelectionKind::ReactiveReweight, 2,
                                 SelectionMode::SampleProportionalWithoutReplacement, 0.0, 0.02),
                     pi_hat, missed);
    for (std::size_t k = 0; k < w.size(); ++k)
        CHECK(w[k] == Approx(1.0 / (pi_hat[k] + 0.02)));
}

TEST_CASE("weight computation validates its inputs") {
    const std::vector<double> ok_pi{0.5, 0.5};
    const std::vector<std::uint64_t> ok_missed{0, 0};

    CHECK_THROWS_AS(weights(make_policy(SelectionKind::Random, 1),
                            std::vector<double>{0.5, 0.0}, ok_missed),
                    std::invalid_argument);
    CHECK_THROWS_AS(weights(make_policy(SelectionKind::ReactiveReweight, 1),
                            ok_pi, std::vector<std::uint64_t>{0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(weights(make_policy(SelectionKind::Random, 0), ok_pi, ok_missed),
                    std::invalid_argument);
    CHECK_THROWS_AS(weights(make_policy(SelectionKind::Random, 3), ok_pi, ok_missed),
                    std::invalid_argument);

    auto bad_alpha = make_policy(SelectionKind::ReactiveReweight, 1);
    bad_alpha.alpha = {1.0, -1.0};
    CHECK_THROWS_AS(weights(bad_alpha, ok_pi, ok_missed), std::invalid_argument);

    auto bad_lambda = make_policy(SelectionKind::ReactiveReweight, 1);
    bad_lambda.lambda = -0.1;
    CHECK_THROWS_AS(weights(bad_lambda, ok_pi, ok_missed), std::invalid_argument);

    auto bad_eps = make_policy(SelectionKind::ReactiveReweight, 1);
    bad_eps.epsilon = 0.0;
    CHECK_THROWS_AS(weights(bad_eps, ok_pi, ok_missed), std::invalid_argument);
}

TEST_CASE("normalization produces a probability vector") {
    CHECK(normalize(std::vector<double>{2.0, 2.0}) == std::vector<double>{0.5, 0.5});
    CHECK(normalize(std::vector<double>{1.0, 3.0}) == std::vector<double>{0.25, 0.75});
    CHECK(normalize(std::vector<double>{7.0}) == std::vector<double>{1.0});
    CHECK_THROWS_AS(normalize(std::vector<double>{}), std::invalid_argument);
    CHECK_THROWS_AS(normalize(std::vector<double>{0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(normalize(std::vector<double>{1.0, -0.5}), std::invalid_argument);

    auto rng = make_rng(2101);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> raw(1 + rng() % 40);
        for (auto& v : raw) v = uniform_in(rng, 1e-6, 100.0);
        auto p = normalize(raw);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("selection respects availability and size caps") {
    auto rng = make_rng(2102);
    const std::vector<double> w{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};

    SECTION("capped at the available count") {
        std::vector<std::uint8_t> only3{0, 0, 0, 1, 0, 0};
        auto chosen = select(make_policy(SelectionKind::Random, 5), only3, w, rng);
        CHECK(chosen == std::vector<std::size_t>{3});
    }
    SECTION("empty available set yields an empty round") {
        std::vector<std::uint8_t> none(6, 0);
        CHECK(select(make_policy(SelectionKind::Random, 2), none, w, rng).empty());
    }
    SECTION("chosen is always a subset of the available set") {
        for (int trial = 0; trial < 300; ++trial) {
            const std::size_t n = 2 + rng() % 12;
            std::vector<std::uint8_t> avail(n);
            std::vector<double> weights_r(n);
            std::size_t n_avail = 0;
            for (std::size_t k = 0; k < n; ++k) {
                avail[k] = bernoulli(rng, 0.6) ? 1 : 0;
                n_avail += avail[k];
                weights_r[k] = uniform_in(rng, 0.1, 9.0);
            }
            const std::size_t m = 1 + rng() % n;
            const auto mode = (trial % 2 == 0) ? SelectionMode::SampleProportionalWithoutReplacement
                                               : SelectionMode::TopK;
            auto chosen = select(make_policy(SelectionKind::Random, m, mode), avail, weights_r, rng);
            CHECK(chosen.size() == std::min(m, n_avail));
            CHECK(std::is_sorted(chosen.begin(), chosen.end()));
            CHECK(std::adjacent_find(chosen.begin(), chosen.end()) == chosen.end());
            for (auto k : chosen) CHECK(avail[k] == 1);
        }
    }
}

TEST_CASE("topk ranks by weight and breaks ties by lowest id") {
    auto rng = make_rng(2103);
    const std::vector<std::uint8_t> all{1, 1, 1};
    auto pol = make_policy(SelectionKind::Random, 2, SelectionMode::TopK);

    CHECK(select(pol, all, std::vector<double>{5.0, 1.0, 5.0}, rng) ==
          std::vector<std::size_t>{0, 2});
    CHECK(select(pol, all, std::vector<double>{1.0, 1.0, 1.0}, rng) ==
          std::vector<std::size_t>{0, 1});

    std::vector<std::uint8_t> second_out{1, 0, 1};
    CHECK(select(pol, second_out, std::vector<double>{0.5, 9.0, 0.7}, rng) ==
          std::vector<std::size_t>{0, 2});
}

// Exact enumeration at N=2, m=1, pi=(0.5, 1), true-pi inverse weights:
// availability (1,1) w.p. 0.5 selects client 0 w.p. 2/3; (0,1) w.p. 0.5
// never does; so E[freq of client 0] = 1/3.
TEST_CASE("proportional sampling matches the exact enumeration oracle") {
    const std::vector<double> pi{0.5, 1.0};
    const std::uint64_t T = 200000;
    AvailabilitySampler sampler(AvailabilityModel::bernoulli(pi), 515);
    auto sel_rng = make_rng(516);
    auto pol = make_policy(SelectionKind::InverseAvailability, 1);
    const std::vector<std::uint64_t> no_missed{0, 0};
    std::uint64_t hits0 = 0, hits1 = 0;
    for (std::uint64_t t = 1; t <= T; ++t) {
        const auto& a = sampler.step(t);
        auto w = weights(pol, pi, no_missed);
        auto chosen = select(pol, a, w, sel_rng);
        REQUIRE(chosen.size() == 1);
        (chosen[0] == 0 ? hits0 : hits1)++;
    }
    CHECK(static_cast<double>(hits0) / T == Approx(1.0 / 3.0).margin(0.005));
    CHECK(static_cast<double>(hits1) / T == Approx(2.0 / 3.0).margin(0.005));
}

TEST_CASE("independent draws agree with the enumeration oracle") {
    const std::vector<double> pi{0.5, 1.0};
    const std::uint64_t T = 200000;
    AvailabilitySampler sampler(AvailabilityModel::bernoulli(pi), 525);
    auto sel_rng = make_rng(526);
    const std::vector<double> q{2.0, 1.0};
    std::uint64_t hits0 = 0;
    for (std::uint64_t t = 1; t <= T; ++t) {
        const auto& a = sampler.step(t);
        hits0 += multinomial_counts(a, q, 1, sel_rng)[0];
    }
    CHECK(static_cast<double>(hits0) / T == Approx(1.0 / 3.0).margin(0.005));
}

TEST_CASE("asymptotic weight limits match hand-evaluated cases") {
    // lambda>0, alpha=1, eps=0.01, pi=(0.5, 0.8): raw (0.98039, 0.24691),
    // normalized (0.7988, 0.2012).
    auto lim = asymptotic_weight_limit({0.5, 0.8}, {}, 0.7, 0.01);
    CHECK(lim[0] == Approx(0.7988).epsilon(2e-4));
    CHECK(lim[1] == Approx(0.2012).epsilon(2e-4));
    CHECK(lim[0] / lim[1] == Approx(0.98039 / 0.24691).epsilon(1e-4));

    auto sym = asymptotic_weight_limit({0.5, 0.5}, {}, 0.0, 0.0);
    CHECK(sym[0] == Approx(0.5));
    CHECK(sym[1] == Approx(0.5));

    auto homog = asymptotic_weight_limit({0.3, 0.3, 0.3, 0.3, 0.3}, {}, 0.7, 0.01);
    for (double v : homog) CHECK(v == Approx(0.2));

    CHECK_THROWS_AS(asymptotic_weight_limit({1.0, 1.0}, {}, 0.7, 0.01), std::domain_error);
    CHECK_NOTHROW(asymptotic_weight_limit({1.0, 1.0}, {}, 0.0, 0.01));
    CHECK_THROWS_AS(asymptotic_weight_limit({0.0, 0.5}, {}, 0.7, 0.01), std::invalid_argument);

    auto scaled = asymptotic_weight_limit(std::vector<double>{0.5, 0.8},
                                          std::vector<double>{2.0, 2.0}, 0.7, 0.01);
    CHECK(scaled[0] == Approx(lim[0]));
    CHECK(scaled[1] == Approx(lim[1]));
}

namespace {

struct LimitTrial {
    int within = 0;
    double worst_rel = 0.0;
};

// Track missed counts under Bernoulli availability for t rounds, then compare
// the normalized reactive weights against the asymptotic limit per client.
LimitTrial limit_convergence(const std::vector<double>& pi, double lambda, bool use_estimates,
                             double tol, int n_seeds, std::uint64_t base_seed) {
    const std::uint64_t T = 10000;
    LimitTrial out;
    auto pol = make_policy(SelectionKind::ReactiveReweight, 1,
                           SelectionMode::SampleProportionalWithoutReplacement, lambda, 0.01);
    const auto lim = asymptotic_weight_limit(pi, {}, lambda, 0.01);
    for (int s = 0; s < n_seeds; ++s) {
        AvailabilitySampler sampler(AvailabilityModel::bernoulli(pi), mix_seed(base_seed + s, 0x41));
        AvailabilityEstimator est(pi.size(), EstimatorMode::RunningMean);
        std::vector<std::uint64_t> missed(pi.size(), 0);
        for (std::uint64_t t = 1; t <= T; ++t) {
            const auto& a = sampler.step(t);
            est.update_all(a, t);
            for (std::size_t k = 0; k < pi.size(); ++k)
                if (!a[k]) missed[k]++;
        }
        std::vector<double> source =
            use_estimates ? std::vector<double>(est.estimates().begin(), est.estimates().end()) : pi;
        auto w = normalize(weights(pol, source, missed));
        double maxrel = 0.0;
        for (std::size_t k = 0; k < pi.size(); ++k)
            maxrel = std::max(maxrel, std::abs(w[k] - lim[k]) / lim[k]);
        out.worst_rel = std::max(out.worst_rel, maxrel);
        if (maxrel <= tol) out.within++;
    }
    return out;
}

std::vector<double> linspace_pi(double lo, double hi, std::size_t n) {
    std::vector<double> pi(n);
    for (std::size_t k = 0; k < n; ++k)
        pi[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
    return pi;
}

}  // namespace

TEST_CASE("reactive weights converge to the limit under true availability") {
    const auto pi = linspace_pi(0.02, 0.06, 10);
    auto boosted = limit_convergence(pi, 0.7, false, 0.01, 40, 4000);
    CHECK(boosted.within >= 38);
    auto flat = limit_convergence(pi, 0.0, false, 0.01, 40, 4100);
    CHECK(flat.within == 40);
    CHECK(flat.worst_rel <= 1e-12);
}

TEST_CASE("reactive weights track the limit with estimated availability") {
    const auto pi = linspace_pi(0.25, 0.55, 10);
    auto res10 = limit_convergence(pi, 0.7, true, 0.10, 40, 4200);
    CHECK(res10.within == 40);
    auto res05 = limit_convergence(pi, 0.7, true, 0.05, 40, 4200);
    CHECK(res05.within >= 30);
}

TEST_CASE("selection statistics report exact ratios") {
    SECTION("everyone selected every round") {
        const std::vector<std::uint64_t> counts{7, 7, 7};
        auto st = selection_stats(counts, 7, 3, 3);
        for (double f : st.frequency) CHECK(f == 1.0);
        for (double d : st.deviation) CHECK(d == 0.0);
        CHECK(st.std_dev == 0.0);
    }
    SECTION("fully skewed counts") {
        const std::vector<std::uint64_t> counts{10, 0};
        auto st = selection_stats(counts, 10, 1, 2);
        CHECK(st.frequency == std::vector<double>{1.0, 0.0});
        CHECK(st.deviation == std::vector<double>{0.5, 0.5});
        CHECK(st.std_dev == Approx(0.5));
    }
    SECTION("input validation") {
        const std::vector<std::uint64_t> counts{1, 2};
        CHECK_THROWS_AS(selection_stats(counts, 0, 1, 2), std::invalid_argument);
        CHECK_THROWS_AS(selection_stats(counts, 5, 1, 3), std::invalid_argument);
    }
}

namespace {

struct ParityRun {
    double max_deviation = 0.0;
    double fair_std = 0.0;
    double random_std = 0.0;
};

// One replicate of the long-run parity protocol: N clients, Bernoulli pi drawn
// uniformly from [0.1, 1], running-mean estimates, m picks per round for both
// an inverse-availability arm and a paired uniform arm on the same
// availability realization.
ParityRun parity_replicate(std::uint64_t master, bool independent_draws) {
    const std::size_t N = 100, m = 10;
    const std::uint64_t T = 5000;
    auto prng = make_rng(master, 0x70);
    std::vector<double> pi(N);
    for (auto& p : pi) p = uniform_in(prng, 0.1, 1.0);
    AvailabilitySampler sampler(AvailabilityModel::bernoulli(pi), mix_seed(master, 0x41));
    AvailabilityEstimator est(N, EstimatorMode::RunningMean);
    auto fair_rng = make_rng(master, 0x51);
    auto rand_rng = make_rng(master, 0x52);
    auto fair = make_policy(SelectionKind::InverseAvailability, m);
    auto rnd = make_policy(SelectionKind::Random, m);
    const std::vector<std::uint64_t> no_missed(N, 0);
    const std::vector<double> ones(N, 1.0);
    std::vector<std::uint64_t> s_fair(N, 0), s_rand(N, 0);
    for (std::uint64_t t = 1; t <= T; ++t) {
        const auto& a = sampler.step(t);
        est.update_all(a, t);
        auto wf = weights(fair, est.estimates(), no_missed);
        if (independent_draws) {
            auto cf = multinomial_counts(a, wf, m, fair_rng);
            auto cr = multinomial_counts(a, ones, m, rand_rng);
            for (std::size_t k = 0; k < N; ++k) {
                s_fair[k] += cf[k];
                s_rand[k] += cr[k];
            }
        } else {
            for (auto k : select(fair, a, wf, fair_rng)) s_fair[k]++;
            for (auto k : select(rnd, a, ones, rand_rng)) s_rand[k]++;
        }
    }
    auto stf = selection_stats(s_fair, T, m, N);
    auto str = selection_stats(s_rand, T, m, N);
    ParityRun out;
    for (double d : stf.deviation) out.max_deviation = std::max(out.max_deviation, d);
    out.fair_std = stf.std_dev;
    out.random_std = str.std_dev;
    return out;
}

}  // namespace

TEST_CASE("independent-draw parity approaches the uniform share") {
    int within = 0, narrower = 0;
    for (int s = 0; s < 20; ++s) {
        auto run = parity_replicate(1000 + s, true);
        if (run.max_deviation <= 0.03) within++;
        if (run.fair_std < run.random_std) narrower++;
    }
    CHECK(within >= 18);
    CHECK(narrower == 20);
}

// Sequential no-replacement picks saturate the least-available clients, so the
// parity envelope is wider than under independent draws.
TEST_CASE("no-replacement selection keeps parity within a wider envelope") {
    int within = 0, narrower = 0;
    for (int s = 0; s < 20; ++s) {
        auto run = parity_replicate(1000 + s, false);
        if (run.max_deviation <= 0.05) within++;
        if (run.fair_std < run.random_std) narrower++;
    }
    CHECK(within >= 18);
    CHECK(narrower == 20);
}

TEST_CASE("inverse-availability narrows frequency dispersion on paired runs") {
    const std::size_t N = 20, m = 2;
    const std::uint64_t T = 2000;
    std::vector<double> pi(N);
    for (std::size_t k = 0; k < N; ++k) pi[k] = (k % 2 == 0) ? 0.2 : 0.9;
    int wins = 0;
    const int n_seeds = 20;
    for (int s = 0; s < n_seeds; ++s) {
        AvailabilitySampler sampler(AvailabilityModel::bernoulli(pi), mix_seed(7000 + s, 0x41));
        AvailabilityEstimator est(N, EstimatorMode::RunningMean);
        auto fair_rng = make_rng(7000 + s, 0x51);
        auto rand_rng = make_rng(7000 + s, 0x52);
        auto fair = make_policy(SelectionKind::InverseAvailability, m);
        auto rnd = make_policy(SelectionKind::Random, m);
        const std::vector<std::uint64_t> no_missed(N, 0);
        const std::vector<double> ones(N, 1.0);
        std::vector<std::uint64_t> s_fair(N, 0), s_rand(N, 0);
        for (std::uint64_t t = 1; t <= T; ++t) {
            const auto& a = sampler.step(t);
            est.update_all(a, t);
            auto wf = weights(fair, est.estimates(), no_missed);
            for (auto k : select(fair, a, wf, fair_rng)) s_fair[k]++;
            for (auto k : select(rnd, a, ones, rand_rng)) s_rand[k]++;
        }
        if (selection_stats(s_fair, T, m, N).std_dev < selection_stats(s_rand, T, m, N).std_dev)
            wins++;
    }
    CHECK(wins >= 15);
    CHECK(sign_test_p(wins, n_seeds) < 0.05);
}

TEST_CASE("weight scaling leaves selections unchanged") {
    auto rng = make_rng(2104);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 3 + rng() % 10;
        std::vector<std::uint8_t> avail(n, 1);
        std::vector<double> w(n);
        for (auto& v : w) v = uniform_in(rng, 0.2, 5.0);
        const std::size_t m = 1 + rng() % n;

        // Power-of-two factors keep the draw thresholds bit-exact.
        std::vector<double> w4(w);
        for (auto& v : w4) v *= 4.0;
        auto rng_a = make_rng(9000 + trial);
        auto rng_b = make_rng(9000 + trial);
        auto pol = make_policy(SelectionKind::Random, m);
        CHECK(select(pol, avail, w, rng_a) == select(pol, avail, w4, rng_b));

        std::vector<double> w3(w);
        for (auto& v : w3) v *= 3.0;
        auto topk = make_policy(SelectionKind::Random, m, SelectionMode::TopK);
        CHECK(select(topk, avail, w, rng_a) == select(topk, avail, w3, rng_b));
    }
}
