#include <doctest.h>

#include <Eigen/Dense>

#include "ctmeta/chain.hpp"
#include "ctmeta/simulate.hpp"
#include "ctmeta/trace.hpp"
#include "helpers.hpp"

using namespace ctmeta;
using ctmeta::testing::builtin_chain;
using ctmeta::testing::random_chain;
using ctmeta::testing::random_reversible_chain;
using ctmeta::testing::random_subset;
using ctmeta::testing::relative_gap;

namespace {

std::vector<double> indicator_of(const Chain& chain, const StateSet& set) {
    std::vector<double> g(static_cast<std::size_t>(chain.size()), 0.0);
    for (int s : set) g[static_cast<std::size_t>(s)] = 1.0;
    return g;
}

} // namespace

TEST_CASE("build_chain computes holding rates and jump probabilities") {
    const long n = 50;
    Chain chain = builtin_chain("ex2", n);
    int zero = chain.index_of("0");
    CHECK(chain.holding(zero) == doctest::Approx(2.0 * n));
    CHECK(chain.jump_prob(zero, chain.index_of("1")) == doctest::Approx(0.5));
    CHECK(chain.jump_prob(zero, chain.index_of("-1")) == doctest::Approx(0.5));
    CHECK(chain.irreducible());
}

TEST_CASE("two-state pair has unit holding and forced jumps") {
    ChainSpec spec({"a", "b"});
    spec.set_rate("a", "b", 1.0);
    spec.set_rate("b", "a", 1.0);
    Chain chain = build_chain(spec);
    CHECK(chain.holding(0) == 1.0);
    CHECK(chain.holding(1) == 1.0);
    CHECK(chain.jump_prob(0, 1) == 1.0);
}

TEST_CASE("jump probability rows sum to one on random chains") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        Chain chain = random_chain(rng, 8, 8);
        for (int i = 0; i < chain.size(); ++i) {
            double total = 0.0;
            for (const auto& [j, r] : chain.rates_from(i)) total += r / chain.holding(i);
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(chain.jump_prob(i, i) == 0.0);
        }
    }
}

TEST_CASE("spec validation") {
    ChainSpec spec({"a", "b"});
    CHECK_THROWS_AS(spec.set_rate("a", "a", 1.0), InvalidArgument);
    CHECK_THROWS_AS(spec.set_rate("a", "b", -1.0), InvalidArgument);
    CHECK_THROWS_AS(spec.set_rate("a", "c", 1.0), UnknownState);

    SUBCASE("zero holding rate") {
        spec.set_rate("a", "b", 1.0);
        CHECK_THROWS_AS(build_chain(spec), ZeroHoldingRate);
        Chain lenient = build_chain(spec, BuildOptions{true, false});
        CHECK(lenient.has_absorbing());
    }

    SUBCASE("not irreducible") {
        ChainSpec disconnected({"a", "b", "c", "d"});
        disconnected.set_rate("a", "b", 1.0);
        disconnected.set_rate("b", "a", 1.0);
        disconnected.set_rate("c", "d", 1.0);
        disconnected.set_rate("d", "c", 1.0);
        disconnected.set_rate("a", "c", 0.5); // one-way bridge
        try {
            build_chain(disconnected);
            FAIL("expected NotIrreducible");
        } catch (const NotIrreducible& e) {
            CHECK(e.components.size() == 2);
        }
    }
}

TEST_CASE("stationary measure of the ex5 fixture") {
    const long n = 10;
    Chain chain = builtin_chain("ex5", n);
    StationaryMeasure mu = stationary_measure(chain);
    CHECK(mu.reversible);

    // mu proportional to (N^2, 1, N^3, N^2, N^3).
    double base = mu.mu[static_cast<std::size_t>(chain.index_of("2"))];
    CHECK(mu.mu[static_cast<std::size_t>(chain.index_of("1"))] / base ==
          doctest::Approx(static_cast<double>(n * n)).epsilon(1e-9));
    CHECK(mu.mu[static_cast<std::size_t>(chain.index_of("3"))] / base ==
          doctest::Approx(static_cast<double>(n * n * n)).epsilon(1e-9));
    CHECK(mu.mu[static_cast<std::size_t>(chain.index_of("4"))] / base ==
          doctest::Approx(static_cast<double>(n * n)).epsilon(1e-9));
    CHECK(mu.mu[static_cast<std::size_t>(chain.index_of("5"))] / base ==
          doctest::Approx(static_cast<double>(n * n * n)).epsilon(1e-9));
}

TEST_CASE("doubly stochastic ring is uniform") {
    const int k = 7;
    ChainSpec spec;
    for (int i = 0; i < k; ++i) spec.add_state(std::to_string(i));
    for (int i = 0; i < k; ++i) {
        spec.set_rate(i, (i + 1) % k, 2.0);
        spec.set_rate(i, (i + 2) % k, 1.0);
    }
    StationaryMeasure mu = stationary_measure(build_chain(spec));
    for (double v : mu.mu) CHECK(v == doctest::Approx(1.0 / k).epsilon(1e-12));
    CHECK_FALSE(mu.reversible);
}

TEST_CASE("stationary measure matches a dense null-space solve on ex4") {
    Chain chain = builtin_chain("ex4", 10);
    StationaryMeasure mu = stationary_measure(chain);

    const int n = chain.size();
    Eigen::MatrixXd lt = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        lt(i, i) = -chain.holding(i);
        for (const auto& [j, r] : chain.rates_from(i)) lt(j, i) = r;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(lt);
    lu.setThreshold(1e-12);
    Eigen::MatrixXd kernel = lu.kernel();
    REQUIRE(kernel.cols() == 1);
    Eigen::VectorXd dense = kernel.col(0) / kernel.col(0).sum();
    for (int i = 0; i < n; ++i)
        CHECK(relative_gap(dense[i], mu.mu[static_cast<std::size_t>(i)]) < 1e-9);
}

TEST_CASE("invariance residuals over random chains") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 25; ++rep) {
        Chain chain = rep % 2 ? random_chain(rng) : random_reversible_chain(rng);
        StationaryMeasure mu = stationary_measure(chain);
        CHECK(mu.invariance_residual <= 1e-10);

        // Jump-chain invariance M P = M.
        const int n = chain.size();
        std::vector<double> mp(static_cast<std::size_t>(n), 0.0);
        double m_max = 0.0;
        for (int i = 0; i < n; ++i) {
            double mi = mu.jump_measure[static_cast<std::size_t>(i)];
            m_max = std::max(m_max, mi);
            for (const auto& [j, r] : chain.rates_from(i))
                mp[static_cast<std::size_t>(j)] += mi * r / chain.holding(i);
        }
        for (int i = 0; i < n; ++i)
            CHECK(std::abs(mp[static_cast<std::size_t>(i)] -
                           mu.jump_measure[static_cast<std::size_t>(i)]) <= 1e-10 * m_max);
    }
}

TEST_CASE("return occupations are proportional to the stationary measure") {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        Chain chain = random_chain(rng, 5, 9);
        StationaryMeasure mu = stationary_measure(chain);
        const int n = chain.size();
        const int eta = rep % n;

        // v(xi) = E_eta[ time at xi until the first return to eta ], assembled
        // by one-step decomposition from hitting solves with target {eta}.
        std::vector<double> v(static_cast<std::size_t>(n), 0.0);
        for (int xi = 0; xi < n; ++xi) {
            std::vector<double> g(static_cast<std::size_t>(n), 0.0);
            g[static_cast<std::size_t>(xi)] = 1.0;
            auto u = expected_additive_vector(chain, g, StateSet{eta});
            double acc = xi == eta ? 1.0 / chain.holding(eta) : 0.0;
            for (const auto& [j, r] : chain.rates_from(eta))
                acc += (r / chain.holding(eta)) * u[static_cast<std::size_t>(j)];
            v[static_cast<std::size_t>(xi)] = acc;
        }

        double ratio = v[static_cast<std::size_t>(eta)] / mu.mu[static_cast<std::size_t>(eta)];
        for (int xi = 0; xi < n; ++xi)
            CHECK(relative_gap(v[static_cast<std::size_t>(xi)],
                               ratio * mu.mu[static_cast<std::size_t>(xi)]) < 1e-8);
    }
}

TEST_CASE("expected additive functional examples") {
    SUBCASE("time at the middle state of ex1 before reaching the boundary") {
        Chain chain = builtin_chain("ex1", 100);
        StateSet boundary{chain.index_of("-1"), chain.index_of("1")};
        auto g = indicator_of(chain, StateSet{chain.index_of("0")});
        double value = expected_additive_until_hitting(chain, g, chain.index_of("0"), boundary);
        CHECK(value == doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("zero integrand") {
        std::mt19937_64 rng(3);
        Chain chain = random_chain(rng);
        std::vector<double> g(static_cast<std::size_t>(chain.size()), 0.0);
        CHECK(expected_additive_until_hitting(chain, g, 0, StateSet{chain.size() - 1}) == 0.0);
    }

    SUBCASE("matches a Monte Carlo mean on a random 6-state chain") {
        std::mt19937_64 rng(5);
        Chain chain = random_chain(rng, 6, 6);
        StateSet target{5};
        StateSet f_set{1, 2};
        auto g = indicator_of(chain, f_set);
        double expected = expected_additive_until_hitting(chain, g, 0, target);

        const long reps = 100000;
        double sum = 0.0, sq = 0.0;
        for (long rep = 0; rep < reps; ++rep) {
            RngStream stream(20240601, static_cast<std::uint64_t>(rep));
            PathSample path = sample_path(chain, 0, StopRule{target}, stream);
            double occ = occupation_time(path, f_set);
            sum += occ;
            sq += occ * occ;
        }
        double mean = sum / reps;
        double se = std::sqrt((sq / reps - mean * mean) / reps);
        CHECK(std::abs(mean - expected) <= 3.0 * se);
    }
}

TEST_CASE("transient functional") {
    SUBCASE("zero horizon") {
        Chain chain = builtin_chain("ex2", 10);
        std::vector<double> g(static_cast<std::size_t>(chain.size()), 1.0);
        CHECK(transient_functional(chain, g, 0, 0.0) == 0.0);
    }

    SUBCASE("constant integrand integrates to c t") {
        std::mt19937_64 rng(17);
        Chain chain = random_chain(rng);
        std::vector<double> g(static_cast<std::size_t>(chain.size()), 2.5);
        for (double t : {0.3, 1.0, 4.0})
            CHECK(transient_functional(chain, g, 1, t) == doctest::Approx(2.5 * t).epsilon(1e-10));
    }

    SUBCASE("matches Monte Carlo on ex6") {
        FamilyDefinition def = builtin_family("ex6");
        Chain chain = instantiate(def).chain_at(5);
        auto g = indicator_of(chain, StateSet{chain.index_of("2")});
        double expected = transient_functional(chain, g, chain.index_of("1"), 1.0);

        const long reps = 200000;
        StateSet two{chain.index_of("2")};
        double sum = 0.0, sq = 0.0;
        for (long rep = 0; rep < reps; ++rep) {
            RngStream stream(99, static_cast<std::uint64_t>(rep));
            StopRule stop;
            stop.horizon = 1.0;
            PathSample path = sample_path(chain, chain.index_of("1"), stop, stream);
            double occ = occupation_time(path, two);
            sum += occ;
            sq += occ * occ;
        }
        double mean = sum / reps;
        double se = std::sqrt((sq / reps - mean * mean) / reps);
        CHECK(std::abs(mean - expected) <= 3.0 * se);
    }
}

TEST_CASE("escape probabilities") {
    SUBCASE("separated target is never reached first") {
        ChainSpec spec({"a", "b", "c"});
        spec.set_rate("a", "b", 1.0);
        spec.set_rate("b", "a", 1.0);
        spec.set_rate("b", "c", 1.0);
        spec.set_rate("c", "b", 1.0);
        Chain chain = build_chain(spec);
        double p = escape_probability(chain, chain.index_of("a"),
                                      StateSet{chain.index_of("a"), chain.index_of("b")},
                                      StateSet{chain.index_of("c")});
        CHECK(p == 0.0);
    }

    SUBCASE("forced transition") {
        ChainSpec spec({"a", "b"});
        spec.set_rate("a", "b", 3.0);
        spec.set_rate("b", "a", 1.0);
        Chain chain = build_chain(spec);
        CHECK(escape_probability(chain, 0, StateSet{0}, StateSet{1}) == doctest::Approx(1.0));
    }

    SUBCASE("matches Monte Carlo excursions on ex5") {
        Chain chain = builtin_chain("ex5", 10);
        int three = chain.index_of("3");
        int one = chain.index_of("1");
        double expected = escape_probability(chain, three, StateSet{three}, StateSet{one});

        const long reps = 100000;
        long hits = 0;
        for (long rep = 0; rep < reps; ++rep) {
            RngStream stream(31337, static_cast<std::uint64_t>(rep));
            // One excursion: leave 3, stop on returning to 3 or hitting 1.
            double lambda = chain.holding(three);
            (void)stream.exponential(lambda);
            double u = stream.uniform01() * lambda;
            int state = -1;
            double acc = 0.0;
            for (const auto& [j, r] : chain.rates_from(three)) {
                acc += r;
                if (u < acc) { state = j; break; }
            }
            REQUIRE(state >= 0);
            PathSample path = sample_path(chain, state, StopRule{StateSet{three, one}}, stream);
            if (path.final_state == one) ++hits;
        }
        double freq = static_cast<double>(hits) / reps;
        double se = std::sqrt(expected * (1.0 - expected) / reps);
        CHECK(std::abs(freq - expected) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("replacement bound for mean-zero integrands") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> g_dist(-1.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        Chain chain = random_chain(rng, 4, 10);
        StationaryMeasure mu = stationary_measure(chain);
        const int n = chain.size();

        StateSet support = random_subset(rng, n, 2 + static_cast<int>(rng() % 3));
        std::vector<double> g(static_cast<std::size_t>(n), 0.0);
        for (int s : support) g[static_cast<std::size_t>(s)] = g_dist(rng);
        // Center within the support so that <g>_mu = 0.
        double mean = 0.0, mass = 0.0;
        for (int s : support) {
            mean += g[static_cast<std::size_t>(s)] * mu.mu[static_cast<std::size_t>(s)];
            mass += mu.mu[static_cast<std::size_t>(s)];
        }
        for (int s : support) g[static_cast<std::size_t>(s)] -= mean / mass;

        int xi = support.items()[rng() % support.size()];
        std::vector<double> abs_g(g);
        for (double& v : abs_g) v = std::abs(v);
        auto u = expected_additive_vector(chain, abs_g, StateSet{xi});
        double bound = 0.0;
        for (int s : support) bound = std::max(bound, u[static_cast<std::size_t>(s)]);

        for (double t : {0.1, 1.0, 10.0}) {
            auto values = transient_functional_vector(chain, g, t);
            double worst = 0.0;
            for (double v : values) worst = std::max(worst, std::abs(v));
            CHECK(worst <= 2.0 * bound + 1e-12);
        }
    }
}
