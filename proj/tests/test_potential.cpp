#include <doctest.h>

#include <Eigen/Dense>

#include "ctmeta/potential.hpp"
#include "helpers.hpp"

using namespace ctmeta;
using ctmeta::testing::builtin_chain;
using ctmeta::testing::random_chain;
using ctmeta::testing::random_reversible_chain;
using ctmeta::testing::random_subset;
using ctmeta::testing::relative_gap;

namespace {

/// Dense oracle: pin the boundary rows of the full system and take the
/// Dirichlet sum of the solution.
double dense_capacity(const Chain& chain, const StationaryMeasure& mu, const StateSet& A,
                      const StateSet& B) {
    const int n = chain.size();
    Eigen::MatrixXd mat = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (A.contains(i)) {
            mat(i, i) = 1.0;
            rhs[i] = 1.0;
        } else if (B.contains(i)) {
            mat(i, i) = 1.0;
        } else {
            mat(i, i) = -chain.holding(i);
            for (const auto& [j, r] : chain.rates_from(i)) mat(i, j) += r;
        }
    }
    Eigen::VectorXd f = mat.fullPivLu().solve(rhs);
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        for (const auto& [j, r] : chain.rates_from(i)) {
            double d = f[j] - f[i];
            acc += 0.5 * mu.mu[static_cast<std::size_t>(i)] * r * d * d;
        }
    return acc;
}

double unnormalized_mass(const StationaryMeasure& mu, double reference_component,
                         int reference_index) {
    // Multiplier turning the probability measure back into the fixture scale.
    return reference_component / mu.mu[static_cast<std::size_t>(reference_index)];
}

} // namespace

TEST_CASE("Dirichlet form") {
    SUBCASE("constants have zero energy") {
        std::mt19937_64 rng(101);
        Chain chain = random_reversible_chain(rng);
        StationaryMeasure mu = stationary_measure(chain);
        std::vector<double> f(static_cast<std::size_t>(chain.size()), 3.7);
        CHECK(dirichlet_form(chain, mu, f) == 0.0);
    }

    SUBCASE("two-state direct evaluation") {
        ChainSpec spec({"a", "b"});
        spec.set_rate("a", "b", 1.0);
        spec.set_rate("b", "a", 1.0);
        Chain chain = build_chain(spec);
        StationaryMeasure mu = stationary_measure(chain);
        std::vector<double> f{1.0, 0.0};
        CHECK(dirichlet_form(chain, mu, f) == doctest::Approx(0.5).epsilon(1e-14));
    }

    SUBCASE("non-reversible input is rejected") {
        std::mt19937_64 rng(103);
        Chain chain = random_chain(rng, 5, 7);
        StationaryMeasure mu = stationary_measure(chain);
        REQUIRE_FALSE(mu.reversible);
        std::vector<double> f(static_cast<std::size_t>(chain.size()), 0.0);
        CHECK_THROWS_AS(dirichlet_form(chain, mu, f), NotReversible);
        CHECK_THROWS_AS(capacity(chain, mu, StateSet{0}, StateSet{1}), NotReversible);
    }

    SUBCASE("energy of the equilibrium potential is the capacity") {
        Chain chain = builtin_chain("ex5", 10);
        StationaryMeasure mu = stationary_measure(chain);
        StateSet a{chain.index_of("3")};
        StateSet b = chain.resolve({"1", "2", "5"});
        CapacityReport report = capacity(chain, mu, a, b);
        CHECK(dirichlet_form(chain, mu, report.potential) ==
              doctest::Approx(report.cap).epsilon(1e-12));
    }
}

TEST_CASE("equilibrium potential") {
    SUBCASE("complement boundary pins the indicator") {
        std::mt19937_64 rng(107);
        Chain chain = random_chain(rng, 5, 8);
        StateSet a{0, 1};
        StateSet b = a.complement(chain.size());
        auto f = equilibrium_potential(chain, a, b);
        for (int i = 0; i < chain.size(); ++i)
            CHECK(f[static_cast<std::size_t>(i)] == (a.contains(i) ? 1.0 : 0.0));
    }

    SUBCASE("ex5 harmonic average at the middle of the right arm") {
        Chain chain = builtin_chain("ex5", 10);
        auto f = equilibrium_potential(chain, StateSet{chain.index_of("3")},
                                       chain.resolve({"1", "2", "5"}));
        CHECK(f[static_cast<std::size_t>(chain.index_of("4"))] ==
              doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("ex2 splits evenly at the saddle") {
        Chain chain = builtin_chain("ex2", 25);
        auto f = equilibrium_potential(chain, StateSet{chain.index_of("-1")},
                                       StateSet{chain.index_of("1")});
        CHECK(f[static_cast<std::size_t>(chain.index_of("0"))] ==
              doctest::Approx(0.5).epsilon(1e-12));
    }

    SUBCASE("overlapping sets are rejected") {
        Chain chain = builtin_chain("ex2", 5);
        CHECK_THROWS_AS(equilibrium_potential(chain, StateSet{0, 1}, StateSet{1, 2}),
                        OverlappingSets);
    }
}

TEST_CASE("capacity fixtures") {
    SUBCASE("ex5 in the fixture scale") {
        const long n = 10;
        Chain chain = builtin_chain("ex5", n);
        StationaryMeasure mu = stationary_measure(chain);
        double mass = unnormalized_mass(mu, 1.0, chain.index_of("2")); // m(2) = 1
        CapacityReport report =
            capacity(chain, mu, StateSet{chain.index_of("3")}, chain.resolve({"1", "2", "5"}));
        CHECK(report.cap * mass == doctest::Approx(1.0 + n * n / 2.0).epsilon(1e-10));
    }

    SUBCASE("ex2 in the fixture scale") {
        const long n = 40;
        Chain chain = builtin_chain("ex2", n);
        StationaryMeasure mu = stationary_measure(chain);
        double mass = unnormalized_mass(mu, 1.0, chain.index_of("0")); // m(0) = 1
        CapacityReport report =
            capacity(chain, mu, StateSet{chain.index_of("-1")}, StateSet{chain.index_of("1")});
        CHECK(report.cap * mass == doctest::Approx(n / 2.0).epsilon(1e-10));
    }

    SUBCASE("symmetry") {
        std::mt19937_64 rng(109);
        for (int rep = 0; rep < 20; ++rep) {
            Chain chain = random_reversible_chain(rng);
            StationaryMeasure mu = stationary_measure(chain);
            StateSet a = random_subset(rng, chain.size(), 2);
            StateSet b = random_subset(rng, chain.size(), 2).minus(a);
            if (b.empty()) continue;
            double ab = capacity(chain, mu, a, b).cap;
            double ba = capacity(chain, mu, b, a).cap;
            CHECK(relative_gap(ab, ba) < 1e-10);
        }
    }

    SUBCASE("monotone in the source set") {
        std::mt19937_64 rng(113);
        for (int rep = 0; rep < 20; ++rep) {
            Chain chain = random_reversible_chain(rng, 6, 12);
            StationaryMeasure mu = stationary_measure(chain);
            StateSet big = random_subset(rng, chain.size(), 3);
            StateSet small{big.items()[0]};
            StateSet b = big.complement(chain.size());
            b = random_subset(rng, chain.size(), 2).minus(big);
            if (b.empty()) continue;
            CHECK(capacity(chain, mu, small, b).cap <=
                  capacity(chain, mu, big, b).cap * (1 + 1e-12));
        }
    }

    SUBCASE("two algorithms agree and the potential stays in range") {
        std::mt19937_64 rng(127);
        for (int rep = 0; rep < 100; ++rep) {
            Chain chain = random_reversible_chain(rng, 4, 12);
            StationaryMeasure mu = stationary_measure(chain);
            StateSet a = random_subset(rng, chain.size(), 1 + static_cast<int>(rng() % 3));
            StateSet b = random_subset(rng, chain.size(), 1 + static_cast<int>(rng() % 3)).minus(a);
            if (b.empty()) continue;
            CapacityReport report = capacity(chain, mu, a, b);
            CHECK(relative_gap(report.cap, report.escape_value) <= 1e-8);
            for (double v : report.potential) {
                CHECK(v >= -1e-10);
                CHECK(v <= 1.0 + 1e-10);
            }
            CHECK(relative_gap(report.cap, dense_capacity(chain, mu, a, b)) < 1e-9);
        }
    }

    SUBCASE("random perturbations of the minimizer do not lower the energy") {
        std::mt19937_64 rng(131);
        Chain chain = random_reversible_chain(rng, 8, 10);
        StationaryMeasure mu = stationary_measure(chain);
        StateSet a{0};
        StateSet b{chain.size() - 1};
        CapacityReport report = capacity(chain, mu, a, b);
        std::uniform_real_distribution<double> bump(-0.05, 0.05);
        for (int trial = 0; trial < 20; ++trial) {
            auto f = report.potential;
            for (int i = 0; i < chain.size(); ++i)
                if (!a.contains(i) && !b.contains(i)) f[static_cast<std::size_t>(i)] += bump(rng);
            CHECK(dirichlet_form(chain, mu, f) >= report.cap - 1e-12);
        }
    }
}

TEST_CASE("point capacity") {
    SUBCASE("two-state well has one candidate") {
        std::mt19937_64 rng(137);
        Chain chain = random_reversible_chain(rng, 5, 8);
        StationaryMeasure mu = stationary_measure(chain);
        StateSet w{0, 2};
        CHECK(point_capacity(chain, mu, w, 0) ==
              doctest::Approx(capacity(chain, mu, StateSet{2}, StateSet{0}).cap));
        CHECK_THROWS_AS(point_capacity(chain, mu, StateSet{0}, 0), SingletonWell);
    }

    SUBCASE("ex5 arm against the dense oracle") {
        Chain chain = builtin_chain("ex5", 10);
        StationaryMeasure mu = stationary_measure(chain);
        StateSet w = chain.resolve({"3", "4", "5"});
        int xi = chain.index_of("3");
        double expected = std::min(
            dense_capacity(chain, mu, StateSet{chain.index_of("4")}, StateSet{xi}),
            dense_capacity(chain, mu, StateSet{chain.index_of("5")}, StateSet{xi}));
        CHECK(relative_gap(point_capacity(chain, mu, w, xi), expected) < 1e-9);
    }

    SUBCASE("symmetric ring minimizes at the antipode") {
        const int k = 8;
        ChainSpec spec;
        for (int i = 0; i < k; ++i) spec.add_state(std::to_string(i));
        for (int i = 0; i < k; ++i) {
            spec.set_rate(i, (i + 1) % k, 1.0);
            spec.set_rate((i + 1) % k, i, 1.0);
        }
        Chain chain = build_chain(spec);
        StationaryMeasure mu = stationary_measure(chain);
        StateSet w = StateSet{}.complement(k);
        double best = point_capacity(chain, mu, w, 0);
        double antipodal = capacity(chain, mu, StateSet{k / 2}, StateSet{0}).cap;
        CHECK(relative_gap(best, antipodal) < 1e-12);
    }
}

TEST_CASE("mean set rates") {
    SUBCASE("two-set rate matches the capacity") {
        std::mt19937_64 rng(139);
        for (int rep = 0; rep < 20; ++rep) {
            Chain chain = random_reversible_chain(rng, 5, 10);
            StationaryMeasure mu = stationary_measure(chain);
            StateSet a = random_subset(rng, chain.size(), 2);
            StateSet b = random_subset(rng, chain.size(), 3).minus(a);
            if (b.empty()) continue;
            StateSet f = a.unioned(b);
            TraceChain trace = trace_by_hitting(chain, f);
            double lhs = mu.mass(a) * mean_set_rate(trace, mu, a, b);
            double cap = capacity(chain, mu, a, b).cap;
            CHECK(relative_gap(lhs, cap) < 1e-8);
        }
    }

    SUBCASE("no direct trace rate into the target gives zero") {
        ChainSpec spec({"a", "c", "b"});
        spec.set_rate("a", "c", 1.0);
        spec.set_rate("c", "a", 1.0);
        spec.set_rate("c", "b", 1.0);
        spec.set_rate("b", "c", 1.0);
        Chain chain = build_chain(spec);
        StationaryMeasure mu = stationary_measure(chain);
        StateSet f = StateSet{}.complement(chain.size());
        TraceChain trace = trace_by_hitting(chain, f);
        CHECK(mean_set_rate(trace, mu, StateSet{chain.index_of("a")},
                            StateSet{chain.index_of("b")}) == 0.0);
    }

    SUBCASE("ex7 rate from the first well") {
        const long n = 100;
        Chain chain = builtin_chain("ex7", n);
        StationaryMeasure mu = stationary_measure(chain);
        TraceChain trace = trace_by_hitting(chain, chain.resolve({"1", "3", "5"}));
        double r = mean_set_rate(trace, mu, StateSet{chain.index_of("1")},
                                 StateSet{chain.index_of("3")});
        CHECK(r == doctest::Approx(0.5 / n).epsilon(1e-10));
    }
}

TEST_CASE("three-set rate identity") {
    SUBCASE("degenerate partition reduces to the two-set identity") {
        std::mt19937_64 rng(149);
        Chain chain = random_reversible_chain(rng, 5, 9);
        StationaryMeasure mu = stationary_measure(chain);
        StateSet a{0};
        StateSet b{1, 2};
        IdentityCheck check = three_set_rate_identity(chain, mu, a.unioned(b), a, b);
        CHECK(check.residual <= 1e-8);
    }

    SUBCASE("random reversible chains") {
        std::mt19937_64 rng(151);
        for (int rep = 0; rep < 30; ++rep) {
            Chain chain = random_reversible_chain(rng, 8, 10);
            StationaryMeasure mu = stationary_measure(chain);
            StateSet f = random_subset(rng, chain.size(), 6);
            if (f.size() < 4) continue;
            StateSet a{f.items()[0], f.items()[1]};
            StateSet b{f.items()[2]};
            IdentityCheck check = three_set_rate_identity(chain, mu, f, a, b);
            CHECK(check.residual <= 1e-8);
        }
    }

    SUBCASE("ex7 ladder") {
        Chain chain = builtin_chain("ex7", 50);
        StationaryMeasure mu = stationary_measure(chain);
        IdentityCheck check = three_set_rate_identity(
            chain, mu, chain.resolve({"1", "3", "5"}), StateSet{chain.index_of("1")},
            StateSet{chain.index_of("3")});
        CHECK(check.residual <= 1e-8);
    }
}

TEST_CASE("weighted-trace capacity scaling") {
    SUBCASE("unit weight is the identity") {
        std::mt19937_64 rng(157);
        Chain chain = random_reversible_chain(rng, 5, 8);
        StationaryMeasure mu = stationary_measure(chain);
        std::vector<double> h(static_cast<std::size_t>(chain.size()), 1.0);
        IdentityCheck check = h_capacity_scaling(chain, mu, h, StateSet{0}, StateSet{1});
        CHECK(check.residual <= 1e-10);
    }

    SUBCASE("constant weight cancels") {
        std::mt19937_64 rng(163);
        Chain chain = random_reversible_chain(rng, 5, 8);
        StationaryMeasure mu = stationary_measure(chain);
        std::vector<double> h(static_cast<std::size_t>(chain.size()), 2.0);
        TraceChain trace = h_trace(chain, h);
        StationaryMeasure nu = trace_stationary(trace, mu);
        double cap_h = capacity(trace.chain, nu, StateSet{0}, StateSet{1}).cap;
        double cap = capacity(chain, mu, StateSet{0}, StateSet{1}).cap;
        CHECK(relative_gap(cap_h, cap / 2.0) < 1e-10);
        IdentityCheck check = h_capacity_scaling(chain, mu, h, StateSet{0}, StateSet{1});
        CHECK(check.residual <= 1e-10);
    }

    SUBCASE("random positive weights on a random support") {
        std::mt19937_64 rng(167);
        std::uniform_real_distribution<double> weight(0.2, 3.0);
        for (int rep = 0; rep < 25; ++rep) {
            Chain chain = random_reversible_chain(rng, 6, 10);
            StationaryMeasure mu = stationary_measure(chain);
            StateSet f = random_subset(rng, chain.size(), 4 + static_cast<int>(rng() % 3));
            if (f.size() < 3) continue;
            StateSet a{f.items()[0]};
            StateSet b{f.items()[1], f.items()[2]};
            std::vector<double> h(static_cast<std::size_t>(chain.size()), 0.0);
            for (int s : f) h[static_cast<std::size_t>(s)] = weight(rng);
            IdentityCheck check = h_capacity_scaling(chain, mu, h, a, b);
            CHECK(check.residual <= 1e-8);
        }
    }
}

TEST_CASE("hitting integral formula") {
    SUBCASE("zero integrand") {
        std::mt19937_64 rng(173);
        Chain chain = random_reversible_chain(rng, 5, 8);
        StationaryMeasure mu = stationary_measure(chain);
        std::vector<double> g(static_cast<std::size_t>(chain.size()), 0.0);
        HittingIntegral result = hitting_integral_formula(chain, mu, StateSet{0}, StateSet{1}, g);
        CHECK(result.value == 0.0);
        CHECK(result.mixed == 0.0);
    }

    SUBCASE("singleton sets reproduce the mean well occupation") {
        Chain chain = builtin_chain("ex5", 10);
        StationaryMeasure mu = stationary_measure(chain);
        int eta = chain.index_of("4");
        int xi = chain.index_of("3");
        StateSet w = chain.resolve({"4", "5"});
        std::vector<double> g(static_cast<std::size_t>(chain.size()), 0.0);
        for (int s : w) g[static_cast<std::size_t>(s)] = 1.0;

        HittingIntegral result =
            hitting_integral_formula(chain, mu, StateSet{eta}, StateSet{xi}, g);
        double direct = expected_additive_until_hitting(chain, g, eta, StateSet{xi});
        CHECK(relative_gap(result.value, direct) <= 1e-8);
        CHECK(result.residual <= 1e-8);
    }

    SUBCASE("random sets and integrands") {
        std::mt19937_64 rng(179);
        std::uniform_real_distribution<double> g_dist(-2.0, 2.0);
        for (int rep = 0; rep < 25; ++rep) {
            Chain chain = random_reversible_chain(rng, 6, 10);
            StationaryMeasure mu = stationary_measure(chain);
            StateSet a = random_subset(rng, chain.size(), 2);
            StateSet b = random_subset(rng, chain.size(), 2).minus(a);
            if (b.empty()) continue;
            std::vector<double> g(static_cast<std::size_t>(chain.size()));
            for (double& v : g) v = g_dist(rng);
            HittingIntegral result = hitting_integral_formula(chain, mu, a, b, g);
            CHECK(result.residual <= 1e-8);
        }
    }
}

TEST_CASE("well occupation bound from point capacities") {
    std::mt19937_64 rng(181);
    std::uniform_real_distribution<double> g_dist(-1.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        Chain chain = random_reversible_chain(rng, 8, 12);
        StationaryMeasure mu = stationary_measure(chain);
        const int n = chain.size();

        // Random two-block partition with an attractor in each block.
        StateSet block_a = random_subset(rng, n, n / 2);
        StateSet block_b = block_a.complement(n);
        if (block_a.size() < 2 || block_b.size() < 2) continue;
        std::vector<double> g(static_cast<std::size_t>(n));
        for (double& v : g) v = g_dist(rng);

        for (const StateSet& block : {block_a, block_b}) {
            int xi = block.items()[0];
            double mean = 0.0, mass = 0.0;
            for (int s : block) {
                mean += g[static_cast<std::size_t>(s)] * mu.mu[static_cast<std::size_t>(s)];
                mass += mu.mu[static_cast<std::size_t>(s)];
            }
            mean /= mass;

            std::vector<double> gx(static_cast<std::size_t>(n), 0.0);
            double abs_mean = 0.0;
            for (int s : block) {
                gx[static_cast<std::size_t>(s)] =
                    std::abs(g[static_cast<std::size_t>(s)] - mean);
                abs_mean += std::abs(g[static_cast<std::size_t>(s)]) *
                            mu.mu[static_cast<std::size_t>(s)];
            }
            abs_mean /= mass;

            auto u = expected_additive_vector(chain, gx, StateSet{xi});
            double lhs = 0.0;
            for (int s : block) lhs = std::max(lhs, u[static_cast<std::size_t>(s)]);
            double rhs = 2.0 * abs_mean * mass / point_capacity(chain, mu, block, xi);
            CHECK(lhs <= rhs * (1 + 1e-10));
        }
    }
}
