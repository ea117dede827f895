#include <doctest.h>

#include "ctmeta/families.hpp"
#include "ctmeta/report.hpp"
#include "helpers.hpp"

using namespace ctmeta;

TEST_CASE("rate expression grammar") {
    CHECK(eval_rate_expr("N", 7) == 7.0);
    CHECK(eval_rate_expr("1/N^2", 10) == doctest::Approx(0.01));
    CHECK(eval_rate_expr("N^-3", 10) == doctest::Approx(1e-3));
    CHECK(eval_rate_expr("2*N - 1", 5) == 9.0);
    CHECK(eval_rate_expr("(N + 1) / 2", 9) == 5.0);
    CHECK(eval_rate_expr("0.5", 123) == 0.5);
    CHECK(eval_rate_expr(" 3 * N ^ 2 ", 4) == 48.0);
    CHECK(eval_rate_expr("-(1 - 2)", 1) == 1.0);

    CHECK_THROWS_AS(eval_rate_expr("N^", 10), ParseError);
    CHECK_THROWS_AS(eval_rate_expr("N^x", 10), ParseError);
    CHECK_THROWS_AS(eval_rate_expr("1e3", 10), ParseError);
    CHECK_THROWS_AS(eval_rate_expr("2 +", 10), ParseError);
    CHECK_THROWS_AS(eval_rate_expr("(N", 10), ParseError);
    CHECK_THROWS_AS(eval_rate_expr("N N", 10), ParseError);
    CHECK_THROWS_AS(eval_rate_expr("1/0", 10), ParseError);
}

TEST_CASE("builtin fixtures") {
    SUBCASE("ex5 matches the published rate table") {
        Chain chain = instantiate(builtin_family("ex5")).chain_at(10);
        CHECK(chain.rate(chain.index_of("1"), chain.index_of("2")) == doctest::Approx(1e-2));
        CHECK(chain.rate(chain.index_of("3"), chain.index_of("2")) == doctest::Approx(1e-3));
        CHECK(chain.rate(chain.index_of("3"), chain.index_of("4")) == doctest::Approx(0.1));
        CHECK(chain.rate(chain.index_of("5"), chain.index_of("4")) == doctest::Approx(0.1));
        CHECK(chain.rate(chain.index_of("2"), chain.index_of("1")) == 1.0);
        CHECK(chain.rate(chain.index_of("2"), chain.index_of("3")) == 1.0);
        CHECK(chain.rate(chain.index_of("4"), chain.index_of("3")) == 1.0);
        CHECK(chain.rate(chain.index_of("4"), chain.index_of("5")) == 1.0);
        CHECK(chain.rate(chain.index_of("1"), chain.index_of("3")) == 0.0);
    }

    SUBCASE("every builtin instantiates over its grid") {
        for (const auto& name : builtin_family_names()) {
            ChainFamily family = instantiate(builtin_family(name));
            for (long n : family.n_grid) {
                Chain chain = family.chain_at(n);
                CHECK(chain.size() >= 2);
            }
        }
    }

    SUBCASE("torus couples mirror cells at rate 1/theta") {
        FamilyDefinition def = builtin_family("torus2");
        def.dim = 1;
        def.theta_expr = "N^2";
        ChainFamily family = instantiate(def);
        const long n = 8;
        Chain chain = family.chain_at(n);
        CHECK(chain.size() == 2 * n);
        int plus = chain.index_of("(0,+)");
        int minus = chain.index_of("(0,-)");
        CHECK(chain.rate(plus, minus) == doctest::Approx(1.0 / (n * n)));
        CHECK(chain.rate(plus, chain.index_of("(1,+)")) == doctest::Approx(0.5));
        CHECK(chain.rate(plus, chain.index_of("(7,+)")) == doctest::Approx(0.5));

        StationaryMeasure mu = stationary_measure(chain);
        CHECK(mu.reversible);
        for (double v : mu.mu) CHECK(v == doctest::Approx(1.0 / chain.size()).epsilon(1e-9));

        MetaPartitionL partition = family.partition(n);
        REQUIRE(partition.wells.size() == 2);
        CHECK(partition.wells[0].size() == static_cast<std::size_t>(n));
    }

    SUBCASE("torus state cap") {
        FamilyDefinition def = builtin_family("torus2");
        def.dim = 3;
        def.n_grid = {64}; // 2 * 64^3 states exceed the default cap
        CHECK_THROWS_AS(instantiate(def), InvalidArgument);
    }

    SUBCASE("unknown builtin") {
        CHECK_THROWS_AS(builtin_family("ex99"), InvalidArgument);
    }
}

TEST_CASE("family definition round trip") {
    FamilyDefinition def;
    def.name = "double-well";
    def.tmpl.states = {"l", "m", "r"};
    def.tmpl.rates = {{"l", "m", "1/N"}, {"m", "l", "1"}, {"m", "r", "1"}, {"r", "m", "1/N"}};
    def.n_grid = {10, 100, 1000, 10000};
    def.wells = {{"l"}, {"r"}};
    def.attractors = {"l", "r"};
    def.valley = ValleySpecL{{"l"}, {"l", "m"}, "l"};
    def.notes = "two symmetric wells";

    std::string text = serialize_family_definition(def);
    FamilyDefinition parsed = parse_family_definition(text);
    CHECK(serialize_family_definition(parsed) == text);
    CHECK(parsed.tmpl.states == def.tmpl.states);
    CHECK(parsed.n_grid == def.n_grid);
    CHECK(parsed.wells == def.wells);
    REQUIRE(parsed.valley.has_value());
    CHECK(parsed.valley->basin == def.valley->basin);

    ChainFamily family = instantiate(parsed);
    Chain chain = family.chain_at(100);
    CHECK(chain.rate(chain.index_of("l"), chain.index_of("m")) == doctest::Approx(0.01));
}

TEST_CASE("family validation errors") {
    SUBCASE("negative rate expression") {
        FamilyDefinition def;
        def.name = "bad";
        def.tmpl.states = {"a", "b"};
        def.tmpl.rates = {{"a", "b", "1 - N"}, {"b", "a", "1"}};
        def.n_grid = {10, 100};
        CHECK_THROWS_AS(instantiate(def), NegativeRate);
    }

    SUBCASE("unknown state in a rule") {
        FamilyDefinition def;
        def.name = "bad";
        def.tmpl.states = {"a", "b"};
        def.tmpl.rates = {{"a", "z", "1"}, {"b", "a", "1"}};
        def.n_grid = {10};
        CHECK_THROWS_AS(instantiate(def), UnknownState);
    }

    SUBCASE("malformed document") {
        CHECK_THROWS_AS(parse_family_definition("{ not json"), ParseError);
        CHECK_THROWS_AS(parse_family_definition("{\"name\": \"x\", \"kind\": \"template\"}"),
                        ParseError);
    }
}
