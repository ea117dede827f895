#ifndef CTMETA_TESTS_HELPERS_HPP
#define CTMETA_TESTS_HELPERS_HPP

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ctmeta/chain.hpp"
#include "ctmeta/families.hpp"

namespace ctmeta::testing {

inline Chain builtin_chain(const std::string& name, long n) {
    FamilyDefinition def = builtin_family(name);
    return instantiate(def).chain_at(n);
}

/// Random reversible chain: conductances on a random connected graph over
/// random vertex weights, rates R(i,j) = c(i,j) / m(i).
inline Chain random_reversible_chain(std::mt19937_64& rng, int min_states = 4,
                                     int max_states = 12) {
    std::uniform_int_distribution<int> size_dist(min_states, max_states);
    std::uniform_real_distribution<double> log_weight(-2.0, 2.0);
    const int n = size_dist(rng);

    std::vector<double> weight(static_cast<std::size_t>(n));
    for (double& w : weight) w = std::exp(log_weight(rng));

    ChainSpec spec;
    for (int i = 0; i < n; ++i) spec.add_state("s" + std::to_string(i));

    std::vector<std::pair<int, int>> edges;
    for (int i = 1; i < n; ++i) {
        std::uniform_int_distribution<int> parent(0, i - 1);
        edges.push_back({parent(rng), i});
    }
    std::uniform_int_distribution<int> vertex(0, n - 1);
    int extra = n / 2;
    for (int k = 0; k < extra; ++k) {
        int a = vertex(rng), b = vertex(rng);
        if (a == b) continue;
        edges.push_back({std::min(a, b), std::max(a, b)});
    }

    for (auto [a, b] : edges) {
        double c = std::exp(log_weight(rng));
        spec.set_rate(a, b, c / weight[static_cast<std::size_t>(a)]);
        spec.set_rate(b, a, c / weight[static_cast<std::size_t>(b)]);
    }
    return build_chain(spec);
}

/// Random irreducible chain, generally non-reversible: a covering cycle plus
/// random extra directed edges.
inline Chain random_chain(std::mt19937_64& rng, int min_states = 4, int max_states = 10) {
    std::uniform_int_distribution<int> size_dist(min_states, max_states);
    std::uniform_real_distribution<double> rate_dist(0.1, 5.0);
    const int n = size_dist(rng);

    ChainSpec spec;
    for (int i = 0; i < n; ++i) spec.add_state("s" + std::to_string(i));
    for (int i = 0; i < n; ++i) spec.set_rate(i, (i + 1) % n, rate_dist(rng));
    std::uniform_int_distribution<int> vertex(0, n - 1);
    for (int k = 0; k < n; ++k) {
        int a = vertex(rng), b = vertex(rng);
        if (a == b) continue;
        spec.set_rate(a, b, rate_dist(rng));
    }
    return build_chain(spec);
}

/// Random subset of the given size (at least 1 element).
inline StateSet random_subset(std::mt19937_64& rng, int n, int size) {
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(static_cast<std::size_t>(std::max(1, std::min(size, n))));
    return StateSet(std::move(all));
}

inline double relative_gap(double a, double b) {
    double scale = std::max(std::abs(a), std::abs(b));
    return scale > 0 ? std::abs(a - b) / scale : 0.0;
}

} // namespace ctmeta::testing

#endif
