#ifndef CTMETA_CHAIN_HPP
#define CTMETA_CHAIN_HPP

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctmeta/errors.hpp"
#include "ctmeta/state_set.hpp"

namespace ctmeta {

/// Sparse transition-rate description of a finite continuous-time Markov
/// chain. States are opaque labels kept in insertion order; rates are stored
/// only for ordered pairs (from, to) with from != to. Self-loop entries are
/// rejected: a self-jump does not change the law of the process and keeping
/// the generator convention unambiguous beats silently dropping them.
class ChainSpec {
public:
    ChainSpec() = default;
    explicit ChainSpec(const std::vector<std::string>& labels);

    /// Returns the index of the new state. Duplicate labels are an error.
    int add_state(const std::string& label);

    /// Upserts the rate for (from, to). Rates must be finite and >= 0.
    void set_rate(int from, int to, double rate);
    void set_rate(const std::string& from, const std::string& to, double rate);

    int size() const { return static_cast<int>(labels_.size()); }
    const std::string& label(int i) const { return labels_.at(static_cast<std::size_t>(i)); }
    const std::vector<std::string>& labels() const { return labels_; }
    bool has_state(const std::string& label) const { return index_.count(label) > 0; }
    int index_of(const std::string& label) const;

    /// 0 when no entry is stored.
    double rate(int from, int to) const;

    /// Outgoing entries of `from`, sorted by target index.
    std::span<const std::pair<int, double>> rates_from(int from) const;

    StateSet resolve(const std::vector<std::string>& labels) const;

private:
    std::vector<std::string> labels_;
    std::map<std::string, int> index_;
    std::vector<std::vector<std::pair<int, double>>> out_;
};

struct BuildOptions {
    /// Permit states with no outgoing rate (simulation-only fixtures).
    bool allow_absorbing = false;
    /// Verify strong connectivity of the positive-rate digraph.
    bool require_irreducible = true;
};

/// A validated chain: holding rates lambda(eta) = sum of outgoing rates and
/// jump probabilities p(eta, xi) = R(eta, xi) / lambda(eta). Immutable after
/// construction and safe to share across threads.
class Chain {
public:
    Chain() = default; // empty; assign from build_chain before use

    const ChainSpec& spec() const { return spec_; }
    int size() const { return spec_.size(); }
    const std::string& label(int i) const { return spec_.label(i); }
    int index_of(const std::string& label) const { return spec_.index_of(label); }
    StateSet resolve(const std::vector<std::string>& labels) const { return spec_.resolve(labels); }

    double holding(int i) const { return holding_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& holding() const { return holding_; }
    double max_holding() const { return max_holding_; }

    std::span<const std::pair<int, double>> rates_from(int i) const { return spec_.rates_from(i); }
    double rate(int from, int to) const { return spec_.rate(from, to); }
    double jump_prob(int from, int to) const {
        double lam = holding(from);
        return lam > 0 ? spec_.rate(from, to) / lam : 0.0;
    }

    bool irreducible() const { return irreducible_; }
    bool has_absorbing() const { return has_absorbing_; }

    /// Generator action (L f)(eta) = sum_xi R(eta, xi) (f(xi) - f(eta)).
    std::vector<double> apply_generator(std::span<const double> f) const;

    friend Chain build_chain(const ChainSpec&, const BuildOptions&);

private:
    ChainSpec spec_;
    std::vector<double> holding_;
    double max_holding_ = 0.0;
    bool irreducible_ = false;
    bool has_absorbing_ = false;
};

/// Validates the spec and computes holding rates and jump probabilities.
/// Throws ZeroHoldingRate or NotIrreducible (strict mode).
Chain build_chain(const ChainSpec& spec, const BuildOptions& options);
Chain build_chain(const ChainSpec& spec);

/// Stationary data of an irreducible chain: the invariant probability mu,
/// the jump-chain invariant measure M(eta) = lambda(eta) mu(eta), and a
/// reversibility verdict with the maximal relative detailed-balance residual.
struct StationaryMeasure {
    std::vector<double> mu;
    std::vector<double> jump_measure;
    bool reversible = false;
    double detailed_balance_residual = 0.0;
    /// max |(mu L)(xi)| / max holding rate, after the solve.
    double invariance_residual = 0.0;

    double mass(const StateSet& states) const {
        double m = 0.0;
        for (int s : states) m += mu[static_cast<std::size_t>(s)];
        return m;
    }
};

struct SolveOptions {
    double tolerance = 1e-10;            // relative residual accepted from the solver
    double reversibility_tolerance = 1e-8; // relative detailed-balance residual
};

/// Solves mu L = 0, sum mu = 1 by fixing mu(first state) = 1 and solving the
/// remaining sparse system with a direct factorization.
StationaryMeasure stationary_measure(const Chain& chain, const SolveOptions& options = {});

/// u(start) where L u = -g off `target` and u = 0 on `target`; this is
/// E_start[ integral of g(eta_s) ds until the first hit of `target` ].
double expected_additive_until_hitting(const Chain& chain, std::span<const double> g,
                                       int start, const StateSet& target);

/// The full vector u of the boundary-value problem above.
std::vector<double> expected_additive_vector(const Chain& chain, std::span<const double> g,
                                             const StateSet& target);

/// E_start[ integral of g(eta_s) ds over [0, t] ] by uniformization with a
/// dominating rate 1.05 * max lambda; the series is truncated when the
/// remaining Poisson tail weight drops below 1e-12.
double transient_functional(const Chain& chain, std::span<const double> g, int start, double t);
std::vector<double> transient_functional_vector(const Chain& chain, std::span<const double> g,
                                                double t);

/// P_start[ T+_B < T+_A ] for start in A, A and B disjoint.
double escape_probability(const Chain& chain, int start, const StateSet& A, const StateSet& B);

/// The same return-race probability for every state of A, from one solve.
std::vector<double> escape_probabilities(const Chain& chain, const StateSet& A, const StateSet& B);

/// Harmonic extension: 1 on `ones`, 0 on `zeros`, (L f) = 0 elsewhere.
std::vector<double> harmonic_extension(const Chain& chain, const StateSet& ones,
                                       const StateSet& zeros);

} // namespace ctmeta

#endif
