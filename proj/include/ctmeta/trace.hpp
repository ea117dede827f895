#ifndef CTMETA_TRACE_HPP
#define CTMETA_TRACE_HPP

#include <span>
#include <vector>

#include "ctmeta/chain.hpp"
#include "ctmeta/path.hpp"

namespace ctmeta {

struct TraceOptions {
    /// Drop computed trace rates below truncation_ratio * lambda(eta) to keep
    /// sparsity. Equivalence tests run with truncation disabled.
    bool truncate = true;
    double truncation_ratio = 1e-14;
};

/// The chain watched only while in a subset F (or weighted by h >= 0 with
/// support F). `chain` is a full Chain over the support states; `support`
/// maps its indices back to base-chain indices.
struct TraceChain {
    std::vector<int> support;    // base indices, ascending
    std::vector<double> weight;  // h restricted to support (all 1 for a set trace)
    Chain chain;

    int local_index(int base_index) const;
    StateSet to_local(const StateSet& base_set) const;
};

/// Rates via Corollary-style harmonic solves: R^F(eta, xi) = R(eta, xi) +
/// sum over zeta outside F of R(eta, zeta) P_zeta[T_F = T_xi]. One
/// factorization of the off-support system serves all |F| right-hand sides.
TraceChain trace_by_hitting(const Chain& chain, const StateSet& F,
                            const TraceOptions& options = {});

/// Rates by eliminating the states outside F one at a time with the
/// single-state formula R'(eta, xi) = R(eta, xi) + R(eta, xi0) p(xi0, xi).
/// The result does not depend on the elimination order; states are removed
/// in input order.
TraceChain trace_by_elimination(const Chain& chain, const StateSet& F,
                                const TraceOptions& options = {});

/// Same, with an explicit elimination order (base indices of E minus F).
TraceChain trace_by_elimination_ordered(const Chain& chain, const StateSet& F,
                                        std::span<const int> order,
                                        const TraceOptions& options = {});

/// Trace weighted by a nonnegative function h: rates R^h(eta, xi) =
/// lambda(eta)/h(eta) * P_eta[T+_F = T+_xi] where F is the support of h.
TraceChain h_trace(const Chain& chain, std::span<const double> h,
                   const TraceOptions& options = {});

/// The invariant measure of the trace: h * mu restricted to the support,
/// normalized. Verifies invariance against the trace generator and attaches
/// the reversibility verdict of the trace chain.
StationaryMeasure trace_stationary(const TraceChain& trace, const StationaryMeasure& base,
                                   const SolveOptions& options = {});

/// Restriction of a simulated path to the states of A, excising excursions
/// outside A. A leading segment outside A is dropped and flagged. The total
/// duration of the result equals occupation_time(path, A) bit-exactly.
PathSample extract_trace_path(const PathSample& path, const StateSet& A);

} // namespace ctmeta

#endif
