#ifndef CTMETA_POTENTIAL_HPP
#define CTMETA_POTENTIAL_HPP

#include <span>
#include <vector>

#include "ctmeta/chain.hpp"
#include "ctmeta/trace.hpp"

namespace ctmeta {

/// Dirichlet form D(f) = 1/2 sum over eta, xi of mu(eta) R(eta, xi)
/// (f(xi) - f(eta))^2. Requires a reversible measure.
double dirichlet_form(const Chain& chain, const StationaryMeasure& mu,
                      std::span<const double> f);

/// f_AB: 1 on A, 0 on B, harmonic elsewhere; probabilistically
/// P_eta[tau_A < tau_B]. Values are asserted to lie in [0, 1] up to 1e-10
/// and never projected.
std::vector<double> equilibrium_potential(const Chain& chain, const StateSet& A,
                                          const StateSet& B);

struct CapacityReport {
    StateSet A, B;
    double cap = 0.0;          // Dirichlet form of the equilibrium potential
    double escape_value = 0.0; // independent route: sum_{eta in A} M(eta) P_eta[T+_B < T+_A]
    std::vector<double> potential;
    double residual = 0.0;     // max |L f| / lambda off the boundary
};

/// Capacity by two algorithms: the Dirichlet form of the equilibrium
/// potential and the return-race sum of Lemma-s01 type. An empty A or B
/// gives capacity 0 (the variational infimum is attained by constants).
CapacityReport capacity(const Chain& chain, const StationaryMeasure& mu, const StateSet& A,
                        const StateSet& B, const SolveOptions& options = {});

/// Cap(xi) = min over eta in W minus {xi} of Cap({eta}, {xi}).
double point_capacity(const Chain& chain, const StationaryMeasure& mu, const StateSet& W,
                      int xi);

/// Mean set rate of a trace: the h*mu-weighted average over A (base indices)
/// of the trace rate into B.
double mean_set_rate(const TraceChain& trace, const StationaryMeasure& base_mu,
                     const StateSet& A, const StateSet& B);

struct IdentityCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double residual = 0.0; // |lhs - rhs| / max(|lhs|, |rhs|), 0 when both vanish
};

/// mu(A) r_F(A,B) against 1/2 { Cap(A, F\A) + Cap(B, F\B) -
/// Cap(AuB, F\(AuB)) }; with F = A u B the last term is a capacity against
/// the empty set, which is 0.
IdentityCheck three_set_rate_identity(const Chain& chain, const StationaryMeasure& mu,
                                      const StateSet& F, const StateSet& A, const StateSet& B);

/// <h>_mu * Cap_h(A,B) against Cap(A,B), where Cap_h is computed on the
/// h-trace chain with its conditioned measure.
IdentityCheck h_capacity_scaling(const Chain& chain, const StationaryMeasure& mu,
                                 std::span<const double> h, const StateSet& A,
                                 const StateSet& B);

struct HittingIntegral {
    double value = 0.0;    // <g, f_AB>_mu / Cap(A,B)
    double mixed = 0.0;    // E_{nu_AB}[ integral of g until T_B ] via linear solves
    double residual = 0.0;
};

/// E_{nu_AB}[ integral of g until T_B ] = <g, f_AB>_mu / Cap(A,B), where
/// nu_AB(eta) = M(eta) P_eta[T+_B < T+_A] / Cap(A,B) on A.
HittingIntegral hitting_integral_formula(const Chain& chain, const StationaryMeasure& mu,
                                         const StateSet& A, const StateSet& B,
                                         std::span<const double> g);

} // namespace ctmeta

#endif
