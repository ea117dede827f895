#include "ctmeta/potential.hpp"

#include <algorithm>
#include <cmath>

namespace ctmeta {

namespace {

double relative_gap(double lhs, double rhs) {
    double scale = std::max(std::abs(lhs), std::abs(rhs));
    return scale > 0.0 ? std::abs(lhs - rhs) / scale : 0.0;
}

void require_reversible(const StationaryMeasure& mu, const char* what) {
    if (!mu.reversible)
        throw NotReversible(std::string(what) + " requires a reversible measure (max " +
                            "detailed-balance residual " +
                            std::to_string(mu.detailed_balance_residual) + ")");
}

} // namespace

double dirichlet_form(const Chain& chain, const StationaryMeasure& mu,
                      std::span<const double> f) {
    require_reversible(mu, "the Dirichlet form");
    if (static_cast<int>(f.size()) != chain.size())
        throw InvalidArgument("function size does not match state count");
    double acc = 0.0;
    for (int i = 0; i < chain.size(); ++i) {
        for (const auto& [j, r] : chain.rates_from(i)) {
            double d = f[static_cast<std::size_t>(j)] - f[static_cast<std::size_t>(i)];
            acc += 0.5 * mu.mu[static_cast<std::size_t>(i)] * r * d * d;
        }
    }
    return acc;
}

std::vector<double> equilibrium_potential(const Chain& chain, const StateSet& A,
                                          const StateSet& B) {
    if (A.empty() || B.empty())
        throw InvalidArgument("equilibrium potential needs nonempty boundary sets");
    if (A.intersects(B)) throw OverlappingSets("boundary sets must be disjoint");
    auto f = harmonic_extension(chain, A, B);
    for (double v : f) {
        if (v < -1e-10 || v > 1.0 + 1e-10)
            throw SolverFailure("equilibrium potential escapes [0,1]: " + std::to_string(v));
    }
    return f;
}

CapacityReport capacity(const Chain& chain, const StationaryMeasure& mu, const StateSet& A,
                        const StateSet& B, const SolveOptions& options) {
    require_reversible(mu, "the capacity");
    if (A.intersects(B)) throw OverlappingSets("capacity sets must be disjoint");

    CapacityReport report;
    report.A = A;
    report.B = B;
    if (A.empty() || B.empty()) {
        // The constraint set contains the constants; the infimum is 0.
        report.potential.assign(static_cast<std::size_t>(chain.size()), A.empty() ? 0.0 : 1.0);
        return report;
    }

    report.potential = equilibrium_potential(chain, A, B);
    report.cap = dirichlet_form(chain, mu, report.potential);

    double residual = 0.0;
    auto lf = chain.apply_generator(report.potential);
    StateSet boundary = A.unioned(B);
    for (int i = 0; i < chain.size(); ++i) {
        if (boundary.contains(i)) continue;
        residual = std::max(residual, std::abs(lf[static_cast<std::size_t>(i)]) /
                                          std::max(chain.holding(i), 1e-300));
    }
    report.residual = residual;

    auto races = escape_probabilities(chain, A, B);
    double escape = 0.0;
    for (std::size_t k = 0; k < A.size(); ++k)
        escape += mu.jump_measure[static_cast<std::size_t>(A.items()[k])] * races[k];
    report.escape_value = escape;

    if (report.cap <= 0.0)
        throw SolverFailure("capacity is not positive; sets may be disconnected");
    if (relative_gap(report.cap, report.escape_value) > 1e4 * options.tolerance)
        throw SolverFailure("capacity algorithms disagree: Dirichlet " +
                            std::to_string(report.cap) + " vs escape " +
                            std::to_string(report.escape_value));
    return report;
}

double point_capacity(const Chain& chain, const StationaryMeasure& mu, const StateSet& W,
                      int xi) {
    if (!W.contains(xi)) throw InvalidArgument("the attractor must belong to the well");
    if (W.size() < 2)
        throw SingletonWell("point capacity needs at least two well states");
    double best = std::numeric_limits<double>::infinity();
    for (int eta : W) {
        if (eta == xi) continue;
        best = std::min(best, capacity(chain, mu, StateSet{eta}, StateSet{xi}).cap);
    }
    return best;
}

double mean_set_rate(const TraceChain& trace, const StationaryMeasure& base_mu,
                     const StateSet& A, const StateSet& B) {
    if (A.intersects(B)) throw OverlappingSets("mean set rate needs disjoint sets");
    if (A.empty()) throw InvalidArgument("mean set rate needs a nonempty source set");
    StateSet local_A = trace.to_local(A);
    StateSet local_B = trace.to_local(B);

    double weighted = 0.0, mass = 0.0;
    for (int a : local_A) {
        double w = trace.weight[static_cast<std::size_t>(a)] *
                   base_mu.mu[static_cast<std::size_t>(trace.support[static_cast<std::size_t>(a)])];
        double rate_into_B = 0.0;
        for (const auto& [b, r] : trace.chain.rates_from(a))
            if (local_B.contains(b)) rate_into_B += r;
        weighted += w * rate_into_B;
        mass += w;
    }
    if (mass <= 0.0) throw SolverFailure("source set has zero conditioned mass");
    return weighted / mass;
}

IdentityCheck three_set_rate_identity(const Chain& chain, const StationaryMeasure& mu,
                                      const StateSet& F, const StateSet& A,
                                      const StateSet& B) {
    if (!A.subset_of(F) || !B.subset_of(F))
        throw InvalidArgument("A and B must be subsets of F");
    if (A.intersects(B)) throw OverlappingSets("A and B must be disjoint");

    TraceChain trace = trace_by_hitting(chain, F);
    IdentityCheck check;
    check.lhs = mu.mass(A) * mean_set_rate(trace, mu, A, B);

    StateSet ab = A.unioned(B);
    double cap_a = capacity(chain, mu, A, F.minus(A)).cap;
    double cap_b = capacity(chain, mu, B, F.minus(B)).cap;
    double cap_ab = capacity(chain, mu, ab, F.minus(ab)).cap; // 0 when F = A u B
    check.rhs = 0.5 * (cap_a + cap_b - cap_ab);
    check.residual = relative_gap(check.lhs, check.rhs);
    return check;
}

IdentityCheck h_capacity_scaling(const Chain& chain, const StationaryMeasure& mu,
                                 std::span<const double> h, const StateSet& A,
                                 const StateSet& B) {
    TraceChain trace = h_trace(chain, h);
    StationaryMeasure trace_mu = trace_stationary(trace, mu);
    double mean_h = 0.0;
    for (int i = 0; i < chain.size(); ++i)
        mean_h += h[static_cast<std::size_t>(i)] * mu.mu[static_cast<std::size_t>(i)];

    CapacityReport cap_h =
        capacity(trace.chain, trace_mu, trace.to_local(A), trace.to_local(B));
    CapacityReport cap = capacity(chain, mu, A, B);

    IdentityCheck check;
    check.lhs = mean_h * cap_h.cap;
    check.rhs = cap.cap;
    check.residual = relative_gap(check.lhs, check.rhs);
    return check;
}

HittingIntegral hitting_integral_formula(const Chain& chain, const StationaryMeasure& mu,
                                         const StateSet& A, const StateSet& B,
                                         std::span<const double> g) {
    if (static_cast<int>(g.size()) != chain.size())
        throw InvalidArgument("integrand size does not match state count");
    CapacityReport report = capacity(chain, mu, A, B);

    HittingIntegral out;
    double inner = 0.0;
    for (int i = 0; i < chain.size(); ++i)
        inner += g[static_cast<std::size_t>(i)] * report.potential[static_cast<std::size_t>(i)] *
                 mu.mu[static_cast<std::size_t>(i)];
    out.value = inner / report.cap;

    // Other route: mix E_eta[ int g until T_B ] over the harmonic measure
    // nu_AB(eta) = M(eta) P_eta[T+_B < T+_A] / cap.
    auto races = escape_probabilities(chain, A, B);
    auto u = expected_additive_vector(chain, g, B);
    double mixed = 0.0;
    for (std::size_t k = 0; k < A.size(); ++k) {
        int eta = A.items()[k];
        double nu = mu.jump_measure[static_cast<std::size_t>(eta)] * races[k] / report.cap;
        mixed += nu * u[static_cast<std::size_t>(eta)];
    }
    out.mixed = mixed;
    out.residual = relative_gap(out.value, out.mixed);
    return out;
}

} // namespace ctmeta
