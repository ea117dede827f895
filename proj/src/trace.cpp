#include "ctmeta/trace.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <map>

namespace ctmeta {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

TraceChain assemble_trace(const Chain& base, const StateSet& F,
                          const std::vector<std::map<int, double>>& rates,
                          std::vector<double> weight, const TraceOptions& options) {
    TraceChain trace;
    trace.support.assign(F.begin(), F.end());
    trace.weight = std::move(weight);

    ChainSpec spec;
    for (int s : trace.support) spec.add_state(base.label(s));
    for (std::size_t a = 0; a < trace.support.size(); ++a) {
        double lambda = 0.0;
        for (const auto& [b, r] : rates[a]) lambda += r;
        for (const auto& [b, r] : rates[a]) {
            double value = std::max(r, 0.0);
            if (options.truncate && value < options.truncation_ratio * lambda) value = 0.0;
            if (value > 0.0) spec.set_rate(static_cast<int>(a), b, value);
        }
    }
    // The trace inherits irreducibility from the base chain; absorbing
    // support states can only appear when the base chain has them.
    BuildOptions build;
    build.allow_absorbing = true;
    build.require_irreducible = false;
    trace.chain = build_chain(spec, build);
    if (base.irreducible() && trace.chain.has_absorbing() && trace.support.size() > 1)
        throw SolverFailure("trace construction lost irreducibility");
    return trace;
}

} // namespace

int TraceChain::local_index(int base_index) const {
    auto it = std::lower_bound(support.begin(), support.end(), base_index);
    if (it == support.end() || *it != base_index)
        throw InvalidArgument("state is not in the trace support");
    return static_cast<int>(it - support.begin());
}

StateSet TraceChain::to_local(const StateSet& base_set) const {
    std::vector<int> out;
    out.reserve(base_set.size());
    for (int s : base_set) out.push_back(local_index(s));
    return StateSet(std::move(out));
}

TraceChain trace_by_hitting(const Chain& chain, const StateSet& F, const TraceOptions& options) {
    if (F.empty()) throw EmptySupport("trace support must be nonempty");
    const int n = chain.size();
    const int m = static_cast<int>(F.size());
    StateSet outside = F.complement(n);

    std::vector<std::map<int, double>> rates(static_cast<std::size_t>(m));
    std::vector<int> local_of(static_cast<std::size_t>(n), -1);
    {
        int l = 0;
        for (int s : F) local_of[static_cast<std::size_t>(s)] = l++;
    }

    if (outside.empty()) {
        for (int a = 0; a < m; ++a) {
            int i = F.items()[static_cast<std::size_t>(a)];
            for (const auto& [j, r] : chain.rates_from(i))
                rates[static_cast<std::size_t>(a)][local_of[static_cast<std::size_t>(j)]] = r;
        }
        return assemble_trace(chain, F, rates, std::vector<double>(F.size(), 1.0), options);
    }

    // One factorization of the off-support generator block, |F| right-hand
    // sides: column xi solves P_zeta[T_F = T_xi] on the complement.
    const auto& out_rows = outside.items();
    std::vector<int> pos(static_cast<std::size_t>(n), -1);
    for (int k = 0; k < static_cast<int>(out_rows.size()); ++k)
        pos[static_cast<std::size_t>(out_rows[static_cast<std::size_t>(k)])] = k;

    std::vector<Triplet> triplets;
    for (int k = 0; k < static_cast<int>(out_rows.size()); ++k) {
        int i = out_rows[static_cast<std::size_t>(k)];
        triplets.emplace_back(k, k, -chain.holding(i));
        for (const auto& [j, r] : chain.rates_from(i)) {
            int lj = pos[static_cast<std::size_t>(j)];
            if (lj >= 0) triplets.emplace_back(k, lj, r);
        }
    }
    SpMat mat(static_cast<int>(out_rows.size()), static_cast<int>(out_rows.size()));
    mat.setFromTriplets(triplets.begin(), triplets.end());
    mat.makeCompressed();

    Eigen::MatrixXd rhs =
        Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(out_rows.size()), m);
    for (int k = 0; k < static_cast<int>(out_rows.size()); ++k) {
        int i = out_rows[static_cast<std::size_t>(k)];
        for (const auto& [j, r] : chain.rates_from(i)) {
            int lj = local_of[static_cast<std::size_t>(j)];
            if (lj >= 0) rhs(k, lj) -= r;
        }
    }

    Eigen::SparseLU<SpMat> solver;
    solver.compute(mat);
    if (solver.info() != Eigen::Success)
        throw SolverFailure("trace hitting-probability factorization failed");
    Eigen::MatrixXd hit = solver.solve(rhs);
    if (solver.info() != Eigen::Success)
        throw SolverFailure("trace hitting-probability solve failed");

    // The solve leaves noise on structural zeros (targets unreachable through
    // the complement); restore them by a reverse reachability pass per target.
    {
        std::vector<std::vector<int>> preds(out_rows.size());
        for (int k = 0; k < static_cast<int>(out_rows.size()); ++k) {
            int i = out_rows[static_cast<std::size_t>(k)];
            for (const auto& [j, r] : chain.rates_from(i)) {
                (void)r;
                int lj = pos[static_cast<std::size_t>(j)];
                if (lj >= 0) preds[static_cast<std::size_t>(lj)].push_back(k);
            }
        }
        std::vector<char> reachable(out_rows.size());
        std::vector<int> frontier;
        for (int b = 0; b < m; ++b) {
            std::fill(reachable.begin(), reachable.end(), 0);
            frontier.clear();
            int xi = F.items()[static_cast<std::size_t>(b)];
            for (int k = 0; k < static_cast<int>(out_rows.size()); ++k) {
                int i = out_rows[static_cast<std::size_t>(k)];
                if (chain.rate(i, xi) > 0.0) {
                    reachable[static_cast<std::size_t>(k)] = 1;
                    frontier.push_back(k);
                }
            }
            while (!frontier.empty()) {
                int k = frontier.back();
                frontier.pop_back();
                for (int p : preds[static_cast<std::size_t>(k)]) {
                    if (!reachable[static_cast<std::size_t>(p)]) {
                        reachable[static_cast<std::size_t>(p)] = 1;
                        frontier.push_back(p);
                    }
                }
            }
            for (int k = 0; k < static_cast<int>(out_rows.size()); ++k)
                if (!reachable[static_cast<std::size_t>(k)]) hit(k, b) = 0.0;
        }
    }

    for (int a = 0; a < m; ++a) {
        int i = F.items()[static_cast<std::size_t>(a)];
        auto& row = rates[static_cast<std::size_t>(a)];
        for (const auto& [j, r] : chain.rates_from(i)) {
            int lj = local_of[static_cast<std::size_t>(j)];
            if (lj >= 0) {
                row[lj] += r;
            } else {
                int k = pos[static_cast<std::size_t>(j)];
                for (int b = 0; b < m; ++b) {
                    if (b == a) continue;
                    double p = hit(k, b);
                    if (p > 0.0) row[b] += r * p;
                }
            }
        }
    }
    return assemble_trace(chain, F, rates, std::vector<double>(F.size(), 1.0), options);
}

TraceChain trace_by_elimination_ordered(const Chain& chain, const StateSet& F,
                                        std::span<const int> order,
                                        const TraceOptions& options) {
    if (F.empty()) throw EmptySupport("trace support must be nonempty");
    const int n = chain.size();
    StateSet outside = F.complement(n);
    if (order.size() != outside.size())
        throw InvalidArgument("elimination order must list exactly the states outside F");
    {
        StateSet check(std::vector<int>(order.begin(), order.end()));
        if (!(check == outside))
            throw InvalidArgument("elimination order must be a permutation of E minus F");
    }

    // Working rates over the full index range, shrunk one state at a time.
    std::vector<std::map<int, double>> work(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (const auto& [j, r] : chain.rates_from(i)) work[static_cast<std::size_t>(i)][j] = r;
    std::vector<std::map<int, double>> incoming(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (const auto& [j, r] : work[static_cast<std::size_t>(i)])
            incoming[static_cast<std::size_t>(j)][i] = r;
    std::vector<bool> removed(static_cast<std::size_t>(n), false);

    for (int victim : order) {
        auto& out = work[static_cast<std::size_t>(victim)];
        double lambda = 0.0;
        for (const auto& [j, r] : out) lambda += r;
        if (lambda <= 0.0) throw ZeroHoldingRate(chain.label(victim));

        // R'(eta, xi) = R(eta, xi) + R(eta, victim) * p(victim, xi)
        for (const auto& [eta, r_in] : incoming[static_cast<std::size_t>(victim)]) {
            if (removed[static_cast<std::size_t>(eta)]) continue;
            for (const auto& [xi, r_out] : out) {
                if (xi == eta) continue;
                double add = r_in * (r_out / lambda);
                if (add <= 0.0) continue;
                work[static_cast<std::size_t>(eta)][xi] += add;
                incoming[static_cast<std::size_t>(xi)][eta] =
                    work[static_cast<std::size_t>(eta)][xi];
            }
            work[static_cast<std::size_t>(eta)].erase(victim);
        }
        for (const auto& [xi, r_out] : out) {
            (void)r_out;
            incoming[static_cast<std::size_t>(xi)].erase(victim);
        }
        out.clear();
        incoming[static_cast<std::size_t>(victim)].clear();
        removed[static_cast<std::size_t>(victim)] = true;
    }

    std::vector<std::map<int, double>> rates(F.size());
    std::vector<int> local_of(static_cast<std::size_t>(n), -1);
    {
        int l = 0;
        for (int s : F) local_of[static_cast<std::size_t>(s)] = l++;
    }
    for (std::size_t a = 0; a < F.size(); ++a) {
        int i = F.items()[a];
        for (const auto& [j, r] : work[static_cast<std::size_t>(i)])
            rates[a][local_of[static_cast<std::size_t>(j)]] = r;
    }
    return assemble_trace(chain, F, rates, std::vector<double>(F.size(), 1.0), options);
}

TraceChain trace_by_elimination(const Chain& chain, const StateSet& F,
                                const TraceOptions& options) {
    StateSet outside = F.complement(chain.size());
    return trace_by_elimination_ordered(chain, F, outside.items(), options);
}

TraceChain h_trace(const Chain& chain, std::span<const double> h, const TraceOptions& options) {
    if (static_cast<int>(h.size()) != chain.size())
        throw InvalidArgument("weight size does not match state count");
    std::vector<int> support;
    for (int i = 0; i < chain.size(); ++i) {
        double w = h[static_cast<std::size_t>(i)];
        if (!std::isfinite(w) || w < 0.0)
            throw InvalidArgument("weights must be finite and nonnegative");
        if (w > 0.0) support.push_back(i);
    }
    if (support.empty()) throw EmptySupport("weight function has empty support");
    StateSet F(std::move(support));

    // R^h(eta, xi) = lambda(eta)/h(eta) P_eta[T+_F = T+_xi] = R^F(eta, xi)/h(eta),
    // so the h-trace is the set trace with rows rescaled by the weight.
    TraceChain set_trace = trace_by_hitting(chain, F, TraceOptions{false, 0.0});

    std::vector<std::map<int, double>> rates(F.size());
    std::vector<double> weight(F.size());
    for (std::size_t a = 0; a < F.size(); ++a) {
        double w = h[static_cast<std::size_t>(F.items()[a])];
        weight[a] = w;
        for (const auto& [b, r] : set_trace.chain.rates_from(static_cast<int>(a)))
            rates[a][b] = r / w;
    }
    return assemble_trace(chain, F, rates, std::move(weight), options);
}

StationaryMeasure trace_stationary(const TraceChain& trace, const StationaryMeasure& base,
                                   const SolveOptions& options) {
    const std::size_t m = trace.support.size();
    if (base.mu.size() < m) throw InvalidArgument("base measure does not match the trace");

    StationaryMeasure result;
    result.mu.resize(m);
    double total = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
        double v = trace.weight[a] * base.mu[static_cast<std::size_t>(trace.support[a])];
        result.mu[a] = v;
        total += v;
    }
    if (total <= 0.0) throw SolverFailure("conditioned measure has zero mass");
    for (double& v : result.mu) v /= total;

    // Verify the conditioned measure kills the trace generator.
    const Chain& tc = trace.chain;
    std::vector<double> flow(m, 0.0);
    for (int i = 0; i < tc.size(); ++i) {
        double mi = result.mu[static_cast<std::size_t>(i)];
        flow[static_cast<std::size_t>(i)] -= mi * tc.holding(i);
        for (const auto& [j, r] : tc.rates_from(i)) flow[static_cast<std::size_t>(j)] += mi * r;
    }
    double residual = 0.0;
    for (double v : flow) residual = std::max(residual, std::abs(v));
    result.invariance_residual = residual / std::max(tc.max_holding(), 1e-300);
    if (result.invariance_residual > options.tolerance)
        throw SolverFailure("conditioned trace measure fails invariance: residual " +
                            std::to_string(result.invariance_residual));

    result.jump_measure.resize(m);
    for (int i = 0; i < tc.size(); ++i)
        result.jump_measure[static_cast<std::size_t>(i)] =
            tc.holding(i) * result.mu[static_cast<std::size_t>(i)];

    double db = 0.0;
    for (int i = 0; i < tc.size(); ++i) {
        for (const auto& [j, r] : tc.rates_from(i)) {
            double f1 = result.mu[static_cast<std::size_t>(i)] * r;
            double f2 = result.mu[static_cast<std::size_t>(j)] * tc.rate(j, i);
            double scale = std::max(f1, f2);
            if (scale > 0.0) db = std::max(db, std::abs(f1 - f2) / scale);
        }
    }
    result.detailed_balance_residual = db;
    result.reversible = db <= options.reversibility_tolerance;
    return result;
}

PathSample extract_trace_path(const PathSample& path, const StateSet& A) {
    if (A.empty()) throw EmptySupport("trace support must be nonempty");
    PathSample out;
    out.stop_reason = path.stop_reason;
    out.final_state = path.final_state;

    bool seen_support = false;
    bool leading_dropped = false;
    double total = 0.0; // left fold over kept durations, matching occupation_time
    for (const auto& seg : path.segments) {
        if (!A.contains(seg.state)) {
            if (!seen_support) leading_dropped = true;
            continue;
        }
        seen_support = true;
        if (!out.segments.empty() && out.segments.back().state == seg.state)
            out.segments.back().duration += seg.duration;
        else
            out.segments.push_back(seg);
        total += seg.duration;
    }
    if (!seen_support) {
        if (path.final_state >= 0 && A.contains(path.final_state)) {
            // Path ended on arrival in A without holding there.
            out.start = path.final_state;
            out.horizon = 0.0;
            out.leading_segment_dropped = leading_dropped;
            return out;
        }
        throw NeverVisitsA("path never visits the trace support");
    }
    out.start = out.segments.front().state;
    out.horizon = total;
    out.leading_segment_dropped = leading_dropped;
    return out;
}

double occupation_time(const PathSample& path, const StateSet& states) {
    double total = 0.0;
    for (const auto& seg : path.segments)
        if (states.contains(seg.state)) total += seg.duration;
    return total;
}

} // namespace ctmeta
