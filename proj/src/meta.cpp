#include "ctmeta/meta.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctmeta/trace.hpp"

namespace ctmeta {

namespace {

bool effectively_zero(const std::vector<double>& values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return v <= 1e-300; });
}

std::vector<double> indicator(int n, const StateSet& set) {
    std::vector<double> f(static_cast<std::size_t>(n), 0.0);
    for (int s : set) f[static_cast<std::size_t>(s)] = 1.0;
    return f;
}

double sup_over(const std::vector<double>& values, const StateSet& states) {
    double best = 0.0;
    for (int s : states) best = std::max(best, values[static_cast<std::size_t>(s)]);
    return best;
}

} // namespace

StateSet MetaPartition::metastates() const {
    StateSet all;
    for (const auto& w : wells) all = all.unioned(w);
    return all;
}

ValleySpec resolve_valley(const Chain& chain, const ValleySpecL& labels) {
    ValleySpec v;
    v.well = chain.resolve(labels.well);
    v.basin = chain.resolve(labels.basin);
    v.attractor = chain.index_of(labels.attractor);
    if (v.well.empty()) throw InvalidArgument("valley well must be nonempty");
    if (!v.well.subset_of(v.basin)) throw InvalidArgument("well must be a subset of the basin");
    if (static_cast<int>(v.basin.size()) >= chain.size())
        throw InvalidArgument("basin must be a proper subset of the state space");
    if (!v.well.contains(v.attractor))
        throw InvalidArgument("attractor must belong to the well");
    return v;
}

MetaPartition resolve_partition(const Chain& chain, const MetaPartitionL& labels) {
    if (labels.wells.size() < 2)
        throw InvalidArgument("a metastate partition needs at least two wells");
    if (labels.attractors.size() != labels.wells.size())
        throw InvalidArgument("one attractor per well is required");
    MetaPartition partition;
    StateSet seen;
    for (std::size_t x = 0; x < labels.wells.size(); ++x) {
        StateSet well = chain.resolve(labels.wells[x]);
        if (well.empty()) throw InvalidArgument("metastates must be nonempty");
        if (seen.intersects(well)) throw OverlappingSets("metastates must be pairwise disjoint");
        seen = seen.unioned(well);
        int xi = chain.index_of(labels.attractors[x]);
        if (!well.contains(xi)) throw InvalidArgument("attractor must belong to its well");
        partition.wells.push_back(std::move(well));
        partition.attractors.push_back(xi);
    }
    return partition;
}

Chain ChainFamily::chain_at(long n) const {
    if (!generator) throw InvalidArgument("family has no generator");
    return build_chain(generator(n), build_options);
}

std::vector<long> default_n_grid() { return {10, 32, 100, 316, 1000}; }

ScaleFit scale_fit(std::span<const long> ns, std::span<const double> values) {
    if (ns.size() != values.size()) throw InvalidArgument("grid and value sizes differ");
    if (ns.size() < 4) throw InvalidArgument("scale fit needs at least 4 grid points");
    for (double v : values)
        if (!(v > 0.0)) throw NonPositiveValue("scale fit needs strictly positive values");

    const std::size_t m = ns.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < m; ++i) {
        double x = std::log(static_cast<double>(ns[i]));
        double y = std::log(values[i]);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    double denom = m * sxx - sx * sx;
    if (denom <= 0.0) throw InvalidArgument("grid points must be distinct");
    ScaleFit fit;
    fit.exponent = (m * sxy - sx * sy) / denom;
    double intercept = (sy - fit.exponent * sx) / m;
    fit.prefactor = std::exp(intercept);

    double rss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double x = std::log(static_cast<double>(ns[i]));
        double e = std::log(values[i]) - (intercept + fit.exponent * x);
        rss += e * e;
    }
    fit.residual = std::sqrt(rss / m);
    fit.low_confidence = fit.residual > kFitResidualThreshold;
    if (fit.exponent < kVanishExponent)
        fit.verdict = ScaleVerdict::Vanishes;
    else if (fit.exponent > -kVanishExponent)
        fit.verdict = ScaleVerdict::Diverges;
    else
        fit.verdict = ScaleVerdict::Converges;
    return fit;
}

SequenceCheck make_sequence_check(std::string name, int well, std::span<const long> ns,
                                  std::vector<double> values, std::string note) {
    SequenceCheck check;
    check.name = std::move(name);
    check.well = well;
    check.note = std::move(note);
    if (effectively_zero(values)) {
        check.holds = true;
        if (check.note.empty()) check.note = "identically zero";
    } else {
        check.fit = scale_fit(ns, values);
        check.holds = check.fit->verdict == ScaleVerdict::Vanishes && !check.fit->low_confidence;
    }
    check.values = std::move(values);
    return check;
}

ValleyDepthResult valley_depth(const Chain& chain, const StationaryMeasure& mu,
                               const ValleySpec& valley) {
    StateSet outside = valley.basin.complement(chain.size());
    StateSet support = valley.well.unioned(outside);

    TraceChain trace = trace_by_hitting(chain, support);
    double rate = mean_set_rate(trace, mu, valley.well, outside);
    if (rate <= 0.0) throw SolverFailure("well never escapes the basin");

    ValleyDepthResult result;
    result.via_trace = 1.0 / rate;
    if (mu.reversible) {
        double cap = capacity(chain, mu, valley.well, outside).cap;
        result.via_capacity = mu.mass(valley.well) / cap;
        result.depth = *result.via_capacity;
    } else {
        result.depth = result.via_trace;
    }
    return result;
}

ValleyReport check_valley_conditions(const ChainFamily& family, const ValleySpecL& valley,
                                     ValleyMode mode) {
    ValleyReport report;
    report.family = family.label;
    report.mode = mode;
    report.grid = family.n_grid.empty() ? default_n_grid() : family.n_grid;

    std::vector<double> cc1, cc2, ccb, cap_ratio, measure_ratio;
    for (long n : report.grid) {
        Chain chain = family.chain_at(n);
        StationaryMeasure mu = stationary_measure(chain);
        ValleySpec spec = resolve_valley(chain, valley);
        StateSet outside = spec.basin.complement(chain.size());
        StateSet annulus = spec.basin.minus(spec.well);
        StateSet support = spec.well.unioned(outside);

        TraceChain trace = trace_by_hitting(chain, support);
        double rate = mean_set_rate(trace, mu, spec.well, outside);
        report.depth_via_trace.push_back(rate > 0 ? 1.0 / rate : 0.0);

        if (mode == ValleyMode::Reversible) {
            if (!mu.reversible)
                throw ModeMismatch("reversible mode on a non-reversible family (residual " +
                                   std::to_string(mu.detailed_balance_residual) + ")");
            double cap = capacity(chain, mu, spec.well, outside).cap;
            report.depth_via_capacity.push_back(mu.mass(spec.well) / cap);
            double cap_xi = spec.well.size() >= 2
                                ? point_capacity(chain, mu, spec.well, spec.attractor)
                                : std::numeric_limits<double>::infinity();
            cap_ratio.push_back(std::isfinite(cap_xi) ? cap / cap_xi : 0.0);
            measure_ratio.push_back(mu.mass(annulus) / mu.mass(spec.well));
            report.depth.push_back(report.depth_via_capacity.back());
        } else {
            if (mu.reversible) {
                double cap = capacity(chain, mu, spec.well, outside).cap;
                report.depth_via_capacity.push_back(mu.mass(spec.well) / cap);
            }
            report.depth.push_back(report.depth_via_trace.back());

            // Escape rate of the trace from each well state into B^c.
            const Chain& tc = trace.chain;
            StateSet local_well = trace.to_local(spec.well);
            StateSet local_out = trace.to_local(outside);
            std::vector<double> escape_rate(static_cast<std::size_t>(tc.size()), 0.0);
            for (int a : local_well) {
                double s = 0.0;
                for (const auto& [b, r] : tc.rates_from(a))
                    if (local_out.contains(b)) s += r;
                escape_rate[static_cast<std::size_t>(a)] = s;
            }
            int local_xi = trace.local_index(spec.attractor);

            auto u1 = expected_additive_vector(tc, escape_rate, StateSet{local_xi});
            cc1.push_back(sup_over(u1, local_well));

            auto u2 = expected_additive_vector(tc, indicator(tc.size(), local_well),
                                               StateSet{local_xi});
            cc2.push_back(rate * sup_over(u2, local_well));

            auto u3 =
                expected_additive_vector(chain, indicator(chain.size(), annulus), outside);
            ccb.push_back(rate * sup_over(u3, spec.well));
        }
    }

    if (mode == ValleyMode::Reversible) {
        report.conditions.push_back(make_sequence_check(
            "capacity_ratio", -1, report.grid, cap_ratio, "Cap(W, B^c) / Cap(attractor)"));
        report.conditions.push_back(make_sequence_check(
            "annulus_measure_ratio", -1, report.grid, measure_ratio, "mu(B\\W) / mu(W)"));
    } else {
        report.conditions.push_back(make_sequence_check(
            "escape_before_attractor", -1, report.grid, cc1,
            "sup_W E[ int R^W 1{W} until T_attractor ]"));
        report.conditions.push_back(make_sequence_check(
            "relative_thermalization", -1, report.grid, cc2,
            "r_N(W, B^c) * sup_W E[ time in W until T_attractor ]"));
        report.conditions.push_back(make_sequence_check(
            "annulus_occupation", -1, report.grid, ccb,
            "r_N(W, B^c) * sup_W E[ time in B\\W until T_{B^c} ]"));
    }
    report.valley = std::all_of(report.conditions.begin(), report.conditions.end(),
                                [](const SequenceCheck& c) { return c.holds; });
    return report;
}

TunnelingReport tunneling_analysis(const ChainFamily& family,
                                   const std::optional<MetaPartitionL>& partition,
                                   const std::function<double(long)>& theta) {
    TunnelingReport report;
    report.family = family.label;
    report.grid = family.n_grid.empty() ? default_n_grid() : family.n_grid;
    report.theta_auto = !theta;
    report.interpretation =
        "finite-N consistency check of the tunneling conditions; limits are fitted from the "
        "grid, not proved";

    MetaPartitionL labels;
    if (partition) {
        labels = *partition;
    } else if (family.partition) {
        labels = family.partition(report.grid.front());
    } else {
        throw InvalidArgument("no metastate partition declared for family " + family.label);
    }

    const int kappa = static_cast<int>(labels.wells.size());
    report.kappa = kappa;

    const std::size_t grid_size = report.grid.size();
    std::vector<std::vector<std::vector<double>>> raw(
        grid_size, std::vector<std::vector<double>>(static_cast<std::size_t>(kappa),
                                                    std::vector<double>(static_cast<std::size_t>(kappa), 0.0)));
    std::vector<std::vector<double>> row_rate(grid_size,
                                              std::vector<double>(static_cast<std::size_t>(kappa), 0.0));
    std::vector<std::vector<double>> h1(static_cast<std::size_t>(kappa)), h2(static_cast<std::size_t>(kappa)),
        h2p(static_cast<std::size_t>(kappa)), c2(static_cast<std::size_t>(kappa)),
        c3(static_cast<std::size_t>(kappa)), direct_occ(static_cast<std::size_t>(kappa));
    std::vector<double> m3_prime;
    report.reversible = true;

    for (std::size_t gi = 0; gi < grid_size; ++gi) {
        long n = report.grid[gi];
        Chain chain = family.chain_at(n);
        StationaryMeasure mu = stationary_measure(chain);
        report.reversible = report.reversible && mu.reversible;

        MetaPartitionL per_n = family.partition && !partition ? family.partition(n) : labels;
        MetaPartition part = resolve_partition(chain, per_n);
        StateSet metastates = part.metastates();
        StateSet annulus = metastates.complement(chain.size());

        TraceChain trace = trace_by_hitting(chain, metastates);
        for (int x = 0; x < kappa; ++x) {
            for (int y = 0; y < kappa; ++y) {
                if (x == y) continue;
                double r = mean_set_rate(trace, mu, part.wells[static_cast<std::size_t>(x)],
                                         part.wells[static_cast<std::size_t>(y)]);
                raw[gi][static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] = r;
                row_rate[gi][static_cast<std::size_t>(x)] += r;
            }
        }

        double theta_n = theta ? theta(n)
                               : 1.0 / *std::max_element(row_rate[gi].begin(), row_rate[gi].end());
        if (!(theta_n > 0.0)) throw NonPositiveValue("time scale must be positive");
        report.theta.push_back(theta_n);

        const Chain& tc = trace.chain;
        for (int x = 0; x < kappa; ++x) {
            const StateSet& well = part.wells[static_cast<std::size_t>(x)];
            StateSet others = metastates.minus(well);
            StateSet local_well = trace.to_local(well);
            StateSet local_others = trace.to_local(others);
            int xi = part.attractors[static_cast<std::size_t>(x)];
            int local_xi = trace.local_index(xi);

            std::vector<double> escape_rate(static_cast<std::size_t>(tc.size()), 0.0);
            for (int a : local_well) {
                double s = 0.0;
                for (const auto& [b, r] : tc.rates_from(a))
                    if (local_others.contains(b)) s += r;
                escape_rate[static_cast<std::size_t>(a)] = s;
            }

            auto u_c2 = expected_additive_vector(tc, escape_rate, StateSet{local_xi});
            c2[static_cast<std::size_t>(x)].push_back(sup_over(u_c2, local_well));

            auto u_c3 =
                expected_additive_vector(tc, indicator(tc.size(), local_well), StateSet{local_xi});
            c3[static_cast<std::size_t>(x)].push_back(row_rate[gi][static_cast<std::size_t>(x)] *
                                                      sup_over(u_c3, local_well));

            auto u_occ =
                expected_additive_vector(chain, indicator(chain.size(), annulus), others);
            direct_occ[static_cast<std::size_t>(x)].push_back(sup_over(u_occ, well) / theta_n);

            double ratio = annulus.empty() ? 0.0 : mu.mass(annulus) / mu.mass(well);
            h2[static_cast<std::size_t>(x)].push_back(ratio);
            double row = row_rate[gi][static_cast<std::size_t>(x)];
            h2p[static_cast<std::size_t>(x)].push_back(row > 0
                                                           ? ratio / (theta_n * row)
                                                           : std::numeric_limits<double>::infinity());

            if (mu.reversible) {
                double cap_well = capacity(chain, mu, well, others).cap;
                double cap_xi = well.size() >= 2 ? point_capacity(chain, mu, well, xi)
                                                 : std::numeric_limits<double>::infinity();
                h1[static_cast<std::size_t>(x)].push_back(std::isfinite(cap_xi) ? cap_well / cap_xi
                                                                                : 0.0);
            }
        }

        // (M3')-style global check: the annulus must be evacuated on scale
        // theta from any of its own states.
        if (annulus.empty()) {
            m3_prime.push_back(0.0);
        } else {
            auto u = expected_additive_vector(
                chain, std::vector<double>(static_cast<std::size_t>(chain.size()), 1.0), metastates);
            m3_prime.push_back(sup_over(u, annulus) / theta_n);
        }
    }

    // Fitted limits theta_N * r_N(x, y).
    report.limit_rates.assign(static_cast<std::size_t>(kappa),
                              std::vector<double>(static_cast<std::size_t>(kappa), 0.0));
    double max_limit = 0.0;
    for (int x = 0; x < kappa; ++x) {
        for (int y = 0; y < kappa; ++y) {
            if (x == y) continue;
            PairRateSequence seq;
            seq.from = x;
            seq.to = y;
            for (std::size_t gi = 0; gi < grid_size; ++gi) {
                seq.raw.push_back(raw[gi][static_cast<std::size_t>(x)][static_cast<std::size_t>(y)]);
                seq.scaled.push_back(report.theta[gi] * seq.raw.back());
            }
            if (!effectively_zero(seq.scaled)) {
                seq.fit = scale_fit(report.grid, seq.scaled);
                if (seq.fit->verdict == ScaleVerdict::Vanishes)
                    seq.limit = 0.0;
                else if (seq.fit->verdict == ScaleVerdict::Converges)
                    seq.limit = seq.scaled.back();
                else {
                    seq.limit = std::numeric_limits<double>::infinity();
                    seq.diverges = true;
                }
            }
            report.limit_rates[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] = seq.limit;
            if (std::isfinite(seq.limit)) max_limit = std::max(max_limit, seq.limit);
            report.pair_rates.push_back(std::move(seq));
        }
    }

    // Absorbing states of the limit dynamics; inaccessible wells.
    for (int x = 0; x < kappa; ++x) {
        double out = 0.0, in = 0.0;
        for (int y = 0; y < kappa; ++y) {
            if (x == y) continue;
            out += report.limit_rates[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
            in += report.limit_rates[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
        }
        if (out <= kAbsorbingRatio * max_limit) report.absorbing.push_back(x);
        if (in <= kAbsorbingRatio * max_limit) report.inaccessible.push_back(x);
    }

    // (H0): every scaled pair sequence has a limit (vanishes or converges).
    bool h0 = std::all_of(report.pair_rates.begin(), report.pair_rates.end(),
                          [](const PairRateSequence& s) { return !s.diverges; });
    {
        SequenceCheck h0_check;
        h0_check.name = "limit_rates_exist";
        h0_check.well = -1;
        h0_check.holds = h0;
        h0_check.note = h0 ? "every scaled rate sequence converges or vanishes"
                           : "a scaled rate sequence diverges; wrong time scale";
        report.conditions.push_back(std::move(h0_check));
    }

    auto absorbing_set = [&](int x) {
        return std::find(report.absorbing.begin(), report.absorbing.end(), x) !=
               report.absorbing.end();
    };

    // Certificates follow the theorem hypotheses: the thermalization pair and
    // the direct annulus-occupation check for non-absorbing wells; absorbing
    // wells fall back to the capacity bound, whose finite value survives the
    // divergence of the exit time.
    bool general_ok = h0;
    bool reversible_ok = h0 && report.reversible;
    for (int x = 0; x < kappa; ++x) {
        SequenceCheck check;

        check = make_sequence_check("escape_before_attractor", x, report.grid,
                                    c2[static_cast<std::size_t>(x)],
                                    "sup E[ int R^x 1{well} until T_attractor ]");
        general_ok = general_ok && check.holds;
        report.conditions.push_back(std::move(check));

        check = make_sequence_check("relative_thermalization", x, report.grid,
                                    c3[static_cast<std::size_t>(x)],
                                    "r_N(x, rest) * sup E[ time in well until T_attractor ]");
        general_ok = general_ok && check.holds;
        report.conditions.push_back(std::move(check));

        SequenceCheck bound = make_sequence_check(
            "annulus_bound", x, report.grid, h2p[static_cast<std::size_t>(x)],
            "mu(annulus) / (mu(well) theta_N r_N(x, rest)); capacity bound for the annulus "
            "occupation");
        SequenceCheck direct = make_sequence_check(
            "annulus_occupation_direct", x, report.grid, direct_occ[static_cast<std::size_t>(x)],
            "sup_well E[ time in annulus until T_rest ] / theta_N");
        general_ok = general_ok && (absorbing_set(x) ? bound.holds : direct.holds);

        check = make_sequence_check("annulus_measure_ratio", x, report.grid,
                                    h2[static_cast<std::size_t>(x)], "mu(annulus) / mu(well)");
        reversible_ok = reversible_ok && (absorbing_set(x) ? bound.holds : check.holds);
        report.conditions.push_back(std::move(bound));
        report.conditions.push_back(std::move(direct));
        report.conditions.push_back(std::move(check));

        if (report.reversible) {
            check = make_sequence_check("capacity_ratio", x, report.grid,
                                        h1[static_cast<std::size_t>(x)],
                                        "Cap(well, rest) / Cap(attractor)");
            reversible_ok = reversible_ok && check.holds;
            report.conditions.push_back(std::move(check));
        }
    }
    report.conditions.push_back(make_sequence_check(
        "annulus_evacuation_global", -1, report.grid, m3_prime,
        "sup_annulus E[ T_metastates ] / theta_N; fails when the annulus hides a deeper well"));

    report.certified_general = general_ok;
    report.certified_reversible = reversible_ok;
    return report;
}

} // namespace ctmeta
