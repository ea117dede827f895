#include "ctmeta/simulate.hpp"

#include <algorithm>
#include <cmath>

namespace ctmeta {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Asymptotic Kolmogorov distribution Q(lambda) = P[sup |B| > lambda].
double kolmogorov_q(double lambda) {
    if (lambda < 1e-8) return 1.0;
    if (lambda < 1.18) {
        // Dual theta-series, accurate for small arguments.
        double q = std::exp(-M_PI * M_PI / (8.0 * lambda * lambda));
        double sum = q + std::pow(q, 9.0) + std::pow(q, 25.0) + std::pow(q, 49.0);
        return std::max(0.0, 1.0 - std::sqrt(2.0 * M_PI) / lambda * sum);
    }
    double acc = 0.0;
    for (int k = 1; k <= 16; ++k) {
        double term = std::exp(-2.0 * k * k * lambda * lambda);
        acc += (k % 2 == 1) ? term : -term;
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * acc, 0.0, 1.0);
}

} // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream),
      engine_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x6A09E667F3BCC909ULL))) {}

double RngStream::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::exponential(double rate) {
    if (!(rate > 0.0)) throw InvalidArgument("exponential rate must be positive");
    return -std::log1p(-uniform01()) / rate;
}

PathSample sample_path(const Chain& chain, int start, const StopRule& stop, RngStream& rng) {
    if (start < 0 || start >= chain.size()) throw InvalidArgument("start index out of range");
    const bool has_horizon = std::isfinite(stop.horizon);
    if (!has_horizon && stop.target.empty())
        throw InvalidArgument("stop rule needs a target set or a finite horizon");
    if (has_horizon && stop.horizon <= 0.0) throw InvalidArgument("horizon must be positive");

    PathSample path;
    path.start = start;
    if (stop.target.contains(start)) {
        path.stop_reason = StopReason::HitTarget;
        path.final_state = start;
        return path;
    }

    int state = start;
    double elapsed = 0.0;
    for (;;) {
        double lambda = chain.holding(state);
        if (lambda <= 0.0) {
            // Absorbing state off the target.
            if (has_horizon) {
                double rest = stop.horizon - elapsed;
                if (rest > 0.0) {
                    path.segments.push_back({state, rest});
                    elapsed += rest;
                }
                path.horizon = elapsed;
                path.stop_reason = StopReason::Absorbed;
                path.final_state = state;
                return path;
            }
            throw AbsorbedBeforeTarget(chain.label(state));
        }

        double hold = rng.exponential(lambda);
        if (has_horizon && elapsed + hold >= stop.horizon) {
            double rest = stop.horizon - elapsed;
            if (rest > 0.0) {
                path.segments.push_back({state, rest});
                elapsed += rest;
            }
            path.horizon = elapsed;
            path.stop_reason = StopReason::Horizon;
            path.final_state = state;
            return path;
        }
        path.segments.push_back({state, hold});
        elapsed += hold;

        // Next state from the jump distribution p(state, .).
        double u = rng.uniform01() * lambda;
        int next = -1;
        double acc = 0.0;
        auto row = chain.rates_from(state);
        for (const auto& [j, r] : row) {
            acc += r;
            if (u < acc) { next = j; break; }
        }
        if (next < 0) next = row.back().first; // rounding guard
        if (stop.target.contains(next)) {
            path.horizon = elapsed;
            path.stop_reason = StopReason::HitTarget;
            path.final_state = next;
            return path;
        }
        state = next;
    }
}

PathSample sample_path(const Chain& chain, int start, const StopRule& stop,
                       std::uint64_t seed) {
    RngStream rng(seed, 0);
    return sample_path(chain, start, stop, rng);
}

KsResult ks_exponential_test(std::span<const double> samples) {
    if (samples.size() < 30)
        throw TooFewSamples("Kolmogorov-Smirnov test needs at least 30 samples, got " +
                            std::to_string(samples.size()));
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        double cdf = -std::expm1(-sorted[i]); // 1 - exp(-x), unit mean
        double lo = cdf - static_cast<double>(i) / n;
        double hi = static_cast<double>(i + 1) / n - cdf;
        d = std::max(d, std::max(lo, hi));
    }
    KsResult result;
    result.statistic = d;
    result.p_value = kolmogorov_q(std::sqrt(n) * d);
    return result;
}

ExitLawStats exit_law_experiment(const Chain& chain, const ValleySpec& valley, double theta,
                                 long replicas, std::uint64_t seed, int start) {
    if (!(theta > 0.0)) throw InvalidArgument("theta must be positive");
    if (replicas < 1000) throw InvalidArgument("exit-law experiment needs at least 1000 replicas");
    if (start < 0) start = valley.attractor;
    if (!valley.well.contains(start))
        throw InvalidArgument("exit-law start state must belong to the well");

    StateSet outside = valley.basin.complement(chain.size());
    StateSet annulus = valley.basin.minus(valley.well);

    ExitLawStats stats;
    stats.seed = seed;
    stats.start = start;
    stats.replicas = replicas;
    stats.theta = theta;
    stats.interpretation =
        "empirical consistency check of the valley conditions at fixed N; not a limit statement";

    long attractor_first = 0;
    double sum_exit = 0.0, sum_delta = 0.0, max_delta = 0.0;
    double sum_sortie = 0.0, max_sortie = 0.0;
    stats.normalized_exit_times.reserve(static_cast<std::size_t>(replicas));

    for (long rep = 0; rep < replicas; ++rep) {
        RngStream rng(seed, static_cast<std::uint64_t>(rep));
        int state = start;
        double elapsed = 0.0, delta_time = 0.0, sortie_delta = 0.0;
        bool sortie_open = true;
        bool hit_attractor_before_exit = false;

        for (;;) {
            double lambda = chain.holding(state);
            if (lambda <= 0.0) throw AbsorbedBeforeTarget(chain.label(state));
            double hold = rng.exponential(lambda);
            elapsed += hold;
            if (annulus.contains(state)) {
                delta_time += hold;
                if (sortie_open) sortie_delta += hold;
            }

            double u = rng.uniform01() * lambda;
            int next = -1;
            double acc = 0.0;
            auto row = chain.rates_from(state);
            for (const auto& [j, r] : row) {
                acc += r;
                if (u < acc) { next = j; break; }
            }
            if (next < 0) next = row.back().first;

            if (next == valley.attractor) {
                if (sortie_open && !hit_attractor_before_exit) hit_attractor_before_exit = true;
                sortie_open = false;
            }
            if (outside.contains(next)) {
                sortie_open = false;
                break;
            }
            state = next;
        }

        if (hit_attractor_before_exit || start == valley.attractor) ++attractor_first;
        double t = elapsed / theta;
        stats.normalized_exit_times.push_back(t);
        sum_exit += t;
        double nd = delta_time / theta;
        sum_delta += nd;
        max_delta = std::max(max_delta, nd);
        double ns = sortie_delta / theta;
        sum_sortie += ns;
        max_sortie = std::max(max_sortie, ns);
    }

    const double r = static_cast<double>(replicas);
    stats.attractor_first_frequency = static_cast<double>(attractor_first) / r;
    stats.mean_normalized_exit_time = sum_exit / r;
    stats.mean_delta_occupation = sum_delta / r;
    stats.max_delta_occupation = max_delta;
    stats.mean_sortie_delta_occupation = sum_sortie / r;
    stats.max_sortie_delta_occupation = max_sortie;
    stats.ks = ks_exponential_test(stats.normalized_exit_times);
    return stats;
}

ProjectedPath project_path(const PathSample& path, const MetaPartition& partition,
                           ProjectionVariant variant) {
    const int kappa = static_cast<int>(partition.wells.size());
    std::vector<int> label_of;
    {
        int max_state = -1;
        for (const auto& w : partition.wells)
            if (!w.empty()) max_state = std::max(max_state, w.items().back());
        for (const auto& seg : path.segments) max_state = std::max(max_state, seg.state);
        label_of.assign(static_cast<std::size_t>(max_state + 1), -1);
        for (int x = 0; x < kappa; ++x)
            for (int s : partition.wells[static_cast<std::size_t>(x)])
                label_of[static_cast<std::size_t>(s)] = x;
    }
    auto label = [&](int s) {
        return s >= 0 && s < static_cast<int>(label_of.size())
                   ? label_of[static_cast<std::size_t>(s)]
                   : -1;
    };

    ProjectedPath out;
    out.variant = variant;

    if (variant == ProjectionVariant::LastVisit) {
        if (path.segments.empty() || label(path.segments.front().state) < 0)
            throw StartsInAnnulus("last-visit projection needs a path started in a metastate");
        int current = -1;
        for (const auto& seg : path.segments) {
            int l = label(seg.state);
            if (l < 0) {
                out.annulus_time += seg.duration;
                l = current;
            }
            if (!out.segments.empty() && out.segments.back().first == l)
                out.segments.back().second += seg.duration;
            else
                out.segments.push_back({l, seg.duration});
            current = l;
        }
        return out;
    }

    bool seen = false;
    for (const auto& seg : path.segments) {
        int l = label(seg.state);
        if (l < 0) {
            if (!seen) out.leading_segment_dropped = true;
            out.annulus_time += seg.duration;
            continue;
        }
        seen = true;
        if (!out.segments.empty() && out.segments.back().first == l)
            out.segments.back().second += seg.duration;
        else
            out.segments.push_back({l, seg.duration});
    }
    if (!seen) throw NeverVisitsA("path never visits a metastate");
    return out;
}

MetaRateEstimate empirical_meta_rates(const Chain& chain, const MetaPartition& partition,
                                      double theta, double horizon, long replicas,
                                      std::uint64_t seed, int start) {
    if (!(theta > 0.0) || !(horizon > 0.0)) throw InvalidArgument("theta and horizon must be positive");
    if (replicas <= 0) throw InvalidArgument("replica count must be positive");
    const int kappa = static_cast<int>(partition.wells.size());

    MetaRateEstimate est;
    est.seed = seed;
    est.replicas = replicas;
    est.theta = theta;
    est.horizon = horizon;
    est.kappa = kappa;
    est.jump_counts.assign(static_cast<std::size_t>(kappa),
                           std::vector<long>(static_cast<std::size_t>(kappa), 0));
    est.occupation.assign(static_cast<std::size_t>(kappa), 0.0);
    est.interpretation =
        "maximum-likelihood rates of the projected metastate process at fixed N; consistent "
        "with the asymptotic dynamics, not a proof of convergence";

    StopRule stop;
    stop.horizon = horizon;
    for (long rep = 0; rep < replicas; ++rep) {
        RngStream rng(seed, static_cast<std::uint64_t>(rep));
        PathSample path = sample_path(chain, start, stop, rng);
        ProjectedPath proj = project_path(path, partition, ProjectionVariant::Trace);
        for (std::size_t k = 0; k < proj.segments.size(); ++k) {
            auto [x, dur] = proj.segments[k];
            est.occupation[static_cast<std::size_t>(x)] += dur / theta;
            if (k + 1 < proj.segments.size()) {
                int y = proj.segments[k + 1].first;
                ++est.jump_counts[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
            }
        }
    }

    est.rates.assign(static_cast<std::size_t>(kappa),
                     std::vector<double>(static_cast<std::size_t>(kappa), 0.0));
    est.std_errors = est.rates;
    for (int x = 0; x < kappa; ++x) {
        double time_x = est.occupation[static_cast<std::size_t>(x)];
        if (time_x <= 0.0) continue;
        for (int y = 0; y < kappa; ++y) {
            if (x == y) continue;
            long k = est.jump_counts[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
            est.rates[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] =
                static_cast<double>(k) / time_x;
            est.std_errors[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] =
                std::sqrt(static_cast<double>(std::max<long>(k, 1))) / time_x;
        }
    }
    return est;
}

} // namespace ctmeta
