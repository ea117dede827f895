#ifndef CTMETA_SIMULATE_HPP
#define CTMETA_SIMULATE_HPP

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "ctmeta/chain.hpp"
#include "ctmeta/meta.hpp"
#include "ctmeta/path.hpp"

namespace ctmeta {

/// Deterministic replica stream: mt19937_64 whose seed is derived from
/// (seed, stream) with splitmix64, so replicas parallelize without sharing
/// state. Uniforms take the top 53 bits; exponentials use the inverse CDF
/// -log(1 - u) / rate, which is reproducible across platforms.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    double uniform01(); // in [0, 1)
    double exponential(double rate);

private:
    std::uint64_t seed_ = 0, stream_ = 0;
    std::mt19937_64 engine_;
};

struct StopRule {
    StateSet target;
    double horizon = std::numeric_limits<double>::infinity();
};

/// Exact jump-chain simulation: next state from p(eta, .), holding time
/// exponential with rate lambda(eta). Stops on the first arrival in the
/// target or at the horizon, whichever comes first. A path that starts in
/// the target is empty. Reaching an absorbing state off the target throws
/// AbsorbedBeforeTarget unless a finite horizon absorbs the remainder.
PathSample sample_path(const Chain& chain, int start, const StopRule& stop, RngStream& rng);
PathSample sample_path(const Chain& chain, int start, const StopRule& stop,
                       std::uint64_t seed);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against the unit-mean exponential
/// distribution, asymptotic p-value, at least 30 samples.
KsResult ks_exponential_test(std::span<const double> samples);

struct ExitLawStats {
    std::uint64_t seed = 0;
    int start = -1;
    long replicas = 0;
    double theta = 1.0;
    double attractor_first_frequency = 0.0;
    std::vector<double> normalized_exit_times; // T_{B^c} / theta per replica
    double mean_normalized_exit_time = 0.0;
    KsResult ks;
    /// Time in the annulus Delta = B \ W over the whole exit, / theta.
    double mean_delta_occupation = 0.0;
    double max_delta_occupation = 0.0;
    /// Time in Delta during the first sortie only, i.e. until the first
    /// arrival at the attractor or in B^c, / theta. This is the quantity the
    /// paper's annulus discussion evaluates for the counterexamples.
    double mean_sortie_delta_occupation = 0.0;
    double max_sortie_delta_occupation = 0.0;
    std::string interpretation;
};

/// Empirical valley battery: per replica, whether the attractor was reached
/// before B^c, the normalized exit time, and the annulus occupation; the
/// normalized exit times are tested against Exp(1).
ExitLawStats exit_law_experiment(const Chain& chain, const ValleySpec& valley, double theta,
                                 long replicas, std::uint64_t seed, int start = -1);

enum class ProjectionVariant { Trace, LastVisit };

/// Piecewise-constant metastate path. Trace variant: the path restricted to
/// the metastates then labeled; LastVisit variant: every instant labeled by
/// the last visited metastate (defined when the path starts in one).
struct ProjectedPath {
    ProjectionVariant variant = ProjectionVariant::Trace;
    std::vector<std::pair<int, double>> segments; // (0-based well label, duration)
    /// Annulus time: dropped (Trace) or absorbed into segments (LastVisit),
    /// accumulated in path order.
    double annulus_time = 0.0;
    bool leading_segment_dropped = false;
};

ProjectedPath project_path(const PathSample& path, const MetaPartition& partition,
                           ProjectionVariant variant);

struct MetaRateEstimate {
    std::uint64_t seed = 0;
    long replicas = 0;
    double theta = 1.0;
    double horizon = 0.0;
    int kappa = 0;
    std::vector<std::vector<long>> jump_counts;   // kappa x kappa
    std::vector<double> occupation;               // rescaled time per well
    std::vector<std::vector<double>> rates;       // r-hat(x, y) on the theta clock
    std::vector<std::vector<double>> std_errors;  // sqrt(max(count,1)) / occupation
    std::string interpretation;
};

/// Maximum-likelihood rates of the projected, time-rescaled metastate
/// process: r-hat(x, y) = jumps(x -> y) / (time in x / theta).
MetaRateEstimate empirical_meta_rates(const Chain& chain, const MetaPartition& partition,
                                      double theta, double horizon, long replicas,
                                      std::uint64_t seed, int start);

} // namespace ctmeta

#endif
