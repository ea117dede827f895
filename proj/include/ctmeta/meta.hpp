#ifndef CTMETA_META_HPP
#define CTMETA_META_HPP

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctmeta/chain.hpp"
#include "ctmeta/potential.hpp"

namespace ctmeta {

/// Valley triple: well W inside basin B (strictly inside E) with an
/// attractor in W. Index form, valid for one chain.
struct ValleySpec {
    StateSet well;
    StateSet basin;
    int attractor = -1;
};

/// Label form, valid across a family whose state labels are stable in N.
struct ValleySpecL {
    std::vector<std::string> well;
    std::vector<std::string> basin;
    std::string attractor;
};

struct MetaPartition {
    std::vector<StateSet> wells;
    std::vector<int> attractors;

    StateSet metastates() const; // union of the wells
};

struct MetaPartitionL {
    std::vector<std::vector<std::string>> wells;
    std::vector<std::string> attractors;
};

ValleySpec resolve_valley(const Chain& chain, const ValleySpecL& labels);
MetaPartition resolve_partition(const Chain& chain, const MetaPartitionL& labels);

/// A parameterized sequence of chains. The generator must produce specs with
/// a consistent label structure for the declared sets (torus-like families
/// regenerate their partition per N through `partition`).
struct ChainFamily {
    std::string label;
    std::vector<long> n_grid;
    std::function<ChainSpec(long)> generator;
    BuildOptions build_options;
    std::function<MetaPartitionL(long)> partition; // may be unset
    std::optional<ValleySpecL> valley;             // default valley, if any
    bool simulation_only = false;

    Chain chain_at(long n) const;
};

/// Geometric default grid {10, 10^1.5, 10^2, 10^2.5, 10^3}, rounded.
std::vector<long> default_n_grid();

enum class ScaleVerdict { Vanishes, Converges, Diverges };

struct ScaleFit {
    double exponent = 0.0;  // slope of log(value) against log(N)
    double prefactor = 0.0; // exp of the intercept
    double residual = 0.0;  // RMS residual in log space
    ScaleVerdict verdict = ScaleVerdict::Converges;
    bool low_confidence = false; // residual above threshold
};

inline constexpr double kVanishExponent = -0.2;
inline constexpr double kFitResidualThreshold = 0.75;
inline constexpr double kAbsorbingRatio = 1e-6;

/// Least-squares power-law fit. Requires >= 4 grid points; all values must
/// be strictly positive (NonPositiveValue otherwise).
ScaleFit scale_fit(std::span<const long> ns, std::span<const double> values);

/// One tracked sequence over the grid with its limit decision. `fit` is
/// absent when the sequence is identically zero (the limit is exact).
struct SequenceCheck {
    std::string name;
    int well = -1; // 0-based well index the check refers to, -1 for global
    std::vector<double> values;
    std::optional<ScaleFit> fit;
    bool holds = false;
    std::string note;
};

SequenceCheck make_sequence_check(std::string name, int well, std::span<const long> ns,
                                  std::vector<double> values, std::string note = "");

struct ValleyDepthResult {
    double depth = 0.0; // capacity route when reversible, trace route otherwise
    double via_trace = 0.0;
    std::optional<double> via_capacity;
};

/// theta_N of a valley: mu(W)/Cap(W, B^c) when reversible, and in general
/// the inverse mean escape rate 1/r_N(W, B^c) of the trace on W u B^c.
ValleyDepthResult valley_depth(const Chain& chain, const StationaryMeasure& mu,
                               const ValleySpec& valley);

enum class ValleyMode { General, Reversible };

struct ValleyReport {
    std::string family;
    ValleyMode mode = ValleyMode::General;
    std::vector<long> grid;
    std::vector<double> depth;
    std::vector<double> depth_via_trace;
    std::vector<double> depth_via_capacity; // empty for non-reversible families
    std::vector<SequenceCheck> conditions;
    bool valley = false; // all conditions decided as holding
};

/// Evaluates the sufficient valley conditions over the family grid.
/// General mode solves the additive-functional conditions on the trace
/// chain; reversible mode evaluates the capacity and measure ratios.
ValleyReport check_valley_conditions(const ChainFamily& family, const ValleySpecL& valley,
                                     ValleyMode mode);

struct PairRateSequence {
    int from = 0, to = 0;        // 0-based well indices
    std::vector<double> raw;     // r_N(x, y)
    std::vector<double> scaled;  // theta_N * r_N(x, y)
    std::optional<ScaleFit> fit; // absent for identically zero sequences
    double limit = 0.0;          // 0 when vanishing, top-N scaled value otherwise
    bool diverges = false;
};

struct TunnelingReport {
    std::string family;
    std::vector<long> grid;
    int kappa = 0;
    bool reversible = false;
    bool theta_auto = false;
    std::vector<double> theta;
    std::vector<PairRateSequence> pair_rates;
    std::vector<std::vector<double>> limit_rates; // kappa x kappa fitted r(x, y)
    std::vector<int> absorbing;    // wells with all outgoing limits zero
    std::vector<int> inaccessible; // wells with all incoming limits zero
    std::vector<SequenceCheck> conditions;
    bool certified_general = false;    // (C1)-(C3) + (H0) route
    bool certified_reversible = false; // (H0)-(H2)/(H2') route
    std::string interpretation;
};

/// Full tunneling analysis of a family against a partition into metastates:
/// per-N trace rates, time scale selection (user expression or the inverse
/// of the fastest mean escape rate), fitted limit rates, absorbing-state
/// classification, and the condition battery.
TunnelingReport tunneling_analysis(const ChainFamily& family,
                                   const std::optional<MetaPartitionL>& partition = {},
                                   const std::function<double(long)>& theta = {});

} // namespace ctmeta

#endif
