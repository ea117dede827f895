#ifndef CTMETA_ERRORS_HPP
#define CTMETA_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace ctmeta {

/// Base class for all library errors. `kind()` is a stable machine-readable
/// tag used by the CLI to build diagnostic records and exit codes.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

// Input / precondition errors (CLI exit code 2).

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& m) : Error("invalid_argument", m) {}
};

struct UnknownState : Error {
    explicit UnknownState(const std::string& label)
        : Error("unknown_state", "unknown state label '" + label + "'") {}
};

struct OverlappingSets : Error {
    explicit OverlappingSets(const std::string& m) : Error("overlapping_sets", m) {}
};

struct EmptySupport : Error {
    explicit EmptySupport(const std::string& m) : Error("empty_support", m) {}
};

struct SingletonWell : Error {
    explicit SingletonWell(const std::string& m) : Error("singleton_well", m) {}
};

struct TooFewSamples : Error {
    explicit TooFewSamples(const std::string& m) : Error("too_few_samples", m) {}
};

struct NonPositiveValue : Error {
    explicit NonPositiveValue(const std::string& m) : Error("non_positive_value", m) {}
};

struct ParseError : Error {
    ParseError(std::size_t position, const std::string& m)
        : Error("parse_error", m + " (at position " + std::to_string(position) + ")"),
          position(position) {}
    std::size_t position;
};

struct NegativeRate : Error {
    NegativeRate(long n, const std::string& edge, double value)
        : Error("negative_rate", "rate expression for edge " + edge + " evaluates to " +
                                     std::to_string(value) + " at N=" + std::to_string(n)) {}
};

struct ModeMismatch : Error {
    explicit ModeMismatch(const std::string& m) : Error("mode_mismatch", m) {}
};

// Structural / numeric errors (CLI exit code 3).

struct ZeroHoldingRate : Error {
    explicit ZeroHoldingRate(const std::string& label)
        : Error("zero_holding_rate", "state '" + label + "' has no outgoing rate") {}
};

struct NotIrreducible : Error {
    explicit NotIrreducible(std::vector<std::vector<std::string>> comps)
        : Error("not_irreducible",
                "rate graph is not irreducible (" + std::to_string(comps.size()) +
                    " strongly connected components)"),
          components(std::move(comps)) {}
    std::vector<std::vector<std::string>> components;
};

struct SolverFailure : Error {
    explicit SolverFailure(const std::string& m) : Error("solver_failure", m) {}
};

struct NotReversible : Error {
    explicit NotReversible(const std::string& m) : Error("not_reversible", m) {}
};

// Simulation errors.

struct NeverVisitsA : Error {
    explicit NeverVisitsA(const std::string& m) : Error("never_visits_set", m) {}
};

struct AbsorbedBeforeTarget : Error {
    explicit AbsorbedBeforeTarget(const std::string& label)
        : Error("absorbed_before_target",
                "path absorbed at state '" + label + "' before reaching the stop set") {}
};

struct StartsInAnnulus : Error {
    explicit StartsInAnnulus(const std::string& m) : Error("starts_in_annulus", m) {}
};

} // namespace ctmeta

#endif
