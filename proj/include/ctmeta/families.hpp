#ifndef CTMETA_FAMILIES_HPP
#define CTMETA_FAMILIES_HPP

#include <optional>
#include <string>
#include <vector>

#include "ctmeta/meta.hpp"

namespace ctmeta {

/// One rate rule: an edge plus an expression in N. The expression grammar is
/// restricted to +, -, *, /, parentheses, decimal literals, and integer
/// powers of N (e.g. "1/N^2", "N^-3", "2*N - 1").
struct RateRule {
    std::string from, to, expr;
};

struct FamilyTemplate {
    std::vector<std::string> states;
    std::vector<RateRule> rates;
};

/// Declarative family definition: either an inline template or the torus
/// builtin whose state space grows with N. Carries the default partition /
/// valley declarations used by the analysis commands.
struct FamilyDefinition {
    std::string name;
    std::string kind = "template"; // "template" | "torus"
    FamilyTemplate tmpl;

    // torus parameters (two d-dimensional tori of side N, coupled pointwise
    // at rate 1/theta_N)
    int dim = 1;
    std::string theta_expr = "N^2";
    long state_cap = 100000;
    bool override_state_cap = false;

    std::vector<long> n_grid;
    std::vector<std::vector<std::string>> wells;
    std::vector<std::string> attractors;
    std::optional<ValleySpecL> valley;
    bool simulation_only = false;
    std::string notes;
};

/// Compiled rate expression; evaluation at a given N.
double eval_rate_expr(const std::string& expr, long n);

/// Builtin names: ex1 ... ex8, torus2.
std::vector<std::string> builtin_family_names();
FamilyDefinition builtin_family(const std::string& name);

/// Parses a family definition document (JSON).
FamilyDefinition parse_family_definition(const std::string& text);
std::string serialize_family_definition(const FamilyDefinition& def);
FamilyDefinition load_family_file(const std::string& path);

/// Builtin name first, then file path.
FamilyDefinition load_family(const std::string& name_or_path);

/// Instantiates the generator; validates every rate expression on the grid
/// (NegativeRate on a nonpositive evaluation) and the declared sets.
ChainFamily instantiate(const FamilyDefinition& def);

} // namespace ctmeta

#endif
