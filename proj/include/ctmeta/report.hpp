#ifndef CTMETA_REPORT_HPP
#define CTMETA_REPORT_HPP

#include <nlohmann/json.hpp>
#include <string>

#include "ctmeta/families.hpp"
#include "ctmeta/meta.hpp"
#include "ctmeta/simulate.hpp"

namespace ctmeta {

using json = nlohmann::json;

inline constexpr const char* kToolName = "ctmeta";
inline constexpr const char* kToolVersion = "0.1.0";

/// Report envelope: command metadata, input echo, results, timing. Two runs
/// with the same inputs and seed are byte-identical outside the "timing"
/// subtree.
json make_report(const std::string& command);
void finish_report(json& report, double elapsed_seconds);

json to_json(const ScaleFit& fit);
json to_json(const SequenceCheck& check);
json to_json(const ValleyReport& report);
json to_json(const TunnelingReport& report);
json to_json(const ExitLawStats& stats);
json to_json(const MetaRateEstimate& est);
json to_json(const CapacityReport& report, const Chain& chain);
json to_json(const FamilyDefinition& def);
FamilyDefinition family_from_json(const json& j);

/// Flat comma-separated tables for the per-N sections of a report.
std::string report_tables_csv(const json& report);

} // namespace ctmeta

#endif
