#include "ctmeta/report.hpp"

#include <cmath>
#include <sstream>

namespace ctmeta {

namespace {

const char* verdict_name(ScaleVerdict v) {
    switch (v) {
        case ScaleVerdict::Vanishes: return "vanishes";
        case ScaleVerdict::Converges: return "converges";
        case ScaleVerdict::Diverges: return "diverges";
    }
    return "unknown";
}

json finite(double v) {
    if (std::isfinite(v)) return v;
    return v > 0 ? json("inf") : json("-inf");
}

json vector_json(const std::vector<double>& values) {
    json arr = json::array();
    for (double v : values) arr.push_back(finite(v));
    return arr;
}

} // namespace

json make_report(const std::string& command) {
    json report;
    report["tool"] = kToolName;
    report["version"] = kToolVersion;
    report["command"] = command;
    return report;
}

void finish_report(json& report, double elapsed_seconds) {
    report["timing"] = {{"elapsed_seconds", elapsed_seconds}};
}

json to_json(const ScaleFit& fit) {
    return json{{"exponent", fit.exponent},
                {"prefactor", fit.prefactor},
                {"residual", fit.residual},
                {"verdict", verdict_name(fit.verdict)},
                {"low_confidence", fit.low_confidence}};
}

json to_json(const SequenceCheck& check) {
    json j{{"name", check.name},
           {"values", vector_json(check.values)},
           {"holds", check.holds}};
    if (check.well >= 0) j["well"] = check.well + 1; // wells are 1-based in reports
    if (check.fit) j["fit"] = to_json(*check.fit);
    if (!check.note.empty()) j["note"] = check.note;
    return j;
}

json to_json(const ValleyReport& report) {
    json j;
    j["family"] = report.family;
    j["mode"] = report.mode == ValleyMode::Reversible ? "reversible" : "general";
    j["n_grid"] = report.grid;
    j["depth"] = vector_json(report.depth);
    j["depth_via_trace"] = vector_json(report.depth_via_trace);
    if (!report.depth_via_capacity.empty())
        j["depth_via_capacity"] = vector_json(report.depth_via_capacity);
    j["conditions"] = json::array();
    for (const auto& c : report.conditions) j["conditions"].push_back(to_json(c));
    j["valley"] = report.valley;
    return j;
}

json to_json(const TunnelingReport& report) {
    json j;
    j["family"] = report.family;
    j["n_grid"] = report.grid;
    j["kappa"] = report.kappa;
    j["reversible"] = report.reversible;
    j["theta"] = {{"auto", report.theta_auto}, {"values", vector_json(report.theta)}};

    json pairs = json::array();
    for (const auto& p : report.pair_rates) {
        json pj{{"from", p.from + 1},
                {"to", p.to + 1},
                {"raw", vector_json(p.raw)},
                {"scaled", vector_json(p.scaled)},
                {"limit", finite(p.limit)},
                {"diverges", p.diverges}};
        if (p.fit) pj["fit"] = to_json(*p.fit);
        pairs.push_back(std::move(pj));
    }
    j["pair_rates"] = std::move(pairs);

    json rates = json::array();
    for (const auto& row : report.limit_rates) rates.push_back(vector_json(row));
    j["limit_rates"] = std::move(rates);

    json absorbing = json::array(), inaccessible = json::array();
    for (int x : report.absorbing) absorbing.push_back(x + 1);
    for (int x : report.inaccessible) inaccessible.push_back(x + 1);
    j["absorbing"] = std::move(absorbing);
    j["inaccessible"] = std::move(inaccessible);

    j["conditions"] = json::array();
    for (const auto& c : report.conditions) j["conditions"].push_back(to_json(c));
    j["certified_general"] = report.certified_general;
    j["certified_reversible"] = report.certified_reversible;
    j["interpretation"] = report.interpretation;
    return j;
}

json to_json(const ExitLawStats& stats) {
    return json{{"seed", stats.seed},
                {"start", stats.start},
                {"replicas", stats.replicas},
                {"theta", stats.theta},
                {"attractor_first_frequency", stats.attractor_first_frequency},
                {"mean_normalized_exit_time", stats.mean_normalized_exit_time},
                {"ks", {{"statistic", stats.ks.statistic}, {"p_value", stats.ks.p_value}}},
                {"mean_delta_occupation", stats.mean_delta_occupation},
                {"max_delta_occupation", stats.max_delta_occupation},
                {"mean_sortie_delta_occupation", stats.mean_sortie_delta_occupation},
                {"max_sortie_delta_occupation", stats.max_sortie_delta_occupation},
                {"interpretation", stats.interpretation}};
}

json to_json(const MetaRateEstimate& est) {
    json rates = json::array(), errors = json::array(), counts = json::array();
    for (int x = 0; x < est.kappa; ++x) {
        rates.push_back(vector_json(est.rates[static_cast<std::size_t>(x)]));
        errors.push_back(vector_json(est.std_errors[static_cast<std::size_t>(x)]));
        counts.push_back(est.jump_counts[static_cast<std::size_t>(x)]);
    }
    return json{{"seed", est.seed},
                {"replicas", est.replicas},
                {"theta", est.theta},
                {"horizon", est.horizon},
                {"kappa", est.kappa},
                {"jump_counts", std::move(counts)},
                {"occupation", vector_json(est.occupation)},
                {"rates", std::move(rates)},
                {"std_errors", std::move(errors)},
                {"interpretation", est.interpretation}};
}

json to_json(const CapacityReport& report, const Chain& chain) {
    json a = json::array(), b = json::array();
    for (int s : report.A) a.push_back(chain.label(s));
    for (int s : report.B) b.push_back(chain.label(s));
    return json{{"A", std::move(a)},
                {"B", std::move(b)},
                {"capacity", report.cap},
                {"escape_value", report.escape_value},
                {"residual", report.residual},
                {"potential", vector_json(report.potential)}};
}

json to_json(const FamilyDefinition& def) {
    json j;
    j["name"] = def.name;
    j["kind"] = def.kind;
    if (def.kind == "template") {
        json rates = json::array();
        for (const auto& rule : def.tmpl.rates)
            rates.push_back({{"from", rule.from}, {"to", rule.to}, {"rate", rule.expr}});
        j["states"] = def.tmpl.states;
        j["rates"] = std::move(rates);
    } else {
        j["dim"] = def.dim;
        j["theta"] = def.theta_expr;
        j["state_cap"] = def.state_cap;
        j["override_state_cap"] = def.override_state_cap;
    }
    j["n_grid"] = def.n_grid;
    if (!def.wells.empty()) {
        j["wells"] = def.wells;
        j["attractors"] = def.attractors;
    }
    if (def.valley)
        j["valley"] = {{"well", def.valley->well},
                       {"basin", def.valley->basin},
                       {"attractor", def.valley->attractor}};
    if (def.simulation_only) j["simulation_only"] = true;
    if (!def.notes.empty()) j["notes"] = def.notes;
    return j;
}

FamilyDefinition family_from_json(const json& j) {
    FamilyDefinition def;
    try {
        def.name = j.at("name").get<std::string>();
        def.kind = j.value("kind", std::string("template"));
        if (def.kind == "template") {
            def.tmpl.states = j.at("states").get<std::vector<std::string>>();
            for (const auto& r : j.at("rates")) {
                RateRule rule{r.at("from").get<std::string>(), r.at("to").get<std::string>(),
                              r.at("rate").get<std::string>()};
                def.tmpl.rates.push_back(std::move(rule));
            }
        } else if (def.kind == "torus") {
            def.dim = j.value("dim", 1);
            def.theta_expr = j.value("theta", std::string("N^2"));
            def.state_cap = j.value("state_cap", 100000L);
            def.override_state_cap = j.value("override_state_cap", false);
        } else {
            throw InvalidArgument("unknown family kind '" + def.kind + "'");
        }
        if (j.contains("n_grid")) def.n_grid = j.at("n_grid").get<std::vector<long>>();
        if (j.contains("wells")) {
            def.wells = j.at("wells").get<std::vector<std::vector<std::string>>>();
            def.attractors = j.at("attractors").get<std::vector<std::string>>();
        }
        if (j.contains("valley")) {
            ValleySpecL v;
            v.well = j["valley"].at("well").get<std::vector<std::string>>();
            v.basin = j["valley"].at("basin").get<std::vector<std::string>>();
            v.attractor = j["valley"].at("attractor").get<std::string>();
            def.valley = std::move(v);
        }
        def.simulation_only = j.value("simulation_only", false);
        def.notes = j.value("notes", std::string());
    } catch (const json::exception& e) {
        throw ParseError(0, std::string("family definition: ") + e.what());
    }
    return def;
}

std::string report_tables_csv(const json& report) {
    std::ostringstream out;
    auto emit_sequence = [&](const std::string& section, const json& ns, const json& values) {
        out << "section," << section << "\n";
        out << "N,value\n";
        for (std::size_t i = 0; i < ns.size() && i < values.size(); ++i) {
            out << ns[i] << ",";
            if (values[i].is_number())
                out << values[i].get<double>();
            else
                out << values[i].dump();
            out << "\n";
        }
        out << "\n";
    };

    if (report.contains("n_grid")) {
        const json& ns = report["n_grid"];
        for (const auto& key : {"depth", "depth_via_trace", "depth_via_capacity"})
            if (report.contains(key)) emit_sequence(key, ns, report[key]);
        if (report.contains("theta") && report["theta"].contains("values"))
            emit_sequence("theta", ns, report["theta"]["values"]);
        if (report.contains("conditions")) {
            for (const auto& c : report["conditions"]) {
                if (!c.contains("values")) continue;
                std::string name = c["name"].get<std::string>();
                if (c.contains("well")) name += "_well" + std::to_string(c["well"].get<int>());
                emit_sequence(name, ns, c["values"]);
            }
        }
        if (report.contains("pair_rates")) {
            for (const auto& p : report["pair_rates"]) {
                std::string name = "scaled_rate_" + std::to_string(p["from"].get<int>()) + "_" +
                                   std::to_string(p["to"].get<int>());
                emit_sequence(name, ns, p["scaled"]);
            }
        }
    }
    return out.str();
}

} // namespace ctmeta
