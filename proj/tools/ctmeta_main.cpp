#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "ctmeta/potential.hpp"
#include "ctmeta/report.hpp"
#include "ctmeta/simulate.hpp"
#include "ctmeta/trace.hpp"

using namespace ctmeta;

namespace {

struct CommonFlags {
    std::string family;
    std::string file;
    long n = 0;
    std::vector<long> n_grid;
    std::string theta;
    long reps = 10000;
    std::uint64_t seed = 20240101;
    double tol = 1e-8;
    std::string out;
    bool tables = false;
};

std::vector<std::string> split_labels(const std::string& text, char sep = ',') {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) {
        // trim surrounding whitespace
        std::size_t b = item.find_first_not_of(" \t");
        std::size_t e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

FamilyDefinition resolve_definition(const CommonFlags& flags) {
    if (!flags.family.empty() && !flags.file.empty())
        throw InvalidArgument("pass either --family or --file, not both");
    if (!flags.family.empty()) return load_family(flags.family);
    if (!flags.file.empty()) return load_family_file(flags.file);
    throw InvalidArgument("a family is required (--family <builtin> or --file <path>)");
}

ChainFamily resolve_family(const CommonFlags& flags, FamilyDefinition* def_out = nullptr) {
    FamilyDefinition def = resolve_definition(flags);
    if (!flags.n_grid.empty()) def.n_grid = flags.n_grid;
    if (flags.n > 0) def.n_grid = {flags.n};
    ChainFamily family = instantiate(def);
    if (def_out) *def_out = def;
    return family;
}

void require_analyzable(const ChainFamily& family) {
    if (family.simulation_only)
        throw InvalidArgument("family '" + family.label +
                              "' is simulation-only (irreducibility waived); analysis "
                              "subcommands refuse it");
}

std::function<double(long)> theta_function(const std::string& expr) {
    if (expr.empty()) return {};
    eval_rate_expr(expr, 2); // validate eagerly
    return [expr](long n) { return eval_rate_expr(expr, n); };
}

void emit(const CommonFlags& flags, json& report,
          std::chrono::steady_clock::time_point started) {
    double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    finish_report(report, elapsed);
    std::string text = report.dump(2) + "\n";
    if (!flags.out.empty()) {
        std::ofstream out(flags.out);
        if (!out) throw InvalidArgument("cannot write to '" + flags.out + "'");
        out << text;
        if (flags.tables) {
            std::ofstream csv(flags.out + ".csv");
            csv << report_tables_csv(report["results"]);
        }
    } else {
        std::cout << text;
        if (flags.tables) std::cout << report_tables_csv(report["results"]);
    }
}

double testingGap(double x, double y) {
    double scale = std::max(std::abs(x), std::abs(y));
    return scale > 0.0 ? std::abs(x - y) / scale : 0.0;
}

/// Shared battery: the capacity/rate identities on one chain. Returns the
/// worst residual seen; details land in `out`.
double identity_battery(const Chain& chain, const StationaryMeasure& mu, std::uint64_t seed,
                        json& out) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> weight(0.2, 3.0);
    std::uniform_real_distribution<double> g_dist(-2.0, 2.0);
    const int n = chain.size();
    double worst = 0.0;
    auto record = [&](const char* name, double residual) {
        out[name].push_back(residual);
        worst = std::max(worst, residual);
    };

    const int rounds = 20;
    for (int round = 0; round < rounds; ++round) {
        std::vector<int> shuffled(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) shuffled[static_cast<std::size_t>(i)] = i;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);

        std::size_t a_size = 1 + rng() % 2, b_size = 1 + rng() % 2;
        if (a_size + b_size + 1 > static_cast<std::size_t>(n)) continue;
        StateSet a(std::vector<int>(shuffled.begin(), shuffled.begin() + a_size));
        StateSet b(std::vector<int>(shuffled.begin() + a_size,
                                    shuffled.begin() + a_size + b_size));

        CapacityReport cap = capacity(chain, mu, a, b);
        record("two_route_capacity", testingGap(cap.cap, cap.escape_value));

        StateSet f = a.unioned(b);
        TraceChain pair_trace = trace_by_hitting(chain, f);
        double lhs = mu.mass(a) * mean_set_rate(pair_trace, mu, a, b);
        record("rate_capacity", testingGap(lhs, cap.cap));

        std::size_t extra = 1 + rng() % (static_cast<std::size_t>(n) - a_size - b_size);
        StateSet wide = f;
        for (std::size_t k = 0; k < extra && a_size + b_size + k < static_cast<std::size_t>(n);
             ++k)
            wide.insert(shuffled[a_size + b_size + k]);
        record("three_set_rate", three_set_rate_identity(chain, mu, wide, a, b).residual);

        std::vector<double> h(static_cast<std::size_t>(n), 0.0);
        for (int s : wide) h[static_cast<std::size_t>(s)] = weight(rng);
        record("weighted_capacity", h_capacity_scaling(chain, mu, h, a, b).residual);

        std::vector<double> g(static_cast<std::size_t>(n));
        for (double& v : g) v = g_dist(rng);
        record("hitting_integral", hitting_integral_formula(chain, mu, a, b, g).residual);

        std::vector<double> gw(static_cast<std::size_t>(n), 0.0);
        for (int s : wide) gw[static_cast<std::size_t>(s)] = 1.0;
        HittingIntegral occupation = hitting_integral_formula(
            chain, mu, StateSet{a.items()[0]}, StateSet{b.items()[0]}, gw);
        record("mean_occupation_formula", occupation.residual);
    }
    return worst;
}

int run_capacities(const CommonFlags& flags, const std::string& a_csv, const std::string& b_csv) {
    auto started = std::chrono::steady_clock::now();
    FamilyDefinition def;
    ChainFamily family = resolve_family(flags, &def);
    require_analyzable(family);
    long n = flags.n > 0 ? flags.n : family.n_grid.back();
    Chain chain = family.chain_at(n);
    StationaryMeasure mu = stationary_measure(chain);

    json report = make_report("capacities");
    report["inputs"] = {{"family", to_json(def)}, {"N", n}};
    json results;
    results["N"] = n;
    results["reversible"] = mu.reversible;
    json caps = json::array();

    if (!a_csv.empty() || !b_csv.empty()) {
        if (a_csv.empty() || b_csv.empty())
            throw InvalidArgument("--A and --B must be passed together");
        StateSet a = chain.resolve(split_labels(a_csv));
        StateSet b = chain.resolve(split_labels(b_csv));
        caps.push_back(to_json(capacity(chain, mu, a, b), chain));
    } else {
        MetaPartitionL partition =
            family.partition ? family.partition(n) : throw InvalidArgument(
                "no declared wells; pass --A and --B explicitly");
        MetaPartition part = resolve_partition(chain, partition);
        StateSet all = part.metastates();
        for (std::size_t x = 0; x < part.wells.size(); ++x) {
            caps.push_back(
                to_json(capacity(chain, mu, part.wells[x], all.minus(part.wells[x])), chain));
            for (std::size_t y = x + 1; y < part.wells.size(); ++y)
                caps.push_back(to_json(capacity(chain, mu, part.wells[x], part.wells[y]), chain));
        }
    }
    results["capacities"] = std::move(caps);
    report["results"] = std::move(results);
    emit(flags, report, started);
    return 0;
}

int run_valley(const CommonFlags& flags, const std::string& well_csv,
               const std::string& basin_csv, const std::string& xi, const std::string& mode) {
    auto started = std::chrono::steady_clock::now();
    FamilyDefinition def;
    ChainFamily family = resolve_family(flags, &def);
    require_analyzable(family);

    ValleySpecL valley;
    if (!well_csv.empty()) {
        if (basin_csv.empty() || xi.empty())
            throw InvalidArgument("--well, --basin and --xi go together");
        valley = ValleySpecL{split_labels(well_csv), split_labels(basin_csv), xi};
    } else if (family.valley) {
        valley = *family.valley;
    } else {
        throw InvalidArgument("no valley declared; pass --well/--basin/--xi");
    }

    ValleyMode chosen;
    if (mode == "general") {
        chosen = ValleyMode::General;
    } else if (mode == "reversible") {
        chosen = ValleyMode::Reversible;
    } else {
        StationaryMeasure mu = stationary_measure(family.chain_at(family.n_grid.front()));
        chosen = mu.reversible ? ValleyMode::Reversible : ValleyMode::General;
    }

    ValleyReport result = check_valley_conditions(family, valley, chosen);
    json report = make_report("valley");
    report["inputs"] = {{"family", to_json(def)},
                        {"well", valley.well},
                        {"basin", valley.basin},
                        {"xi", valley.attractor},
                        {"mode", chosen == ValleyMode::Reversible ? "reversible" : "general"}};
    report["results"] = to_json(result);
    emit(flags, report, started);
    return 0;
}

int run_tunneling(const CommonFlags& flags, const std::string& wells_spec,
                  const std::string& attractors_csv) {
    auto started = std::chrono::steady_clock::now();
    FamilyDefinition def;
    ChainFamily family = resolve_family(flags, &def);
    require_analyzable(family);

    std::optional<MetaPartitionL> partition;
    if (!wells_spec.empty()) {
        MetaPartitionL p;
        for (const auto& group : split_labels(wells_spec, ';')) p.wells.push_back(split_labels(group));
        p.attractors = split_labels(attractors_csv);
        if (p.attractors.empty())
            for (const auto& w : p.wells) p.attractors.push_back(w.front());
        partition = std::move(p);
    }

    TunnelingReport result = tunneling_analysis(family, partition, theta_function(flags.theta));
    json report = make_report("tunneling");
    report["inputs"] = {{"family", to_json(def)},
                        {"theta", flags.theta.empty() ? "auto" : flags.theta}};
    report["results"] = to_json(result);
    emit(flags, report, started);
    return 0;
}

int run_simulate(const CommonFlags& flags, bool exit_law, bool meta_rates,
                 const std::string& well_csv, const std::string& basin_csv,
                 const std::string& xi, const std::string& start_label,
                 double horizon_multiplier) {
    auto started = std::chrono::steady_clock::now();
    if (exit_law == meta_rates)
        throw InvalidArgument("pick exactly one of --exit-law and --meta-rates");
    FamilyDefinition def;
    ChainFamily family = resolve_family(flags, &def);
    long n = flags.n > 0 ? flags.n : family.n_grid.back();
    Chain chain = family.chain_at(n);

    double theta = 1.0;
    if (!flags.theta.empty())
        theta = eval_rate_expr(flags.theta, n);
    json report = make_report("simulate");
    report["inputs"] = {{"family", to_json(def)},
                        {"N", n},
                        {"theta", theta},
                        {"reps", flags.reps},
                        {"seed", flags.seed}};

    if (exit_law) {
        ValleySpecL valley_labels;
        if (!well_csv.empty()) {
            valley_labels = ValleySpecL{split_labels(well_csv), split_labels(basin_csv), xi};
        } else if (family.valley) {
            valley_labels = *family.valley;
        } else {
            throw InvalidArgument("no valley declared; pass --well/--basin/--xi");
        }
        ValleySpec valley = resolve_valley(chain, valley_labels);
        int start = start_label.empty() ? valley.attractor : chain.index_of(start_label);
        ExitLawStats stats = exit_law_experiment(chain, valley, theta, flags.reps, flags.seed, start);
        json j = to_json(stats);
        j.erase("normalized_exit_times"); // per-replica data only with --tables
        report["results"] = std::move(j);
    } else {
        if (!family.partition)
            throw InvalidArgument("no metastate partition declared for this family");
        MetaPartition partition = resolve_partition(chain, family.partition(n));
        int start = start_label.empty() ? partition.attractors.front()
                                        : chain.index_of(start_label);
        MetaRateEstimate est = empirical_meta_rates(chain, partition, theta,
                                                    horizon_multiplier * theta, flags.reps,
                                                    flags.seed, start);
        report["results"] = to_json(est);
    }
    emit(flags, report, started);
    return 0;
}

int run_identities(const CommonFlags& flags) {
    auto started = std::chrono::steady_clock::now();
    FamilyDefinition def;
    ChainFamily family = resolve_family(flags, &def);
    require_analyzable(family);
    long n = flags.n > 0 ? flags.n : family.n_grid.front();
    Chain chain = family.chain_at(n);
    StationaryMeasure mu = stationary_measure(chain);
    if (!mu.reversible)
        throw NotReversible("the identity battery needs a reversible chain");

    json details;
    double worst = identity_battery(chain, mu, flags.seed, details);

    json report = make_report("identities");
    report["inputs"] = {{"family", to_json(def)}, {"N", n}, {"seed", flags.seed},
                        {"tolerance", flags.tol}};
    report["results"] = {{"residuals", std::move(details)},
                         {"worst_residual", worst},
                         {"pass", worst <= flags.tol}};
    emit(flags, report, started);
    if (worst > flags.tol) throw SolverFailure("identity battery exceeded tolerance");
    return 0;
}

int run_verify(const CommonFlags& flags, const std::string& name);

int dispatch_error(const Error& e) {
    json diagnostic{{"error", {{"kind", e.kind()}, {"message", e.what()}}}};
    std::cerr << diagnostic.dump() << "\n";
    const std::string& kind = e.kind();
    if (kind == "solver_failure" || kind == "not_irreducible" || kind == "zero_holding_rate" ||
        kind == "not_reversible" || kind == "absorbed_before_target" ||
        kind == "never_visits_set" || kind == "starts_in_annulus" ||
        kind == "non_positive_value")
        return 3;
    return 2;
}

// --- verify-example -------------------------------------------------------

struct Verifier {
    json checks = json::array();
    bool ok = true;

    void expect(const std::string& what, bool condition, const json& details = {}) {
        checks.push_back({{"check", what}, {"pass", condition}, {"details", details}});
        ok = ok && condition;
        // progress lines on stderr; stdout stays a clean report
        std::cerr << (condition ? "[PASS] " : "[FAIL] ") << what << "\n";
    }
};

void verify_ex1(const CommonFlags& flags, Verifier& v) {
    ChainFamily family = instantiate(builtin_family("ex1"));
    Chain chain = family.chain_at(100);
    ValleySpec valley = resolve_valley(chain, *family.valley);
    ExitLawStats stats = exit_law_experiment(chain, valley, 2.0, flags.reps, flags.seed);
    v.expect("sortie annulus occupation in [0.23, 0.27]",
             stats.mean_sortie_delta_occupation >= 0.23 &&
                 stats.mean_sortie_delta_occupation <= 0.27,
             {{"value", stats.mean_sortie_delta_occupation}});
    ValleyReport vr = check_valley_conditions(family, *family.valley, ValleyMode::General);
    bool ccb_fails = false;
    for (const auto& c : vr.conditions)
        if (c.name == "annulus_occupation") ccb_fails = !c.holds;
    v.expect("annulus occupation condition fails (not a valley)", ccb_fails && !vr.valley);
}

void verify_ex2(const CommonFlags& flags, Verifier& v) {
    (void)flags;
    ChainFamily family = instantiate(builtin_family("ex2"));
    Chain chain = family.chain_at(1000);
    StationaryMeasure mu = stationary_measure(chain);
    ValleyDepthResult wide =
        valley_depth(chain, mu, resolve_valley(chain, ValleySpecL{{"-1"}, {"-1", "0"}, "-1"}));
    v.expect("depth of ({-1}, {-1,0}) within 0.5% of 2",
             std::abs(wide.depth / 2.0 - 1.0) <= 0.005, {{"value", wide.depth}});
    ValleyDepthResult tight =
        valley_depth(chain, mu, resolve_valley(chain, ValleySpecL{{"-1"}, {"-1"}, "-1"}));
    v.expect("depth of ({-1}, {-1}) equals 1/lambda(-1) = 1",
             std::abs(tight.depth - 1.0) <= 1e-9, {{"value", tight.depth}});
}

void verify_torus(const CommonFlags& flags, Verifier& v) {
    (void)flags;
    FamilyDefinition def = builtin_family("torus2");
    def.n_grid = {8};
    ChainFamily family = instantiate(def);
    Chain chain = family.chain_at(8);
    StationaryMeasure mu = stationary_measure(chain);
    double uniform = 1.0 / chain.size();
    bool flat = true;
    for (double m : mu.mu) flat = flat && std::abs(m - uniform) <= 1e-9;
    v.expect("stationary measure is uniform", flat);
    MetaPartition part = resolve_partition(chain, family.partition(8));
    double cap01 = capacity(chain, mu, part.wells[0], part.wells[1]).cap;
    double cap10 = capacity(chain, mu, part.wells[1], part.wells[0]).cap;
    v.expect("torus capacities are symmetric", testingGap(cap01, cap10) <= 1e-10);
}

void verify_ex4(const CommonFlags& flags, Verifier& v) {
    (void)flags;
    ChainFamily family = instantiate(builtin_family("ex4"));
    TunnelingReport report = tunneling_analysis(family);
    v.expect("limit rate 1->2 equals 1",
             std::abs(report.limit_rates[0][1] - 1.0) <= 1e-6,
             {{"value", report.limit_rates[0][1]}});
    v.expect("limit rate 2->1 vanishes", report.limit_rates[1][0] == 0.0);
    v.expect("second metastate is absorbing", report.absorbing == std::vector<int>{1});
}

void verify_ex5(const CommonFlags& flags, Verifier& v) {
    const long n = 1000;
    ChainFamily family = instantiate(builtin_family("ex5"));
    Chain chain = family.chain_at(n);
    StationaryMeasure mu = stationary_measure(chain);

    const double n3 = static_cast<double>(n) * n * n;
    struct Row { ValleySpecL valley; double scale; };
    std::vector<Row> rows = {
        {{{"3"}, {"3", "4"}, "3"}, 2.0 * n},
        {{{"5"}, {"4", "5"}, "5"}, 2.0 * n},
        {{{"1"}, {"1", "2"}, "1"}, 2.0 * static_cast<double>(n) * n},
        {{{"3", "4", "5"}, {"3", "4", "5"}, "3"}, 2.0 * n3},
        {{{"3", "4", "5"}, {"2", "3", "4", "5"}, "3"}, 4.0 * n3},
    };
    for (const auto& row : rows) {
        ValleyDepthResult depth = valley_depth(chain, mu, resolve_valley(chain, row.valley));
        v.expect("depth scale for well {" + row.valley.well.front() + "...} within 1%",
                 std::abs(depth.depth / row.scale - 1.0) <= 0.01,
                 {{"depth", depth.depth}, {"scale", row.scale}});
    }

    TunnelingReport report =
        tunneling_analysis(family, {}, [](long m) { return static_cast<double>(m); });
    v.expect("two-well limit rates are 1/2",
             std::abs(report.limit_rates[0][1] - 0.5) <= 0.005 &&
                 std::abs(report.limit_rates[1][0] - 0.5) <= 0.005,
             {{"r12", report.limit_rates[0][1]}, {"r21", report.limit_rates[1][0]}});
    bool global_fails = false;
    for (const auto& c : report.conditions)
        if (c.name == "annulus_evacuation_global") global_fails = !c.holds;
    v.expect("global annulus evacuation fails (hidden deeper well)", global_fails);

    json details;
    Chain small = family.chain_at(100);
    StationaryMeasure small_mu = stationary_measure(small);
    double worst = identity_battery(small, small_mu, flags.seed, details);
    v.expect("identity battery on N=100 below 1e-8", worst <= 1e-8, {{"worst", worst}});
}

void verify_ex6(const CommonFlags& flags, Verifier& v) {
    ChainFamily family = instantiate(builtin_family("ex6"));
    Chain chain = family.chain_at(100);
    StateSet target{chain.index_of("3")};
    double sum = 0.0;
    std::vector<double> normalized;
    normalized.reserve(static_cast<std::size_t>(flags.reps));
    for (long rep = 0; rep < flags.reps; ++rep) {
        RngStream rng(flags.seed, static_cast<std::uint64_t>(rep));
        PathSample path = sample_path(chain, chain.index_of("1"), StopRule{target}, rng);
        normalized.push_back(path.horizon / 2.0);
        sum += normalized.back();
    }
    double mean = sum / static_cast<double>(flags.reps);
    KsResult ks = ks_exponential_test(normalized);
    v.expect("mean of T_3 / 2 within [0.97, 1.03]", mean >= 0.97 && mean <= 1.03,
             {{"mean", mean}});
    v.expect("exit law consistent with Exp(1) at alpha = 0.01", ks.p_value > 0.01,
             {{"p_value", ks.p_value}, {"statistic", ks.statistic}});
}

void verify_ex7(const CommonFlags& flags, Verifier& v) {
    (void)flags;
    ChainFamily family = instantiate(builtin_family("ex7"));
    TunnelingReport report =
        tunneling_analysis(family, {}, [](long m) { return static_cast<double>(m); });
    auto in_band = [&](int x, int y) {
        double r = report.limit_rates[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
        return r >= 0.495 && r <= 0.505;
    };
    v.expect("r(1,2), r(2,3), r(3,2) in [0.495, 0.505]",
             in_band(0, 1) && in_band(1, 2) && in_band(2, 1),
             {{"limit_rates", to_json(report)["limit_rates"]}});
    double others = std::max({report.limit_rates[0][2], report.limit_rates[1][0],
                              report.limit_rates[2][0]});
    v.expect("all other limit rates below 1e-4", others < 1e-4, {{"max_other", others}});
    v.expect("first metastate is inaccessible", report.inaccessible == std::vector<int>{0});
}

void verify_ex8(const CommonFlags& flags, Verifier& v) {
    ChainFamily family = instantiate(builtin_family("ex8"));
    Chain chain = family.chain_at(100);
    ValleySpec valley = resolve_valley(chain, *family.valley);
    ExitLawStats stats =
        exit_law_experiment(chain, valley, 1.0, flags.reps, flags.seed, chain.index_of("2"));
    v.expect("attractor-first frequency from state 2 at most 0.02",
             stats.attractor_first_frequency <= 0.02,
             {{"value", stats.attractor_first_frequency}});
}

int run_verify(const CommonFlags& flags, const std::string& name) {
    auto started = std::chrono::steady_clock::now();
    Verifier v;
    if (name == "ex1") verify_ex1(flags, v);
    else if (name == "ex2") verify_ex2(flags, v);
    else if (name == "ex3" || name == "torus2") verify_torus(flags, v);
    else if (name == "ex4") verify_ex4(flags, v);
    else if (name == "ex5") verify_ex5(flags, v);
    else if (name == "ex6") verify_ex6(flags, v);
    else if (name == "ex7") verify_ex7(flags, v);
    else if (name == "ex8") verify_ex8(flags, v);
    else throw InvalidArgument("unknown example '" + name + "'");

    json report = make_report("verify-example");
    report["inputs"] = {{"example", name}, {"seed", flags.seed}, {"reps", flags.reps}};
    report["results"] = {{"checks", v.checks}, {"pass", v.ok}};
    emit(flags, report, started);
    return v.ok ? 0 : 4;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"potential-theoretic analysis of metastable continuous-time Markov chains"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string a_csv, b_csv, well_csv, basin_csv, xi, mode = "auto";
    std::string wells_spec, attractors_csv, start_label, example;
    bool exit_law = false, meta_rates = false;
    double horizon_multiplier = 50.0;

    auto add_common = [&](CLI::App* cmd, bool wants_grid) {
        cmd->add_option("--family", flags.family, "builtin family name (ex1..ex8, torus2)");
        cmd->add_option("--file", flags.file, "family definition file (JSON)");
        cmd->add_option("--N", flags.n, "single parameter value N");
        if (wants_grid)
            cmd->add_option("--n-grid", flags.n_grid, "parameter grid (overrides the default)");
        cmd->add_option("--seed", flags.seed, "random seed");
        cmd->add_option("--tol", flags.tol, "acceptance tolerance where applicable");
        cmd->add_option("--out", flags.out, "write the report to this path instead of stdout");
        cmd->add_flag("--tables", flags.tables, "also emit flat CSV tables");
    };

    CLI::App* capacities = app.add_subcommand("capacities", "capacity table for declared set pairs");
    add_common(capacities, false);
    capacities->add_option("--A", a_csv, "comma-separated source set labels");
    capacities->add_option("--B", b_csv, "comma-separated target set labels");

    CLI::App* valley = app.add_subcommand("valley", "valley condition checks and depth");
    add_common(valley, true);
    valley->add_option("--well", well_csv, "well labels");
    valley->add_option("--basin", basin_csv, "basin labels");
    valley->add_option("--xi", xi, "attractor label");
    valley->add_option("--mode", mode, "general | reversible | auto")
        ->check(CLI::IsMember({"general", "reversible", "auto"}));

    CLI::App* tunneling = app.add_subcommand("tunneling", "metastate tunneling analysis");
    add_common(tunneling, true);
    tunneling->add_option("--theta", flags.theta, "time-scale expression in N (default: auto)");
    tunneling->add_option("--wells", wells_spec,
                          "wells as semicolon-separated label groups, e.g. '1;3;5'");
    tunneling->add_option("--attractors", attractors_csv, "comma-separated attractor labels");

    CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo experiments");
    add_common(simulate, false);
    simulate->add_flag("--exit-law", exit_law, "exit-law experiment for a valley");
    simulate->add_flag("--meta-rates", meta_rates, "empirical metastate rate estimation");
    simulate->add_option("--theta", flags.theta, "time-scale expression in N");
    simulate->add_option("--reps", flags.reps, "number of replicas");
    simulate->add_option("--well", well_csv, "well labels");
    simulate->add_option("--basin", basin_csv, "basin labels");
    simulate->add_option("--xi", xi, "attractor label");
    simulate->add_option("--start", start_label, "start state label");
    simulate->add_option("--horizon", horizon_multiplier, "horizon in units of theta");

    CLI::App* verify = app.add_subcommand("verify-example", "canned checks for one builtin");
    add_common(verify, false);
    verify->add_option("example", example, "builtin name")->required();
    verify->add_option("--reps", flags.reps, "number of replicas for the Monte Carlo checks");

    CLI::App* identities = app.add_subcommand("identities", "capacity/rate identity battery");
    add_common(identities, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (capacities->parsed()) return run_capacities(flags, a_csv, b_csv);
        if (valley->parsed()) return run_valley(flags, well_csv, basin_csv, xi, mode);
        if (tunneling->parsed()) return run_tunneling(flags, wells_spec, attractors_csv);
        if (simulate->parsed())
            return run_simulate(flags, exit_law, meta_rates, well_csv, basin_csv, xi,
                                start_label, horizon_multiplier);
        if (verify->parsed()) return run_verify(flags, example);
        if (identities->parsed()) return run_identities(flags);
    } catch (const Error& e) {
        return dispatch_error(e);
    } catch (const std::exception& e) {
        json diagnostic{{"error", {{"kind", "internal"}, {"message", e.what()}}}};
        std::cerr << diagnostic.dump() << "\n";
        return 3;
    }
    return 2;
}
