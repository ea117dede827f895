#include "ctmeta/families.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ctmeta/report.hpp"

namespace ctmeta {

namespace {

/// Recursive-descent parser for the restricted rate grammar:
///   expr  := term (('+'|'-') term)*
///   term  := unary (('*'|'/') unary)*
///   unary := '-' unary | power
///   power := atom ('^' ['-'] integer)?
///   atom  := number | 'N' | '(' expr ')'
class ExprParser {
public:
    ExprParser(const std::string& text, long n) : text_(text), n_(static_cast<double>(n)) {}

    double parse() {
        double v = expr();
        skip_space();
        if (pos_ != text_.size()) throw ParseError(pos_, "unexpected trailing input");
        return v;
    }

private:
    double expr() {
        double v = term();
        for (;;) {
            skip_space();
            if (accept('+')) v += term();
            else if (accept('-')) v -= term();
            else return v;
        }
    }

    double term() {
        double v = unary();
        for (;;) {
            skip_space();
            if (accept('*')) v *= unary();
            else if (accept('/')) {
                double d = unary();
                if (d == 0.0) throw ParseError(pos_, "division by zero");
                v /= d;
            } else
                return v;
        }
    }

    double unary() {
        skip_space();
        if (accept('-')) return -unary();
        return power();
    }

    double power() {
        double base = atom();
        skip_space();
        if (!accept('^')) return base;
        skip_space();
        bool neg = accept('-');
        skip_space();
        if (pos_ >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_])))
            throw ParseError(pos_, "expected an integer exponent after '^'");
        long e = 0;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
            e = e * 10 + (text_[pos_] - '0');
            if (e > 64) throw ParseError(pos_, "exponent too large");
            ++pos_;
        }
        double v = std::pow(base, static_cast<double>(e));
        return neg ? 1.0 / v : v;
    }

    double atom() {
        skip_space();
        if (pos_ >= text_.size()) throw ParseError(pos_, "unexpected end of expression");
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            double v = expr();
            skip_space();
            if (!accept(')')) throw ParseError(pos_, "expected ')'");
            return v;
        }
        if (c == 'N' || c == 'n') {
            ++pos_;
            return n_;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t consumed = 0;
            double v;
            try {
                v = std::stod(text_.substr(pos_), &consumed);
            } catch (const std::exception&) {
                throw ParseError(pos_, "malformed number");
            }
            // std::stod accepts exponents like 1e3; keep them out of the grammar.
            for (std::size_t k = 0; k < consumed; ++k) {
                char d = text_[pos_ + k];
                if (!std::isdigit(static_cast<unsigned char>(d)) && d != '.')
                    throw ParseError(pos_ + k, "unexpected character in number");
            }
            pos_ += consumed;
            return v;
        }
        throw ParseError(pos_, std::string("unexpected character '") + c + "'");
    }

    bool accept(char c) {
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    const std::string& text_;
    double n_;
    std::size_t pos_ = 0;
};

FamilyDefinition make_template(const std::string& name, std::vector<std::string> states,
                               std::vector<RateRule> rates) {
    FamilyDefinition def;
    def.name = name;
    def.kind = "template";
    def.tmpl.states = std::move(states);
    def.tmpl.rates = std::move(rates);
    def.n_grid = default_n_grid();
    return def;
}

std::string torus_label(const std::vector<long>& coords, int side) {
    std::string out = "(";
    for (std::size_t i = 0; i + 1 < coords.size(); ++i)
        out += std::to_string(coords[i]) + ",";
    out += side > 0 ? "+)" : "-)";
    return out;
}

ChainSpec torus_spec(int dim, long length, double coupling) {
    long volume = 1;
    for (int d = 0; d < dim; ++d) volume *= length;

    ChainSpec spec;
    std::vector<long> coords(static_cast<std::size_t>(dim) + 1, 0);
    for (int side = 0; side < 2; ++side) {
        for (long cell = 0; cell < volume; ++cell) {
            long rest = cell;
            for (int d = 0; d < dim; ++d) {
                coords[static_cast<std::size_t>(d)] = rest % length;
                rest /= length;
            }
            coords.back() = side == 0 ? 1 : -1;
            spec.add_state(torus_label(coords, static_cast<int>(coords.back())));
        }
    }

    auto index = [&](long cell, int side) { return static_cast<int>(side * volume + cell); };
    const double hop = 1.0 / (2.0 * dim);
    for (int side = 0; side < 2; ++side) {
        for (long cell = 0; cell < volume; ++cell) {
            long rest = cell;
            long stride = 1;
            for (int d = 0; d < dim; ++d) {
                long coord = rest % length;
                rest /= length;
                long up = cell - coord * stride + ((coord + 1) % length) * stride;
                long down = cell - coord * stride + ((coord + length - 1) % length) * stride;
                spec.set_rate(index(cell, side), index(up, side), hop);
                if (length > 2)
                    spec.set_rate(index(cell, side), index(down, side), hop);
                else if (up != down)
                    spec.set_rate(index(cell, side), index(down, side), hop);
                stride *= length;
            }
            spec.set_rate(index(cell, side), index(cell, 1 - side), coupling);
        }
    }
    return spec;
}

} // namespace

double eval_rate_expr(const std::string& expr, long n) {
    return ExprParser(expr, n).parse();
}

std::vector<std::string> builtin_family_names() {
    return {"ex1", "ex2", "ex3", "ex4", "ex5", "ex6", "ex7", "ex8", "torus2"};
}

FamilyDefinition builtin_family(const std::string& name) {
    if (name == "ex1") {
        auto def = make_template(name, {"-1", "0", "1"},
                                 {{"-1", "0", "N"}, {"1", "0", "N"}, {"0", "-1", "1"}, {"0", "1", "1"}});
        def.valley = ValleySpecL{{"-1"}, {"-1", "0"}, "-1"};
        def.notes = "fast well, slow annulus: the annulus-occupation condition fails";
        return def;
    }
    if (name == "ex2") {
        auto def = make_template(name, {"-1", "0", "1"},
                                 {{"-1", "0", "1"}, {"1", "0", "1"}, {"0", "-1", "N"}, {"0", "1", "N"}});
        def.valley = ValleySpecL{{"-1"}, {"-1", "0"}, "-1"};
        def.wells = {{"-1"}, {"1"}};
        def.attractors = {"-1", "1"};
        def.notes = "the depth of a valley depends on the basin";
        return def;
    }
    if (name == "ex3") return builtin_family("torus2");
    if (name == "ex4") {
        auto def = make_template(
            name, {"0", "1", "2"},
            {{"1", "0", "N-1"}, {"1", "2", "1"}, {"2", "1", "1/N"}, {"0", "1", "N^2"}});
        def.wells = {{"0"}, {"1", "2"}};
        def.attractors = {"0", "1"};
        def.valley = ValleySpecL{{"1", "2"}, {"1", "2"}, "1"};
        def.notes = "tunneling at scale 1/N^2 with an absorbing metastate that hides a deeper well";
        return def;
    }
    if (name == "ex5") {
        auto def = make_template(name, {"1", "2", "3", "4", "5"},
                                 {{"2", "1", "1"},
                                  {"2", "3", "1"},
                                  {"4", "3", "1"},
                                  {"4", "5", "1"},
                                  {"1", "2", "1/N^2"},
                                  {"3", "2", "1/N^3"},
                                  {"3", "4", "1/N"},
                                  {"5", "4", "1/N"}});
        def.wells = {{"3"}, {"5"}};
        def.attractors = {"3", "5"};
        def.valley = ValleySpecL{{"3"}, {"3", "4"}, "3"};
        def.notes = "valleys of depth 2N, 2N^2, 2N^3, 4N^3; tunneling between 3 and 5 at scale N";
        return def;
    }
    if (name == "ex6") {
        auto def = make_template(name, {"1", "2", "3"},
                                 {{"1", "2", "N"}, {"2", "1", "N-1"}, {"2", "3", "1"}});
        def.valley = ValleySpecL{{"1"}, {"1", "2"}, "1"};
        def.simulation_only = true;
        def.notes = "state 3 is absorbing; exit-time law is exponential on scale 2 while the "
                    "annulus is revisited many times";
        return def;
    }
    if (name == "ex7") {
        auto def = make_template(name, {"1", "2", "3", "4", "5"},
                                 {{"2", "1", "1"},
                                  {"2", "3", "1"},
                                  {"4", "3", "1"},
                                  {"4", "5", "1"},
                                  {"1", "2", "1/N"},
                                  {"3", "4", "1/N"},
                                  {"5", "4", "1/N"},
                                  {"3", "2", "1/N^2"}});
        def.wells = {{"1"}, {"3"}, {"5"}};
        def.attractors = {"1", "3", "5"};
        def.valley = ValleySpecL{{"1"}, {"1", "2"}, "1"};
        def.notes = "metastable at scale N; the first metastate is inaccessible";
        return def;
    }
    if (name == "ex8") {
        auto def = make_template(
            name, {"0", "1", "2", "3"},
            {{"1", "0", "1-1/N"}, {"2", "3", "1-1/N"}, {"1", "2", "1/N"}, {"2", "1", "1/N"}});
        def.valley = ValleySpecL{{"1", "2"}, {"1", "2"}, "1"};
        def.simulation_only = true;
        def.notes = "absorbing boundary states 0 and 3: the attractor is usually missed";
        return def;
    }
    if (name == "torus2") {
        FamilyDefinition def;
        def.name = "torus2";
        def.kind = "torus";
        def.dim = 1;
        def.theta_expr = "N^2";
        def.n_grid = {4, 8, 16, 32};
        def.notes = "two tori of side N coupled pointwise at rate 1/theta_N; a valley without "
                    "an attractor";
        return def;
    }
    throw InvalidArgument("unknown builtin family '" + name + "'");
}

FamilyDefinition parse_family_definition(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(e.byte, e.what());
    }
    return family_from_json(j);
}

std::string serialize_family_definition(const FamilyDefinition& def) {
    return to_json(def).dump(2) + "\n";
}

FamilyDefinition load_family_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open family file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_family_definition(buffer.str());
}

FamilyDefinition load_family(const std::string& name_or_path) {
    for (const auto& name : builtin_family_names())
        if (name == name_or_path) return builtin_family(name);
    return load_family_file(name_or_path);
}

ChainFamily instantiate(const FamilyDefinition& def) {
    ChainFamily family;
    family.label = def.name;
    family.n_grid = def.n_grid.empty() ? default_n_grid() : def.n_grid;
    family.simulation_only = def.simulation_only;
    family.build_options.allow_absorbing = def.simulation_only;
    family.build_options.require_irreducible = !def.simulation_only;
    family.valley = def.valley;

    if (def.kind == "template") {
        FamilyTemplate tmpl = def.tmpl;
        if (tmpl.states.empty()) throw InvalidArgument("family template has no states");
        family.generator = [tmpl](long n) {
            ChainSpec spec(tmpl.states);
            for (const auto& rule : tmpl.rates) {
                double value = eval_rate_expr(rule.expr, n);
                if (!(value > 0.0)) throw NegativeRate(n, rule.from + " -> " + rule.to, value);
                spec.set_rate(rule.from, rule.to, value);
            }
            return spec;
        };
        if (!def.wells.empty()) {
            MetaPartitionL partition{def.wells, def.attractors};
            family.partition = [partition](long) { return partition; };
        }
    } else if (def.kind == "torus") {
        if (def.dim < 1 || def.dim > 3)
            throw InvalidArgument("torus dimension must be 1, 2 or 3");
        int dim = def.dim;
        long cap = def.override_state_cap ? std::numeric_limits<long>::max() : def.state_cap;
        std::string theta = def.theta_expr;
        family.generator = [dim, cap, theta](long n) {
            if (n < 2) throw InvalidArgument("torus side must be at least 2");
            long volume = 1;
            for (int d = 0; d < dim; ++d) {
                volume *= n;
                if (2 * volume > cap)
                    throw InvalidArgument("torus state count exceeds the cap; pass the override "
                                          "flag to allow it");
            }
            double t = eval_rate_expr(theta, n);
            if (!(t > 0.0)) throw NegativeRate(n, "torus time scale", t);
            return torus_spec(dim, n, 1.0 / t);
        };
        family.partition = [dim](long n) {
            long volume = 1;
            for (int d = 0; d < dim; ++d) volume *= n;
            MetaPartitionL partition;
            partition.wells.resize(2);
            std::vector<long> coords(static_cast<std::size_t>(dim) + 1, 0);
            for (int side = 0; side < 2; ++side) {
                for (long cell = 0; cell < volume; ++cell) {
                    long rest = cell;
                    for (int d = 0; d < dim; ++d) {
                        coords[static_cast<std::size_t>(d)] = rest % n;
                        rest /= n;
                    }
                    coords.back() = side == 0 ? 1 : -1;
                    partition.wells[static_cast<std::size_t>(side)].push_back(
                        torus_label(coords, static_cast<int>(coords.back())));
                }
            }
            std::fill(coords.begin(), coords.end() - 1, 0);
            coords.back() = 1;
            partition.attractors.push_back(torus_label(coords, 1));
            coords.back() = -1;
            partition.attractors.push_back(torus_label(coords, -1));
            return partition;
        };
    } else {
        throw InvalidArgument("unknown family kind '" + def.kind + "'");
    }

    // Validate the declared structure on the grid before handing it out.
    for (long n : family.n_grid) {
        Chain chain = build_chain(family.generator(n), family.build_options);
        if (family.partition) resolve_partition(chain, family.partition(n));
        if (family.valley && !family.simulation_only) resolve_valley(chain, *family.valley);
        if (family.valley && family.simulation_only) {
            // Only check that the labels exist; absorbing fixtures are not
            // required to satisfy the analytic invariants.
            chain.resolve(family.valley->well);
            chain.resolve(family.valley->basin);
            chain.index_of(family.valley->attractor);
        }
    }
    return family;
}

} // namespace ctmeta
