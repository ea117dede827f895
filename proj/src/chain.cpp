#include "ctmeta/chain.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>

namespace ctmeta {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Strongly connected components in discovery order (iterative Tarjan).
std::vector<std::vector<int>> strongly_connected_components(
    const std::vector<std::vector<std::pair<int, double>>>& adjacency) {
    const int n = static_cast<int>(adjacency.size());
    std::vector<int> index(n, -1), lowlink(n, 0);
    std::vector<bool> on_stack(n, false);
    std::vector<int> stack;
    std::vector<std::vector<int>> components;
    int next_index = 0;

    struct Frame {
        int v;
        std::size_t edge;
    };
    std::vector<Frame> call_stack;

    for (int root = 0; root < n; ++root) {
        if (index[root] != -1) continue;
        call_stack.push_back({root, 0});
        index[root] = lowlink[root] = next_index++;
        stack.push_back(root);
        on_stack[root] = true;

        while (!call_stack.empty()) {
            Frame& frame = call_stack.back();
            const auto& edges = adjacency[static_cast<std::size_t>(frame.v)];
            if (frame.edge < edges.size()) {
                int w = edges[frame.edge].first;
                ++frame.edge;
                if (index[w] == -1) {
                    index[w] = lowlink[w] = next_index++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    call_stack.push_back({w, 0});
                } else if (on_stack[w]) {
                    lowlink[frame.v] = std::min(lowlink[frame.v], index[w]);
                }
            } else {
                int v = frame.v;
                call_stack.pop_back();
                if (!call_stack.empty()) {
                    int parent = call_stack.back().v;
                    lowlink[parent] = std::min(lowlink[parent], lowlink[v]);
                }
                if (lowlink[v] == index[v]) {
                    std::vector<int> comp;
                    int w;
                    do {
                        w = stack.back();
                        stack.pop_back();
                        on_stack[w] = false;
                        comp.push_back(w);
                    } while (w != v);
                    components.push_back(std::move(comp));
                }
            }
        }
    }
    return components;
}

/// Assembles the generator restricted to `rows` (as both row and column
/// set): entries L(i, j) for i, j in the set, diagonal -lambda.
SpMat restricted_generator(const Chain& chain, const std::vector<int>& rows,
                           const std::vector<int>& position) {
    const int m = static_cast<int>(rows.size());
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(m) * 4);
    for (int local = 0; local < m; ++local) {
        int i = rows[static_cast<std::size_t>(local)];
        triplets.emplace_back(local, local, -chain.holding(i));
        for (const auto& [j, r] : chain.rates_from(i)) {
            int lj = position[static_cast<std::size_t>(j)];
            if (lj >= 0) triplets.emplace_back(local, lj, r);
        }
    }
    SpMat mat(m, m);
    mat.setFromTriplets(triplets.begin(), triplets.end());
    return mat;
}

std::vector<int> positions(int n, const std::vector<int>& subset) {
    std::vector<int> pos(static_cast<std::size_t>(n), -1);
    for (int local = 0; local < static_cast<int>(subset.size()); ++local)
        pos[static_cast<std::size_t>(subset[static_cast<std::size_t>(local)])] = local;
    return pos;
}

} // namespace

ChainSpec::ChainSpec(const std::vector<std::string>& labels) {
    for (const auto& l : labels) add_state(l);
}

int ChainSpec::add_state(const std::string& label) {
    if (index_.count(label))
        throw InvalidArgument("duplicate state label '" + label + "'");
    int idx = static_cast<int>(labels_.size());
    labels_.push_back(label);
    index_[label] = idx;
    out_.emplace_back();
    return idx;
}

void ChainSpec::set_rate(int from, int to, double rate) {
    if (from < 0 || from >= size() || to < 0 || to >= size())
        throw InvalidArgument("state index out of range");
    if (from == to)
        throw InvalidArgument("self-loop rate for state '" + label(from) +
                              "' rejected; omit diagonal entries");
    if (!std::isfinite(rate) || rate < 0.0)
        throw InvalidArgument("rate " + label(from) + " -> " + label(to) +
                              " must be finite and nonnegative");
    auto& row = out_[static_cast<std::size_t>(from)];
    auto it = std::lower_bound(row.begin(), row.end(), to,
                               [](const auto& e, int t) { return e.first < t; });
    if (it != row.end() && it->first == to)
        it->second = rate;
    else
        row.insert(it, {to, rate});
}

void ChainSpec::set_rate(const std::string& from, const std::string& to, double rate) {
    set_rate(index_of(from), index_of(to), rate);
}

int ChainSpec::index_of(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) throw UnknownState(label);
    return it->second;
}

double ChainSpec::rate(int from, int to) const {
    const auto& row = out_.at(static_cast<std::size_t>(from));
    auto it = std::lower_bound(row.begin(), row.end(), to,
                               [](const auto& e, int t) { return e.first < t; });
    return (it != row.end() && it->first == to) ? it->second : 0.0;
}

std::span<const std::pair<int, double>> ChainSpec::rates_from(int from) const {
    const auto& row = out_.at(static_cast<std::size_t>(from));
    return {row.data(), row.size()};
}

StateSet ChainSpec::resolve(const std::vector<std::string>& labels) const {
    std::vector<int> idx;
    idx.reserve(labels.size());
    for (const auto& l : labels) idx.push_back(index_of(l));
    return StateSet(std::move(idx));
}

Chain build_chain(const ChainSpec& spec) { return build_chain(spec, BuildOptions{}); }

Chain build_chain(const ChainSpec& spec, const BuildOptions& options) {
    Chain chain;
    chain.spec_ = spec;
    const int n = spec.size();
    if (n == 0) throw InvalidArgument("chain has no states");

    chain.holding_.assign(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double lambda = 0.0;
        for (const auto& [j, r] : spec.rates_from(i)) {
            (void)j;
            lambda += r;
        }
        chain.holding_[static_cast<std::size_t>(i)] = lambda;
        chain.max_holding_ = std::max(chain.max_holding_, lambda);
        if (lambda <= 0.0) {
            if (!options.allow_absorbing) throw ZeroHoldingRate(spec.label(i));
            chain.has_absorbing_ = true;
        }
    }

    std::vector<std::vector<std::pair<int, double>>> adjacency(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto row = spec.rates_from(i);
        adjacency[static_cast<std::size_t>(i)].assign(row.begin(), row.end());
    }
    auto components = strongly_connected_components(adjacency);
    chain.irreducible_ = components.size() == 1;
    if (!chain.irreducible_ && options.require_irreducible) {
        std::vector<std::vector<std::string>> labeled;
        for (auto& comp : components) {
            std::vector<std::string> names;
            std::sort(comp.begin(), comp.end());
            for (int s : comp) names.push_back(spec.label(s));
            labeled.push_back(std::move(names));
        }
        throw NotIrreducible(std::move(labeled));
    }
    return chain;
}

std::vector<double> Chain::apply_generator(std::span<const double> f) const {
    const int n = size();
    if (static_cast<int>(f.size()) != n)
        throw InvalidArgument("function size does not match state count");
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (const auto& [j, r] : rates_from(i))
            acc += r * (f[static_cast<std::size_t>(j)] - f[static_cast<std::size_t>(i)]);
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

StationaryMeasure stationary_measure(const Chain& chain, const SolveOptions& options) {
    const int n = chain.size();
    if (!chain.irreducible())
        throw NotIrreducible({});
    StationaryMeasure result;
    result.mu.assign(static_cast<std::size_t>(n), 1.0);

    if (n > 1) {
        // Fix mu(s0) = 1 and solve the transposed-balance system for the rest:
        // sum_eta mu(eta) L(eta, xi) = 0 for xi != s0.
        const int m = n - 1;
        std::vector<Triplet> triplets;
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
        for (int i = 0; i < n; ++i) {
            for (const auto& [j, r] : chain.rates_from(i)) {
                if (j == 0) continue;
                if (i == 0)
                    rhs[j - 1] -= r;
                else
                    triplets.emplace_back(j - 1, i - 1, r);
            }
            if (i > 0) triplets.emplace_back(i - 1, i - 1, -chain.holding(i));
        }
        SpMat mat(m, m);
        mat.setFromTriplets(triplets.begin(), triplets.end());
        mat.makeCompressed();

        Eigen::SparseLU<SpMat> solver;
        solver.compute(mat);
        if (solver.info() != Eigen::Success)
            throw SolverFailure("stationary measure factorization failed");
        Eigen::VectorXd x = solver.solve(rhs);
        if (solver.info() != Eigen::Success)
            throw SolverFailure("stationary measure solve failed");
        for (int i = 1; i < n; ++i) result.mu[static_cast<std::size_t>(i)] = x[i - 1];
    }

    double total = 0.0;
    for (double v : result.mu) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw SolverFailure("stationary solve produced a nonpositive component");
        total += v;
    }
    for (double& v : result.mu) v /= total;

    // Residual ||mu L||_inf relative to the largest holding rate.
    double residual = 0.0;
    std::vector<double> flow(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double mi = result.mu[static_cast<std::size_t>(i)];
        flow[static_cast<std::size_t>(i)] -= mi * chain.holding(i);
        for (const auto& [j, r] : chain.rates_from(i)) flow[static_cast<std::size_t>(j)] += mi * r;
    }
    for (double v : flow) residual = std::max(residual, std::abs(v));
    result.invariance_residual = residual / std::max(chain.max_holding(), 1e-300);
    if (result.invariance_residual > options.tolerance)
        throw SolverFailure("stationary measure residual " +
                            std::to_string(result.invariance_residual) + " exceeds tolerance");

    result.jump_measure.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        result.jump_measure[static_cast<std::size_t>(i)] =
            chain.holding(i) * result.mu[static_cast<std::size_t>(i)];

    // Every directed entry is visited, so one-directional edges are caught.
    double db_residual = 0.0;
    for (int i = 0; i < n; ++i) {
        for (const auto& [j, r] : chain.rates_from(i)) {
            double f1 = result.mu[static_cast<std::size_t>(i)] * r;
            double f2 = result.mu[static_cast<std::size_t>(j)] * chain.rate(j, i);
            double scale = std::max(f1, f2);
            if (scale > 0.0) db_residual = std::max(db_residual, std::abs(f1 - f2) / scale);
        }
    }
    result.detailed_balance_residual = db_residual;
    result.reversible = db_residual <= options.reversibility_tolerance;
    return result;
}

std::vector<double> expected_additive_vector(const Chain& chain, std::span<const double> g,
                                             const StateSet& target) {
    const int n = chain.size();
    if (static_cast<int>(g.size()) != n)
        throw InvalidArgument("integrand size does not match state count");
    if (target.empty()) throw InvalidArgument("hitting target must be nonempty");

    std::vector<double> u(static_cast<std::size_t>(n), 0.0);
    StateSet off = target.complement(n);
    if (off.empty()) return u;

    const auto& rows = off.items();
    auto pos = positions(n, rows);
    SpMat mat = restricted_generator(chain, rows, pos);
    mat.makeCompressed();

    Eigen::VectorXd rhs(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k)
        rhs[static_cast<Eigen::Index>(k)] = -g[static_cast<std::size_t>(rows[k])];

    Eigen::SparseLU<SpMat> solver;
    solver.compute(mat);
    if (solver.info() != Eigen::Success)
        throw SolverFailure("hitting-functional factorization failed");
    Eigen::VectorXd x = solver.solve(rhs);
    if (solver.info() != Eigen::Success)
        throw SolverFailure("hitting-functional solve failed");
    for (std::size_t k = 0; k < rows.size(); ++k)
        u[static_cast<std::size_t>(rows[k])] = x[static_cast<Eigen::Index>(k)];
    return u;
}

double expected_additive_until_hitting(const Chain& chain, std::span<const double> g,
                                       int start, const StateSet& target) {
    if (start < 0 || start >= chain.size()) throw InvalidArgument("start index out of range");
    return expected_additive_vector(chain, g, target)[static_cast<std::size_t>(start)];
}

std::vector<double> transient_functional_vector(const Chain& chain, std::span<const double> g,
                                                double t) {
    const int n = chain.size();
    if (static_cast<int>(g.size()) != n)
        throw InvalidArgument("integrand size does not match state count");
    if (t < 0.0) throw InvalidArgument("time must be nonnegative");

    std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
    if (t == 0.0) return acc;

    const double lambda_max = chain.max_holding();
    if (lambda_max <= 0.0) {
        // Every state absorbing: the path never moves.
        for (int i = 0; i < n; ++i) acc[static_cast<std::size_t>(i)] = g[static_cast<std::size_t>(i)] * t;
        return acc;
    }
    const double uni_rate = 1.05 * lambda_max;
    const double mean_jumps = uni_rate * t;

    double g_max = 0.0;
    for (double v : g) g_max = std::max(g_max, std::abs(v));
    if (g_max == 0.0) return acc;

    // acc = (1/uni_rate) sum_k P[N_t >= k+1] (P^k g), truncated when the
    // remaining tail sum (= mean_jumps - accumulated Q) is negligible.
    std::vector<double> v(g.begin(), g.end());
    std::vector<double> next(static_cast<std::size_t>(n), 0.0);
    double log_pmf = -mean_jumps;      // log Poisson pmf at k
    double cdf = std::exp(log_pmf);    // P[N_t <= k]
    double q_sum = 0.0;                // sum of Q_j up to current k
    const double abs_tol = 1e-12 * std::max(1.0, g_max * t);
    const long max_depth = 200000000;

    for (long k = 0;; ++k) {
        if (k > 0) {
            // v <- P v with P = I + L / uni_rate
            for (int i = 0; i < n; ++i) {
                double s = (1.0 - chain.holding(i) / uni_rate) * v[static_cast<std::size_t>(i)];
                for (const auto& [j, r] : chain.rates_from(i))
                    s += (r / uni_rate) * v[static_cast<std::size_t>(j)];
                next[static_cast<std::size_t>(i)] = s;
            }
            std::swap(v, next);
            log_pmf += std::log(mean_jumps) - std::log(static_cast<double>(k));
            cdf += std::exp(log_pmf);
        }
        double q = std::max(0.0, 1.0 - cdf);
        q_sum += q;
        if (q > 0.0) {
            double w = q / uni_rate;
            for (int i = 0; i < n; ++i) acc[static_cast<std::size_t>(i)] += w * v[static_cast<std::size_t>(i)];
        }
        double remaining = std::max(0.0, mean_jumps - q_sum);
        if (remaining * g_max / uni_rate <= abs_tol) break;
        if (k >= max_depth)
            throw SolverFailure("uniformization depth overflow (rate * t too large)");
    }
    return acc;
}

double transient_functional(const Chain& chain, std::span<const double> g, int start, double t) {
    if (start < 0 || start >= chain.size()) throw InvalidArgument("start index out of range");
    return transient_functional_vector(chain, g, t)[static_cast<std::size_t>(start)];
}

std::vector<double> harmonic_extension(const Chain& chain, const StateSet& ones,
                                       const StateSet& zeros) {
    const int n = chain.size();
    if (ones.intersects(zeros)) throw OverlappingSets("boundary sets must be disjoint");
    std::vector<double> h(static_cast<std::size_t>(n), 0.0);
    for (int s : ones) h[static_cast<std::size_t>(s)] = 1.0;

    StateSet interior = ones.unioned(zeros).complement(n);
    if (interior.empty()) return h;

    const auto& rows = interior.items();
    auto pos = positions(n, rows);
    SpMat mat = restricted_generator(chain, rows, pos);
    mat.makeCompressed();

    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        for (const auto& [j, r] : chain.rates_from(rows[k]))
            if (ones.contains(j)) rhs[static_cast<Eigen::Index>(k)] -= r;
    }

    Eigen::SparseLU<SpMat> solver;
    solver.compute(mat);
    if (solver.info() != Eigen::Success)
        throw SolverFailure("harmonic extension factorization failed");
    Eigen::VectorXd x = solver.solve(rhs);
    if (solver.info() != Eigen::Success) throw SolverFailure("harmonic extension solve failed");
    for (std::size_t k = 0; k < rows.size(); ++k)
        h[static_cast<std::size_t>(rows[k])] = x[static_cast<Eigen::Index>(k)];
    return h;
}

std::vector<double> escape_probabilities(const Chain& chain, const StateSet& A,
                                         const StateSet& B) {
    if (A.empty() || B.empty()) throw InvalidArgument("escape sets must be nonempty");
    if (A.intersects(B)) throw OverlappingSets("escape sets must be disjoint");
    auto h = harmonic_extension(chain, B, A); // P_.[T_B < T_A] off the boundary
    std::vector<double> out;
    out.reserve(A.size());
    for (int a : A) {
        double lam = chain.holding(a);
        double s = 0.0;
        for (const auto& [j, r] : chain.rates_from(a)) s += r * h[static_cast<std::size_t>(j)];
        out.push_back(lam > 0 ? s / lam : 0.0);
    }
    return out;
}

double escape_probability(const Chain& chain, int start, const StateSet& A, const StateSet& B) {
    if (!A.contains(start)) throw InvalidArgument("start state must belong to A");
    auto values = escape_probabilities(chain, A, B);
    const auto& items = A.items();
    auto it = std::lower_bound(items.begin(), items.end(), start);
    return values[static_cast<std::size_t>(it - items.begin())];
}

} // namespace ctmeta
