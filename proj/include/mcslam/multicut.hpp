#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <tuple>
#include <vector>

#include "mcslam/errors.hpp"
#include "mcslam/posegraph.hpp"

namespace mcslam {

enum class InstanceMode { landmark_only, full_graph };

struct SupportConfig {
    int delta = 1;  ///< frame-id radius of the support window
    InstanceMode mode = InstanceMode::landmark_only;
    double theta_odo = 1.0;  ///< odometry edge cost, full-graph mode only
};

/// Largest number of distinct support candidates a landmark edge can have.
constexpr std::size_t max_support_candidates(int delta) {
    return 4 * static_cast<std::size_t>(delta) * static_cast<std::size_t>(delta + 1);
}

// ---------------------------------------------------------------------------
// Support weights

namespace support_detail {

using Pair = std::pair<NodeId, NodeId>;

inline Pair unordered(const NodeId& a, const NodeId& b) { return a < b ? Pair{a, b} : Pair{b, a}; }

template <RigidPose P>
std::set<Pair> landmark_pairs(const PoseGraph<P>& g) {
    std::set<Pair> pairs;
    for (const auto& e : g.edges())
        if (e.is_landmark()) pairs.insert(unordered(e.from, e.to));
    return pairs;
}

}  // namespace support_detail

/// Number of support edges of a landmark edge: distinct endpoint pairs
/// (u', v') carrying a landmark edge, other than the edge's own pair, with u'
/// in the session of u and within delta frames of it and likewise for v'
/// (endpoint-swapped matches included).
template <RigidPose P>
std::size_t count_support(const std::set<support_detail::Pair>& pairs, const Edge<P>& e, int delta) {
    const auto own = support_detail::unordered(e.from, e.to);
    std::set<support_detail::Pair> found;
    for (int du = -delta; du <= delta; ++du) {
        for (int dv = -delta; dv <= delta; ++dv) {
            const NodeId u{e.from.session, e.from.frame + du};
            const NodeId v{e.to.session, e.to.frame + dv};
            if (u == v) continue;
            const auto key = support_detail::unordered(u, v);
            if (key != own && pairs.contains(key)) found.insert(key);
        }
    }
    return found.size();
}

/// Support count for every landmark edge, keyed by edge id.
template <RigidPose P>
std::map<std::size_t, std::size_t> support_counts(const PoseGraph<P>& g, const SupportConfig& cfg) {
    if (cfg.delta < 0) throw UsageError("delta must be >= 0");
    const auto pairs = support_detail::landmark_pairs(g);
    std::map<std::size_t, std::size_t> out;
    for (const auto& e : g.edges())
        if (e.is_landmark()) out.emplace(e.id, count_support(pairs, e, cfg.delta));
    return out;
}

/// +1 for landmark edges with at least one support edge, -1 otherwise.
template <RigidPose P>
std::map<std::size_t, double> compute_support_weights(const PoseGraph<P>& g, const SupportConfig& cfg) {
    std::map<std::size_t, double> w;
    for (const auto& [id, n] : support_counts(g, cfg)) w.emplace(id, n > 0 ? 1.0 : -1.0);
    return w;
}

// ---------------------------------------------------------------------------
// Instance

enum class EdgeOrigin { landmark, odometry };

struct WeightedEdge {
    std::size_t u = 0;  ///< vertex index
    std::size_t v = 0;  ///< vertex index
    double cost = 0.0;
    EdgeOrigin origin = EdgeOrigin::landmark;
    /// Pose-graph edge ids merged into this edge.
    std::vector<std::size_t> members;
};

/// Simple graph for the minimum-cost multicut problem. Edge i of `edges` has id i.
struct WeightedGraph {
    std::vector<NodeId> vertices;
    std::vector<WeightedEdge> edges;

    std::size_t num_vertices() const { return vertices.size(); }
    std::size_t num_edges() const { return edges.size(); }

    /// Builds from explicit (u, v, cost) triples over vertices 0..n-1; parallel edges merge.
    static WeightedGraph from_costs(std::size_t n, const std::vector<std::tuple<std::size_t, std::size_t, double>>& es) {
        WeightedGraph wg;
        for (std::size_t i = 0; i < n; ++i) wg.vertices.push_back(NodeId{0, static_cast<int>(i)});
        std::map<std::pair<std::size_t, std::size_t>, std::size_t> index;
        for (std::size_t k = 0; k < es.size(); ++k) {
            auto [u, v, c] = es[k];
            if (u == v || u >= n || v >= n) throw UsageError("invalid multicut edge");
            wg.add_or_merge(index, u, v, c, EdgeOrigin::landmark, k);
        }
        return wg;
    }

    void add_or_merge(std::map<std::pair<std::size_t, std::size_t>, std::size_t>& index, std::size_t u, std::size_t v,
                      double cost, EdgeOrigin origin, std::size_t member) {
        const auto key = std::minmax(u, v);
        auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(key, edges.size());
            edges.push_back(WeightedEdge{u, v, cost, origin, {member}});
        } else {
            edges[it->second].cost += cost;
            edges[it->second].members.push_back(member);
        }
    }
};

/// Multicut instance from support weights. Landmark-only mode uses the
/// landmark edges and their endpoints; full-graph mode adds every pose node and
/// every odometry edge at cost `theta_odo`. Vertices appear in first-seen order
/// over the stored edge sequence.
template <RigidPose P>
WeightedGraph build_instance(const PoseGraph<P>& g, const SupportConfig& cfg) {
    const auto weights = compute_support_weights(g, cfg);
    const bool full = cfg.mode == InstanceMode::full_graph;
    WeightedGraph wg;
    std::map<NodeId, std::size_t> vindex;
    auto vertex = [&](const NodeId& n) {
        auto [it, inserted] = vindex.try_emplace(n, wg.vertices.size());
        if (inserted) wg.vertices.push_back(n);
        return it->second;
    };
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> eindex;
    for (const auto& e : g.edges()) {
        if (e.is_landmark()) {
            wg.add_or_merge(eindex, vertex(e.from), vertex(e.to), weights.at(e.id), EdgeOrigin::landmark, e.id);
        } else if (full) {
            wg.add_or_merge(eindex, vertex(e.from), vertex(e.to), cfg.theta_odo, EdgeOrigin::odometry, e.id);
        }
    }
    if (full)
        for (const auto& [n, _] : g.nodes()) vertex(n);
    return wg;
}

// ---------------------------------------------------------------------------
// Decompositions and labelings

/// Component label per vertex index, contiguous from 0 in first-seen order.
struct Decomposition {
    std::vector<std::size_t> component;

    std::size_t num_components() const {
        return component.empty() ? 0 : *std::max_element(component.begin(), component.end()) + 1;
    }

    /// Relabels components 0, 1, ... in order of first appearance.
    static Decomposition canonical(const std::vector<std::size_t>& raw) {
        Decomposition d;
        d.component.reserve(raw.size());
        std::map<std::size_t, std::size_t> relabel;
        for (std::size_t c : raw) {
            auto [it, _] = relabel.try_emplace(c, relabel.size());
            d.component.push_back(it->second);
        }
        return d;
    }

    static Decomposition singletons(std::size_t n) {
        Decomposition d;
        d.component.resize(n);
        std::iota(d.component.begin(), d.component.end(), 0);
        return d;
    }

    static Decomposition joined(std::size_t n) { return Decomposition{std::vector<std::size_t>(n, 0)}; }

    friend bool operator==(const Decomposition&, const Decomposition&) = default;
};

/// y_e = 1 (cut) per edge id.
using MulticutLabeling = std::vector<unsigned char>;

inline MulticutLabeling labeling_of(const WeightedGraph& wg, const Decomposition& d) {
    MulticutLabeling y(wg.num_edges());
    for (std::size_t k = 0; k < wg.num_edges(); ++k)
        y[k] = d.component[wg.edges[k].u] != d.component[wg.edges[k].v] ? 1 : 0;
    return y;
}

namespace mc_detail {

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace mc_detail

/// A labeling is a multicut iff no cut edge joins vertices connected through
/// uncut edges, i.e. no cycle holds exactly one cut edge.
inline bool validate(const WeightedGraph& wg, const MulticutLabeling& y) {
    if (y.size() != wg.num_edges()) return false;
    mc_detail::UnionFind uf(wg.num_vertices());
    for (std::size_t k = 0; k < y.size(); ++k)
        if (!y[k]) uf.unite(wg.edges[k].u, wg.edges[k].v);
    for (std::size_t k = 0; k < y.size(); ++k)
        if (y[k] && uf.find(wg.edges[k].u) == uf.find(wg.edges[k].v)) return false;
    return true;
}

/// Sum of costs of cut edges. Throws FeasibilityError for non-multicut labelings.
inline double objective(const WeightedGraph& wg, const MulticutLabeling& y) {
    if (!validate(wg, y)) throw FeasibilityError("labeling violates a cycle inequality");
    double sum = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k)
        if (y[k]) sum += wg.edges[k].cost;
    return sum;
}

inline double objective(const WeightedGraph& wg, const Decomposition& d) {
    double sum = 0.0;
    for (const auto& e : wg.edges)
        if (d.component[e.u] != d.component[e.v]) sum += e.cost;
    return sum;
}

// ---------------------------------------------------------------------------
// Solvers

/// Greedy additive edge contraction: contract the highest-cost edge while it is
/// positive, summing costs of edges that become parallel. Ties go to the
/// smallest edge id (a contracted edge keeps the smallest id of its parts).
inline Decomposition solve_gaec(const WeightedGraph& wg) {
    const std::size_t n = wg.num_vertices();
    mc_detail::UnionFind uf(n);
    // adjacency[r][s] = (cost, id) for representatives r != s
    std::vector<std::map<std::size_t, std::pair<double, std::size_t>>> adj(n);
    for (std::size_t k = 0; k < wg.num_edges(); ++k) {
        const auto& e = wg.edges[k];
        for (auto [a, b] : {std::pair{e.u, e.v}, std::pair{e.v, e.u}}) {
            auto [it, inserted] = adj[a].try_emplace(b, e.cost, k);
            if (!inserted) {
                it->second.first += e.cost;
                it->second.second = std::min(it->second.second, k);
            }
        }
    }
    // Ordered queue: highest cost first, then smallest id.
    using Key = std::tuple<double, std::size_t, std::size_t, std::size_t>;  // (-cost, id, a, b) with a < b
    std::set<Key> queue;
    auto key_of = [](std::size_t a, std::size_t b, const std::pair<double, std::size_t>& cw) {
        return Key{-cw.first, cw.second, std::min(a, b), std::max(a, b)};
    };
    for (std::size_t a = 0; a < n; ++a)
        for (const auto& [b, cw] : adj[a])
            if (a < b) queue.insert(key_of(a, b, cw));

    while (!queue.empty()) {
        const auto [neg_cost, id, a, b] = *queue.begin();
        if (-neg_cost <= 0.0) break;
        queue.erase(queue.begin());
        // Merge the smaller adjacency into the larger one.
        std::size_t keep = a, gone = b;
        if (adj[keep].size() < adj[gone].size()) std::swap(keep, gone);
        adj[keep].erase(gone);
        adj[gone].erase(keep);
        for (const auto& [c, cw] : adj[gone]) {
            queue.erase(key_of(gone, c, cw));
            adj[c].erase(gone);
            auto it = adj[keep].find(c);
            if (it != adj[keep].end()) {
                queue.erase(key_of(keep, c, it->second));
                it->second.first += cw.first;
                it->second.second = std::min(it->second.second, cw.second);
            } else {
                it = adj[keep].emplace(c, cw).first;
            }
            adj[c][keep] = it->second;
            queue.insert(key_of(keep, c, it->second));
        }
        adj[gone].clear();
        uf.parent[gone] = keep;
    }
    std::vector<std::size_t> raw(n);
    for (std::size_t i = 0; i < n; ++i) raw[i] = uf.find(i);
    return Decomposition::canonical(raw);
}

namespace mc_detail {

// Summed cost between vertex v and every component.
inline std::map<std::size_t, double> component_links(const std::vector<std::vector<std::pair<std::size_t, double>>>& nbr,
                                                     const std::vector<std::size_t>& comp, std::size_t v) {
    std::map<std::size_t, double> links;
    for (const auto& [u, c] : nbr[v]) links[comp[u]] += c;
    return links;
}

// Kernighan-Lin pass on the two-cut between components A and B (B may be a
// fresh empty component). Moves vertices one at a time, each at most once,
// choosing the largest gain (even if negative), and keeps the best prefix.
inline bool two_cut_pass(const std::vector<std::vector<std::pair<std::size_t, double>>>& nbr,
                         std::vector<std::size_t>& comp, std::size_t A, std::size_t B) {
    constexpr double kEps = 1e-12;
    std::vector<std::size_t> members;
    for (std::size_t v = 0; v < comp.size(); ++v)
        if (comp[v] == A || comp[v] == B) members.push_back(v);
    if (members.empty()) return false;

    // gain(v) = cost to the other side - cost to own side (objective decrease when v switches sides).
    std::map<std::size_t, double> gain;
    auto compute_gain = [&](std::size_t v) {
        double own = 0.0, other = 0.0;
        const std::size_t side = comp[v], opp = side == A ? B : A;
        for (const auto& [u, c] : nbr[v]) {
            if (comp[u] == side) own += c;
            else if (comp[u] == opp) other += c;
        }
        return other - own;
    };
    for (std::size_t v : members) gain[v] = compute_gain(v);

    std::set<std::size_t> moved;
    std::vector<std::size_t> sequence;
    double cumulative = 0.0, best = 0.0;
    std::size_t best_len = 0;
    for (std::size_t step = 0; step < members.size(); ++step) {
        std::size_t pick = comp.size();
        for (std::size_t v : members) {
            if (moved.contains(v)) continue;
            if (pick == comp.size() || gain[v] > gain[pick] + kEps) pick = v;
        }
        cumulative += gain[pick];
        const std::size_t from = comp[pick], to = from == A ? B : A;
        comp[pick] = to;
        moved.insert(pick);
        sequence.push_back(pick);
        for (const auto& [u, c] : nbr[pick]) {
            if (moved.contains(u) || (comp[u] != A && comp[u] != B)) continue;
            // pick left `from` and joined `to`.
            gain[u] += comp[u] == from ? 2.0 * c : -2.0 * c;
        }
        if (cumulative > best + kEps) {
            best = cumulative;
            best_len = sequence.size();
        }
    }
    for (std::size_t k = sequence.size(); k-- > best_len;) {
        const std::size_t v = sequence[k];
        comp[v] = comp[v] == A ? B : A;
    }
    return best_len > 0;
}

}  // namespace mc_detail

/// Local search from `d`: Kernighan-Lin two-cut passes between adjacent
/// components and against a new empty component, plus joins of adjacent
/// component pairs with positive connecting cost. Never worse than `d` or than
/// joining everything.
inline Decomposition refine_klj(const WeightedGraph& wg, const Decomposition& d) {
    constexpr double kEps = 1e-12;
    const std::size_t n = wg.num_vertices();
    if (d.component.size() != n) throw UsageError("decomposition size does not match instance");
    std::vector<std::vector<std::pair<std::size_t, double>>> nbr(n);
    for (const auto& e : wg.edges) {
        nbr[e.u].emplace_back(e.v, e.cost);
        nbr[e.v].emplace_back(e.u, e.cost);
    }
    std::vector<std::size_t> comp = d.component;
    double current = objective(wg, d);

    for (int round = 0; round < 1000; ++round) {
        bool improved = false;

        // Join moves.
        for (bool joined = true; joined;) {
            joined = false;
            std::map<std::pair<std::size_t, std::size_t>, double> between;
            for (const auto& e : wg.edges) {
                const std::size_t a = comp[e.u], b = comp[e.v];
                if (a != b) between[std::minmax(a, b)] += e.cost;
            }
            std::optional<std::pair<std::size_t, std::size_t>> best;
            double best_gain = kEps;
            for (const auto& [key, c] : between) {
                if (c > best_gain) {
                    best_gain = c;
                    best = key;
                }
            }
            if (best) {
                for (auto& c : comp)
                    if (c == best->second) c = best->first;
                current -= best_gain;
                joined = improved = true;
            }
        }

        // Two-cut passes between adjacent components and each component vs. a new one.
        std::set<std::pair<std::size_t, std::size_t>> pairs;
        std::set<std::size_t> labels(comp.begin(), comp.end());
        for (const auto& e : wg.edges) {
            const std::size_t a = comp[e.u], b = comp[e.v];
            if (a != b) pairs.insert(std::minmax(a, b));
        }
        const std::size_t fresh = labels.empty() ? 0 : *labels.rbegin() + 1;
        for (std::size_t a : labels) pairs.insert({a, fresh});
        for (const auto& [a, b] : pairs) {
            std::vector<std::size_t> trial = comp;
            if (mc_detail::two_cut_pass(nbr, trial, a, b)) {
                const double value = objective(wg, Decomposition{trial});
                if (value < current - kEps) {
                    comp = std::move(trial);
                    current = value;
                    improved = true;
                    break;  // component labels changed; rebuild the pair list
                }
            }
        }
        if (!improved) break;
    }
    Decomposition out = Decomposition::canonical(comp);
    if (objective(wg, out) > objective(wg, d)) out = Decomposition::canonical(d.component);
    if (objective(wg, out) > 0.0) out = Decomposition::joined(n);
    return out;
}

/// Largest instance `solve_exact` accepts.
inline constexpr std::size_t kExactVertexLimit = 10;

/// Calls f(labels) for every set partition of {0..n-1} as a restricted growth
/// string (which is the canonical first-seen labelling). Returns the count.
inline std::size_t for_each_partition(std::size_t n, const std::function<void(const std::vector<std::size_t>&)>& f) {
    if (n == 0) {
        f({});
        return 1;
    }
    std::vector<std::size_t> a(n, 0), m(n, 1);  // m[i] = max(a[0..i-1]) + 1
    m[0] = 0;
    std::size_t count = 0;
    while (true) {
        f(a);
        ++count;
        std::size_t i = n - 1;
        while (i > 0 && a[i] == m[i]) --i;
        if (i == 0) break;
        ++a[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            a[j] = 0;
            m[j] = std::max(m[j - 1], a[j - 1] + 1);
        }
    }
    return count;
}

struct ExactSolution {
    Decomposition decomposition;
    double objective = 0.0;
    std::size_t partitions_enumerated = 0;
};

/// Global optimum by enumerating all set partitions. Ties: fewest components,
/// then the lexicographically smallest canonical labelling.
inline ExactSolution solve_exact_detailed(const WeightedGraph& wg) {
    const std::size_t n = wg.num_vertices();
    if (n > kExactVertexLimit) {
        throw CapacityError("exact multicut limited to " + std::to_string(kExactVertexLimit) + " vertices, got " +
                            std::to_string(n));
    }
    ExactSolution best;
    bool have = false;
    std::size_t best_k = 0;
    best.partitions_enumerated = for_each_partition(n, [&](const std::vector<std::size_t>& labels) {
        double value = 0.0;
        for (const auto& e : wg.edges)
            if (labels[e.u] != labels[e.v]) value += e.cost;
        const std::size_t k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
        // Enumeration runs in lexicographic order, so strict comparisons keep the smallest labelling.
        if (!have || value < best.objective - 1e-12 || (std::abs(value - best.objective) <= 1e-12 && k < best_k)) {
            best.objective = value;
            best.decomposition.component = labels;
            best_k = k;
            have = true;
        }
    });
    return best;
}

inline Decomposition solve_exact(const WeightedGraph& wg) { return solve_exact_detailed(wg).decomposition; }

/// GAEC followed by local refinement.
inline Decomposition solve_multicut(const WeightedGraph& wg) { return refine_klj(wg, solve_gaec(wg)); }

/// Removes every landmark edge whose endpoints fall into different components.
/// `removed`, when given, receives the ids of the removed pose-graph edges.
template <RigidPose P>
PoseGraph<P> reject_cut_edges(const PoseGraph<P>& g, const WeightedGraph& wg, const Decomposition& d,
                              std::vector<std::size_t>* removed = nullptr) {
    std::set<std::size_t> cut;
    const auto y = labeling_of(wg, d);
    for (std::size_t k = 0; k < y.size(); ++k)
        if (y[k] && wg.edges[k].origin == EdgeOrigin::landmark)
            for (std::size_t id : wg.edges[k].members) cut.insert(id);
    if (removed) removed->assign(cut.begin(), cut.end());
    return g.filtered([&](const Edge<P>& e) { return e.is_odometry() || !cut.contains(e.id); });
}

/// The graph-cut stage: support-weighted instance, GAEC + refinement, cut landmark edges removed.
template <RigidPose P>
PoseGraph<P> graph_cut_filter(const PoseGraph<P>& g, const SupportConfig& cfg,
                              std::vector<std::size_t>* removed = nullptr) {
    const WeightedGraph wg = build_instance(g, cfg);
    return reject_cut_edges(g, wg, solve_multicut(wg), removed);
}

}  // namespace mcslam
