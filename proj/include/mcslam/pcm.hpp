#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <set>
#include <tuple>
#include <vector>

#include "mcslam/posegraph.hpp"

namespace mcslam {

struct PcmConfig {
    double gamma_t = 2.0;  ///< loop translation threshold [m]
    double gamma_r = 0.5;  ///< loop rotation threshold [rad]
    std::size_t exact_clique_limit = 150;
};

/// Translation norm and rotation angle of a closed loop of two landmark edges.
struct LoopError {
    double translation = 0.0;
    double rotation = 0.0;
};

/// Loop z_a^-1 * ô(a.from -> b.from) * z_b * ô(b.to -> a.to), where ô is the
/// odometry chain estimate. Edges are put in (id, endpoints) order first so the
/// result does not depend on argument order, and `b` is reversed when its
/// sessions run opposite to `a`. nullopt when the edges are not comparable.
template <RigidPose P>
std::optional<LoopError> loop_error(const OdometryIndex<P>& odo, const Edge<P>& ea, const Edge<P>& eb) {
    const bool swap = std::tie(eb.id, eb.from, eb.to) < std::tie(ea.id, ea.from, ea.to);
    const Edge<P>& a = swap ? eb : ea;
    const Edge<P>& b = swap ? ea : eb;

    auto close = [&](const NodeId& bf, const NodeId& bt, const P& zb) -> std::optional<LoopError> {
        if (bf.session != a.from.session || bt.session != a.to.session) return std::nullopt;
        const auto head = odo.relative(a.from, bf);
        const auto tail = odo.relative(bt, a.to);
        if (!head || !tail) return std::nullopt;
        const P loop = compose(compose(compose(inverse(a.z), *head), zb), *tail);
        return LoopError{loop.translation().norm(), rotation_angle(loop)};
    };
    if (auto r = close(b.from, b.to, b.z)) return r;
    return close(b.to, b.from, inverse(b.z));
}

template <RigidPose P>
bool pairwise_consistency(const OdometryIndex<P>& odo, const Edge<P>& a, const Edge<P>& b, const PcmConfig& cfg) {
    const auto err = loop_error(odo, a, b);
    return err && err->translation <= cfg.gamma_t && err->rotation <= cfg.gamma_r;
}

/// Convenience overload; builds the odometry index on every call.
template <RigidPose P>
bool pairwise_consistency(const PoseGraph<P>& g, const Edge<P>& a, const Edge<P>& b, const PcmConfig& cfg) {
    return pairwise_consistency(OdometryIndex<P>(g), a, b, cfg);
}

/// Fixed-size bit set for clique search.
class VertexSet {
public:
    VertexSet() = default;
    explicit VertexSet(std::size_t n) : n_(n), words_((n + 63) / 64, 0) {}

    void set(std::size_t i) { words_[i >> 6] |= (std::uint64_t{1} << (i & 63)); }
    void reset(std::size_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
    bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1U; }
    std::size_t size() const { return n_; }

    std::size_t count() const {
        std::size_t c = 0;
        for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
        return c;
    }
    bool empty() const {
        return std::all_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w == 0; });
    }
    VertexSet operator&(const VertexSet& o) const {
        VertexSet r = *this;
        for (std::size_t k = 0; k < words_.size(); ++k) r.words_[k] &= o.words_[k];
        return r;
    }
    /// Calls f(i) for every member in ascending order.
    template <class F>
    void for_each(F&& f) const {
        for (std::size_t k = 0; k < words_.size(); ++k) {
            std::uint64_t w = words_[k];
            while (w) {
                f(k * 64 + static_cast<std::size_t>(std::countr_zero(w)));
                w &= w - 1;
            }
        }
    }

private:
    std::size_t n_ = 0;
    std::vector<std::uint64_t> words_;
};

/// Vertices are landmark edge ids in ascending order; adjacency marks consistent pairs.
struct ConsistencyGraph {
    std::vector<std::size_t> edge_ids;
    std::vector<VertexSet> adjacency;

    std::size_t size() const { return edge_ids.size(); }
    bool adjacent(std::size_t i, std::size_t j) const { return adjacency[i].test(j); }

    static ConsistencyGraph empty(std::vector<std::size_t> ids) {
        ConsistencyGraph cg;
        cg.edge_ids = std::move(ids);
        cg.adjacency.assign(cg.edge_ids.size(), VertexSet(cg.edge_ids.size()));
        return cg;
    }

    void connect(std::size_t i, std::size_t j) {
        if (i == j) return;
        adjacency[i].set(j);
        adjacency[j].set(i);
    }

    std::size_t num_adjacent_pairs() const {
        std::size_t c = 0;
        for (const auto& a : adjacency) c += a.count();
        return c / 2;
    }
};

template <RigidPose P>
ConsistencyGraph build_consistency_graph(const PoseGraph<P>& g, const PcmConfig& cfg) {
    std::vector<const Edge<P>*> lm;
    for (const auto& e : g.edges())
        if (e.is_landmark()) lm.push_back(&e);
    std::sort(lm.begin(), lm.end(), [](const Edge<P>* a, const Edge<P>* b) { return a->id < b->id; });
    std::vector<std::size_t> ids;
    for (const auto* e : lm) ids.push_back(e->id);
    ConsistencyGraph cg = ConsistencyGraph::empty(std::move(ids));
    const OdometryIndex<P> odo(g);
    for (std::size_t i = 0; i < lm.size(); ++i)
        for (std::size_t j = i + 1; j < lm.size(); ++j)
            if (pairwise_consistency(odo, *lm[i], *lm[j], cfg)) cg.connect(i, j);
    return cg;
}

namespace clique_detail {

// Greedy sequential colouring of `cand`; returns members in colour order with their colour numbers.
inline void colour_sort(const ConsistencyGraph& cg, const VertexSet& cand, std::vector<std::size_t>& order,
                        std::vector<std::size_t>& colour) {
    order.clear();
    colour.clear();
    VertexSet uncoloured = cand;
    std::size_t c = 0;
    while (!uncoloured.empty()) {
        ++c;
        VertexSet q = uncoloured;
        while (!q.empty()) {
            std::size_t v = 0;
            bool found = false;
            q.for_each([&](std::size_t i) {
                if (!found) {
                    v = i;
                    found = true;
                }
            });
            uncoloured.reset(v);
            q.reset(v);
            // Vertices adjacent to v cannot share its colour.
            VertexSet next(q.size());
            q.for_each([&](std::size_t i) {
                if (!cg.adjacent(v, i)) next.set(i);
            });
            q = next;
            order.push_back(v);
            colour.push_back(c);
        }
    }
}

inline std::size_t colour_bound(const ConsistencyGraph& cg, const VertexSet& cand) {
    std::vector<std::size_t> order, colour;
    colour_sort(cg, cand, order, colour);
    return colour.empty() ? 0 : colour.back();
}

// Colour-bounded branch and bound for the clique number.
inline void expand(const ConsistencyGraph& cg, std::size_t depth, VertexSet cand, std::size_t& best) {
    std::vector<std::size_t> order, colour;
    colour_sort(cg, cand, order, colour);
    for (std::size_t k = order.size(); k-- > 0;) {
        if (depth + colour[k] <= best) return;
        const std::size_t v = order[k];
        VertexSet next = cand & cg.adjacency[v];
        if (next.empty()) {
            best = std::max(best, depth + 1);
        } else {
            expand(cg, depth + 1, next, best);
        }
        cand.reset(v);
    }
}

// Depth-first search in ascending vertex order; the first clique of the target
// size reached is the lexicographically smallest one.
inline bool lex_first(const ConsistencyGraph& cg, std::vector<std::size_t>& current, VertexSet cand,
                      std::size_t target) {
    if (current.size() == target) return true;
    if (current.size() + cand.count() < target) return false;
    if (current.size() + colour_bound(cg, cand) < target) return false;
    std::vector<std::size_t> members;
    cand.for_each([&](std::size_t i) { members.push_back(i); });
    for (std::size_t v : members) {
        current.push_back(v);
        if (lex_first(cg, current, cand & cg.adjacency[v], target)) return true;
        current.pop_back();
        cand.reset(v);
        if (current.size() + cand.count() < target) return false;
    }
    return false;
}

}  // namespace clique_detail

/// Exact maximum clique as sorted vertex indices; among maximum cliques the
/// lexicographically smallest is returned.
inline std::vector<std::size_t> max_clique_exact(const ConsistencyGraph& cg) {
    const std::size_t n = cg.size();
    if (n == 0) return {};
    VertexSet all(n);
    for (std::size_t i = 0; i < n; ++i) all.set(i);
    std::size_t best = 0;
    clique_detail::expand(cg, 0, all, best);
    std::vector<std::size_t> clique;
    clique_detail::lex_first(cg, clique, all, best);
    return clique;
}

/// Degeneracy-ordered greedy clique. Every vertex seeds one greedy pass over
/// its neighbours in core order; the largest result wins (ties: lexicographic).
inline std::vector<std::size_t> max_clique_greedy(const ConsistencyGraph& cg) {
    const std::size_t n = cg.size();
    if (n == 0) return {};
    std::vector<std::size_t> degree(n);
    for (std::size_t i = 0; i < n; ++i) degree[i] = cg.adjacency[i].count();
    std::vector<bool> removed(n, false);
    std::vector<std::size_t> removal;
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t v = n;
        for (std::size_t i = 0; i < n; ++i)
            if (!removed[i] && (v == n || degree[i] < degree[v])) v = i;
        removed[v] = true;
        removal.push_back(v);
        cg.adjacency[v].for_each([&](std::size_t u) {
            if (!removed[u]) --degree[u];
        });
    }
    const std::vector<std::size_t> core_order(removal.rbegin(), removal.rend());

    std::vector<std::size_t> best;
    for (std::size_t seed : core_order) {
        std::vector<std::size_t> clique{seed};
        for (std::size_t v : core_order) {
            if (v == seed || !cg.adjacent(seed, v)) continue;
            if (std::all_of(clique.begin(), clique.end(), [&](std::size_t u) { return cg.adjacent(u, v); }))
                clique.push_back(v);
        }
        std::sort(clique.begin(), clique.end());
        if (clique.size() > best.size() || (clique.size() == best.size() && clique < best)) best = clique;
    }
    return best;
}

/// Maximum clique of mutually consistent landmark edges, as edge ids. Exact
/// search up to `exact_clique_limit` vertices, greedy beyond it.
inline std::vector<std::size_t> max_clique(const ConsistencyGraph& cg, const PcmConfig& cfg) {
    const auto idx = cg.size() <= cfg.exact_clique_limit ? max_clique_exact(cg) : max_clique_greedy(cg);
    std::vector<std::size_t> ids;
    ids.reserve(idx.size());
    for (std::size_t i : idx) ids.push_back(cg.edge_ids[i]);
    return ids;
}

/// Landmark edges kept by PCM (the maximum consistent clique); odometry untouched.
template <RigidPose P>
PoseGraph<P> pcm_filter(const PoseGraph<P>& g, const PcmConfig& cfg) {
    const auto clique = max_clique(build_consistency_graph(g, cfg), cfg);
    const std::set<std::size_t> keep(clique.begin(), clique.end());
    return g.filtered([&](const Edge<P>& e) { return e.is_odometry() || keep.contains(e.id); });
}

}  // namespace mcslam
