#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mcslam/errors.hpp"
#include "mcslam/geometry.hpp"

namespace mcslam {

/// The i-th viewpoint (frame) of the j-th experience (session).
struct NodeId {
    int session = 0;
    int frame = 0;

    friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

inline std::string to_string(const NodeId& n) {
    return "(" + std::to_string(n.session) + "," + std::to_string(n.frame) + ")";
}

enum class EdgeKind { odometry, landmark };

inline constexpr std::size_t kAutoEdgeId = std::numeric_limits<std::size_t>::max();

template <RigidPose P>
struct Edge {
    std::size_t id = kAutoEdgeId;
    NodeId from;
    NodeId to;
    P z;
    InfoMatrix<P> info = InfoMatrix<P>::Identity();
    EdgeKind kind = EdgeKind::landmark;

    bool is_odometry() const { return kind == EdgeKind::odometry; }
    bool is_landmark() const { return kind == EdgeKind::landmark; }
};

/// True when `info` is symmetric and all its eigenvalues are strictly positive.
template <int N>
bool is_spd(const Eigen::Matrix<double, N, N>& info) {
    if (!info.allFinite()) return false;
    if ((info - info.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, info.cwiseAbs().maxCoeff()))
        return false;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> es(info, Eigen::EigenvaluesOnly);
    return es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0.0;
}

/// Pose graph over sessions of consecutive frames.
///
/// Edges keep insertion order and carry stable ids; filtering operations
/// preserve the ids of surviving edges so labelings stay addressable.
template <RigidPose P>
class PoseGraph {
public:
    using Pose = P;
    using EdgeType = Edge<P>;

    void add_node(const NodeId& n, std::optional<P> pose = std::nullopt) {
        auto [it, inserted] = nodes_.try_emplace(n, pose);
        if (!inserted && pose) it->second = pose;
    }

    bool has_node(const NodeId& n) const { return nodes_.contains(n); }

    const std::map<NodeId, std::optional<P>>& nodes() const { return nodes_; }
    const std::vector<EdgeType>& edges() const { return edges_; }
    std::size_t num_nodes() const { return nodes_.size(); }
    std::size_t num_edges() const { return edges_.size(); }

    std::size_t num_landmark_edges() const {
        return static_cast<std::size_t>(
            std::count_if(edges_.begin(), edges_.end(), [](const EdgeType& e) { return e.is_landmark(); }));
    }

    /// Appends an edge, creating missing endpoints. Returns the edge id.
    std::size_t add_edge(EdgeType e) {
        if (e.from == e.to) throw StructuralError("edge " + to_string(e.from) + " has identical endpoints");
        if (!is_spd(e.info)) {
            throw StructuralError("information matrix of edge " + to_string(e.from) + "->" + to_string(e.to) +
                                  " is not symmetric positive definite");
        }
        if (e.is_odometry()) {
            if (e.to.session != e.from.session || e.to.frame != e.from.frame + 1) {
                throw StructuralError("odometry edge " + to_string(e.from) + "->" + to_string(e.to) +
                                      " does not join consecutive frames of one session");
            }
            if (odometry_from_.contains(e.from)) {
                throw StructuralError("duplicate odometry edge " + to_string(e.from) + "->" + to_string(e.to));
            }
        }
        if (e.id == kAutoEdgeId) {
            e.id = next_id_;
        } else if (ids_.contains(e.id)) {
            throw StructuralError("duplicate edge id " + std::to_string(e.id));
        }
        next_id_ = std::max(next_id_, e.id + 1);
        ids_.insert(e.id);
        add_node(e.from);
        add_node(e.to);
        if (e.is_odometry()) odometry_from_.emplace(e.from, edges_.size());
        edges_.push_back(std::move(e));
        return edges_.back().id;
    }

    std::size_t add_edge(const NodeId& from, const NodeId& to, const P& z, EdgeKind kind,
                         const InfoMatrix<P>& info = InfoMatrix<P>::Identity()) {
        return add_edge(EdgeType{kAutoEdgeId, from, to, z, info, kind});
    }

    /// Odometry edge leaving `from`, if any.
    const EdgeType* odometry_from(const NodeId& from) const {
        auto it = odometry_from_.find(from);
        return it == odometry_from_.end() ? nullptr : &edges_[it->second];
    }

    const EdgeType* find_edge(std::size_t id) const {
        for (const auto& e : edges_)
            if (e.id == id) return &e;
        return nullptr;
    }

    /// Copy keeping every node and the edges accepted by `keep`; edge ids are preserved.
    template <class Pred>
    PoseGraph filtered(Pred keep) const {
        PoseGraph out;
        out.nodes_ = nodes_;
        for (const auto& e : edges_)
            if (keep(e)) out.add_edge(e);
        out.next_id_ = std::max(out.next_id_, next_id_);
        return out;
    }

    std::set<int> sessions() const {
        std::set<int> s;
        for (const auto& [n, _] : nodes_) s.insert(n.session);
        return s;
    }

    /// Smallest and largest frame of a session; nullopt if the session has no node.
    std::optional<std::pair<int, int>> frame_range(int session) const {
        auto lo = nodes_.lower_bound(NodeId{session, std::numeric_limits<int>::min()});
        if (lo == nodes_.end() || lo->first.session != session) return std::nullopt;
        auto hi = nodes_.upper_bound(NodeId{session, std::numeric_limits<int>::max()});
        --hi;
        return std::make_pair(lo->first.frame, hi->first.frame);
    }

    /// Sessions whose frames are not joined end to end by odometry edges.
    std::vector<int> sessions_with_gaps() const {
        std::vector<int> bad;
        for (int s : sessions()) {
            auto [lo, hi] = *frame_range(s);
            for (int f = lo; f < hi; ++f) {
                if (!odometry_from_.contains(NodeId{s, f})) {
                    bad.push_back(s);
                    break;
                }
            }
        }
        return bad;
    }

private:
    std::map<NodeId, std::optional<P>> nodes_;
    std::vector<EdgeType> edges_;
    std::map<NodeId, std::size_t> odometry_from_;
    std::set<std::size_t> ids_;
    std::size_t next_id_ = 0;
};

using PoseGraph2 = PoseGraph<Pose2>;
using PoseGraph3 = PoseGraph<Pose3>;

/// Relative pose from `a` to `b` obtained by composing odometry measurements
/// along the session chain. Throws NotConnectedError when the chain is broken.
template <RigidPose P>
P odometry_relative(const PoseGraph<P>& g, const NodeId& a, const NodeId& b) {
    if (a.session != b.session) {
        throw NotConnectedError("nodes " + to_string(a) + " and " + to_string(b) + " are in different sessions");
    }
    const bool reversed = b.frame < a.frame;
    const NodeId lo = reversed ? b : a;
    const NodeId hi = reversed ? a : b;
    P acc = identity<P>();
    for (int f = lo.frame; f < hi.frame; ++f) {
        const auto* e = g.odometry_from(NodeId{lo.session, f});
        if (!e) {
            throw NotConnectedError("no odometry edge leaves " + to_string(NodeId{lo.session, f}));
        }
        acc = compose(acc, e->z);
    }
    return reversed ? inverse(acc) : acc;
}

/// Cumulative odometry poses per session for O(1) chain-relative queries.
/// Each maximal gap-free run of a session gets its own origin.
template <RigidPose P>
class OdometryIndex {
public:
    explicit OdometryIndex(const PoseGraph<P>& g) {
        for (const auto& [n, _] : g.nodes()) {
            if (entries_.contains(n)) continue;
            // n starts a run unless a predecessor with an odometry edge exists; runs
            // are discovered in ascending frame order so the predecessor is already indexed.
            NodeId cur = n;
            P acc = identity<P>();
            int run = next_run_++;
            entries_.emplace(cur, Entry{run, acc});
            while (const auto* e = g.odometry_from(cur)) {
                acc = compose(acc, e->z);
                cur = e->to;
                entries_.emplace(cur, Entry{run, acc});
            }
        }
    }

    /// ô(a -> b); nullopt when a and b are not on one odometry run.
    std::optional<P> relative(const NodeId& a, const NodeId& b) const {
        auto ia = entries_.find(a);
        auto ib = entries_.find(b);
        if (ia == entries_.end() || ib == entries_.end() || ia->second.run != ib->second.run) return std::nullopt;
        if (a == b) return identity<P>();
        return between(ia->second.pose, ib->second.pose);
    }

private:
    struct Entry {
        int run;
        P pose;
    };
    std::map<NodeId, Entry> entries_;
    int next_run_ = 0;
};

template <RigidPose P>
struct Decimation {
    PoseGraph<P> graph;
    /// Original landmark edge id -> id in the decimated graph.
    std::map<std::size_t, std::size_t> landmark_ids;
    /// Original node -> decimated node for every re-anchored landmark endpoint.
    std::map<NodeId, NodeId> anchors;
};

/// Keeps every k-th frame. Odometry is recomposed over each k-step span and
/// landmark edges are moved to the nearest kept frame (ties toward the lower
/// frame) with the odometry offset folded into their measurement.
template <RigidPose P>
Decimation<P> decimate(const PoseGraph<P>& g, int k) {
    if (k < 1) throw UsageError("decimation factor must be >= 1");
    Decimation<P> out;
    if (k == 1) {
        out.graph = g;
        for (const auto& e : g.edges()) {
            if (!e.is_landmark()) continue;
            out.landmark_ids.emplace(e.id, e.id);
            out.anchors.emplace(e.from, e.from);
            out.anchors.emplace(e.to, e.to);
        }
        return out;
    }
    auto scaled = [k](const NodeId& n) { return NodeId{n.session, n.frame / k}; };
    auto is_kept = [&](const NodeId& n) { return n.frame % k == 0 && g.has_node(n); };

    for (const auto& [n, pose] : g.nodes())
        if (n.frame % k == 0) out.graph.add_node(scaled(n), pose);

    for (const auto& [n, _] : g.nodes()) {
        if (n.frame % k != 0) continue;
        const NodeId next{n.session, n.frame + k};
        if (!g.has_node(next)) continue;
        P z = identity<P>();
        Eigen::Matrix<double, PoseTraits<P>::kDof, PoseTraits<P>::kDof> cov =
            Eigen::Matrix<double, PoseTraits<P>::kDof, PoseTraits<P>::kDof>::Zero();
        bool connected = true;
        for (int f = n.frame; f < next.frame; ++f) {
            const auto* e = g.odometry_from(NodeId{n.session, f});
            if (!e) {
                connected = false;
                break;
            }
            z = compose(z, e->z);
            cov += e->info.inverse();
        }
        if (!connected) continue;
        InfoMatrix<P> info = cov.inverse();
        info = 0.5 * (info + info.transpose()).eval();
        out.graph.add_edge(scaled(n), scaled(next), z, EdgeKind::odometry, info);
    }

    // Nearest kept frame reachable through odometry.
    auto anchor = [&](const NodeId& n) -> std::optional<NodeId> {
        const int r = ((n.frame % k) + k) % k;
        const NodeId lower{n.session, n.frame - r};
        const NodeId upper{n.session, n.frame - r + k};
        auto reachable = [&](const NodeId& c) {
            if (!is_kept(c)) return false;
            try {
                (void)odometry_relative(g, c, n);
                return true;
            } catch (const NotConnectedError&) {
                return false;
            }
        };
        if (r == 0 && g.has_node(n)) return n;
        const bool prefer_lower = 2 * r <= k;
        const NodeId first = prefer_lower ? lower : upper;
        const NodeId second = prefer_lower ? upper : lower;
        if (reachable(first)) return first;
        if (reachable(second)) return second;
        return std::nullopt;
    };

    for (const auto& e : g.edges()) {
        if (!e.is_landmark()) continue;
        const auto af = anchor(e.from);
        const auto at = anchor(e.to);
        if (!af || !at || *af == *at) continue;
        const P z = compose(compose(odometry_relative(g, *af, e.from), e.z), odometry_relative(g, e.to, *at));
        const std::size_t id = out.graph.add_edge(scaled(*af), scaled(*at), z, EdgeKind::landmark, e.info);
        out.landmark_ids.emplace(e.id, id);
        out.anchors.emplace(e.from, scaled(*af));
        out.anchors.emplace(e.to, scaled(*at));
    }
    return out;
}

}  // namespace mcslam
