#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "mcslam/errors.hpp"
#include "mcslam/graph_io.hpp"
#include "mcslam/optimizer.hpp"

namespace mcslam {

struct SynthConfig {
    int frames_per_session = 200;
    double step_length = 1.0;        ///< [m]
    double turn_probability = 0.1;   ///< chance of a 90 degree turn before each step
    double odom_sigma_t = 0.05;      ///< [m]
    double odom_sigma_r = 0.01;      ///< [rad]
    double revisit_radius = 2.0;     ///< correct edges join inter-session poses closer than this [m]
    double outlier_rate = 0.10;      ///< fraction of incorrect edges among all landmark edges
    double min_outlier_distance = 20.0;  ///< incorrect edges join poses farther apart than this [m]
    std::uint64_t seed = 1;
};

template <RigidPose P>
struct LabeledDataset {
    Estimate<P> ground_truth;
    PoseGraph<P> graph;
    LabelSidecar labels;
};

namespace synth_detail {

template <RigidPose P>
P planar_pose(double x, double y, double heading) {
    if constexpr (std::is_same_v<P, Pose2>) {
        return Pose2(x, y, heading);
    } else {
        return Pose3(Eigen::Vector3d(x, y, 0.0), Eigen::Quaterniond(Eigen::AngleAxisd(heading, Eigen::Vector3d::UnitZ())));
    }
}

template <RigidPose P>
Twist<P> sample_noise(std::mt19937_64& rng, double sigma_t, double sigma_r) {
    constexpr int N = PoseTraits<P>::kDim;
    constexpr int D = PoseTraits<P>::kDof;
    Twist<P> v = Twist<P>::Zero();
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < D; ++i) v[i] = gauss(rng) * (i < N ? sigma_t : sigma_r);
    return v;
}

template <RigidPose P>
InfoMatrix<P> noise_information(double sigma_t, double sigma_r) {
    constexpr int N = PoseTraits<P>::kDim;
    InfoMatrix<P> info = InfoMatrix<P>::Identity();
    for (int i = 0; i < PoseTraits<P>::kDof; ++i) {
        const double s = i < N ? sigma_t : sigma_r;
        if (s > 0.0) info(i, i) = 1.0 / (s * s);
    }
    return info;
}

template <RigidPose P>
P perturb(const P& z, std::mt19937_64& rng, double sigma_t, double sigma_r) {
    if (sigma_t == 0.0 && sigma_r == 0.0) return z;
    return compose(z, exp_map(sample_noise<P>(rng, sigma_t, sigma_r)));
}

struct LatticeStep {
    int x, y, heading;  // heading in quarter turns
};

// Loop on the integer lattice: an outbound spur east of the origin, the
// boundary of a random skyline of `block`-wide columns traversed
// counterclockwise from the spur's far end, then west back along the spur and
// past the origin until the frames run out. Column heights follow a random walk
// that steps up or down with the chance of a turn within one block; the top and
// bottom of the skyline are at least one block apart.
inline std::vector<LatticeStep> lattice_loop(int frames, int block, double turn_probability, std::mt19937_64& rng) {
    static constexpr int dx[4] = {1, 0, -1, 0};
    static constexpr int dy[4] = {0, 1, 0, -1};
    const int spur = std::max(2, frames / 20);
    const int budget = frames - 1 - 2 * spur;
    block = std::min(block, budget / 4);
    if (block < 1) throw GenerationError("too few frames for a loop");

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double change = 1.0 - std::pow(1.0 - turn_probability, block);
    std::vector<int> heights{1};
    int perimeter = 4;  // in blocks
    for (;;) {
        const int h = heights.back();
        int next = h;
        if (unit(rng) < change) next = unit(rng) < 0.5 ? h + 1 : std::max(1, h - 1);
        auto grow = [&](int n) { return 2 + std::abs(n - h) + (n - h); };
        if ((perimeter + grow(next)) * block > budget) next = h;
        if ((perimeter + grow(next)) * block > budget) break;
        perimeter += grow(next);
        heights.push_back(next);
    }

    std::vector<LatticeStep> path{{0, 0, 0}};
    auto advance = [&](int heading, int steps) {
        for (int i = 0; i < steps; ++i) {
            path.back().heading = heading;
            const auto p = path.back();
            path.push_back({p.x + dx[heading], p.y + dy[heading], heading});
        }
    };
    advance(0, spur);
    advance(0, static_cast<int>(heights.size()) * block);
    advance(1, heights.back() * block);
    for (std::size_t i = heights.size(); i-- > 0;) {
        advance(2, block);
        const int to = i > 0 ? heights[i - 1] : 0;
        advance(to > heights[i] ? 1 : 3, std::abs(to - heights[i]) * block);
    }
    advance(2, frames - static_cast<int>(path.size()));
    return path;
}

}  // namespace synth_detail

/// Adds incorrect landmark edges so that they make up `rate` of all landmark
/// edges (rounded). Each joins a random inter-session node pair whose ground
/// truth positions are farther apart than `min_distance`, never duplicating an
/// existing pair, and carries a uniformly random measurement (translation in
/// the trajectory bounding box, uniform rotation). Returns the labels of the
/// added edges.
template <RigidPose P>
LabelSidecar inject_outliers(PoseGraph<P>& g, const Estimate<P>& gt, double rate, std::uint64_t seed,
                             double min_distance, const InfoMatrix<P>& info = InfoMatrix<P>::Identity()) {
    constexpr int N = PoseTraits<P>::kDim;
    if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("outlier rate must lie in [0, 1)");
    LabelSidecar added;
    const std::size_t existing = g.num_landmark_edges();
    const auto n_out = static_cast<std::size_t>(std::llround(rate * static_cast<double>(existing) / (1.0 - rate)));
    if (n_out == 0) return added;

    std::vector<NodeId> nodes;
    Vector<P> lo = Vector<P>::Constant(std::numeric_limits<double>::infinity());
    Vector<P> hi = -lo;
    for (const auto& [n, p] : gt.poses) {
        if (!g.has_node(n)) continue;
        nodes.push_back(n);
        lo = lo.cwiseMin(p.translation());
        hi = hi.cwiseMax(p.translation());
    }
    std::set<std::pair<NodeId, NodeId>> used;
    for (const auto& e : g.edges()) {
        used.insert({e.from, e.to});
        used.insert({e.to, e.from});
    }
    auto eligible = [&](const NodeId& a, const NodeId& b) {
        return a.session != b.session && !used.contains({a, b}) &&
               (gt.at(a).translation() - gt.at(b).translation()).norm() > min_distance;
    };

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, nodes.empty() ? 0 : nodes.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t k = 0; k < n_out; ++k) {
        std::optional<std::pair<NodeId, NodeId>> chosen;
        for (int attempt = 0; attempt < 10000 && !chosen && !nodes.empty(); ++attempt) {
            NodeId a = nodes[pick(rng)], b = nodes[pick(rng)];
            if (b < a) std::swap(a, b);
            if (eligible(a, b)) chosen = std::pair{a, b};
        }
        if (!chosen) {
            std::vector<std::pair<NodeId, NodeId>> pool;
            for (std::size_t i = 0; i < nodes.size(); ++i)
                for (std::size_t j = i + 1; j < nodes.size(); ++j)
                    if (eligible(nodes[i], nodes[j])) pool.emplace_back(nodes[i], nodes[j]);
            if (pool.empty()) throw GenerationError("no eligible node pair for an incorrect edge");
            chosen = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        }
        Vector<P> t;
        for (int i = 0; i < N; ++i) t[i] = lo[i] + unit(rng) * (hi[i] - lo[i]);
        P z;
        if constexpr (std::is_same_v<P, Pose2>) {
            z = Pose2(t.x(), t.y(), (2.0 * unit(rng) - 1.0) * std::numbers::pi);
        } else {
            // Uniform rotation (Shoemake).
            const double u1 = unit(rng), u2 = unit(rng), u3 = unit(rng);
            const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
            const Eigen::Quaterniond q(b * std::cos(2.0 * std::numbers::pi * u3), a * std::sin(2.0 * std::numbers::pi * u2),
                                       a * std::cos(2.0 * std::numbers::pi * u2), b * std::sin(2.0 * std::numbers::pi * u3));
            z = Pose3(t, q);
        }
        g.add_edge(chosen->first, chosen->second, z, EdgeKind::landmark, info);
        used.insert(*chosen);
        used.insert({chosen->second, chosen->first});
        added[*chosen] = true;
    }
    return added;
}

/// Two-session dataset cut from one lattice loop; the sessions overlap on the
/// shared spur street. Odometry and correct
/// landmark edges carry Gaussian noise in the tangent space; every inter-session
/// pair within `revisit_radius` becomes a correct edge, then incorrect edges
/// are injected at `outlier_rate`. Deterministic for a given seed.
template <RigidPose P>
LabeledDataset<P> generate_multisession(const SynthConfig& cfg) {
    if (cfg.frames_per_session < 2) throw UsageError("frames_per_session must be >= 2");
    if (!(cfg.outlier_rate >= 0.0 && cfg.outlier_rate < 1.0)) throw UsageError("outlier rate must lie in [0, 1)");
    if (!(cfg.revisit_radius < cfg.min_outlier_distance))
        throw UsageError("revisit radius must be smaller than the minimum outlier distance");
    if (!(cfg.step_length > 0.0)) throw UsageError("step length must be positive");

    std::mt19937_64 rng(cfg.seed);
    const int frames = 2 * cfg.frames_per_session;
    // Blocks wider than the revisit radius keep opposite skyline sides apart.
    const int block = static_cast<int>(std::floor(cfg.revisit_radius / cfg.step_length)) + 2;
    const auto path = synth_detail::lattice_loop(frames, block, cfg.turn_probability, rng);

    LabeledDataset<P> ds;
    std::vector<NodeId> ids;
    for (int k = 0; k < frames; ++k) {
        const NodeId n{k / cfg.frames_per_session, k % cfg.frames_per_session};
        ids.push_back(n);
        const auto& s = path[static_cast<std::size_t>(k)];
        ds.ground_truth.poses.emplace(n, synth_detail::planar_pose<P>(s.x * cfg.step_length, s.y * cfg.step_length,
                                                                      s.heading * std::numbers::pi / 2.0));
    }
    const auto info = synth_detail::noise_information<P>(cfg.odom_sigma_t, cfg.odom_sigma_r);
    for (int k = 0; k + 1 < frames; ++k) {
        const NodeId a = ids[static_cast<std::size_t>(k)], b = ids[static_cast<std::size_t>(k + 1)];
        if (a.session != b.session) continue;
        const P rel = between(ds.ground_truth.at(a), ds.ground_truth.at(b));
        ds.graph.add_edge(a, b, synth_detail::perturb(rel, rng, cfg.odom_sigma_t, cfg.odom_sigma_r), EdgeKind::odometry,
                          info);
    }
    // Squared lattice distance is an exact integer, so the radius test is exact.
    const double radius_steps = cfg.revisit_radius / cfg.step_length;
    for (int a = 0; a < cfg.frames_per_session; ++a) {
        for (int b = cfg.frames_per_session; b < frames; ++b) {
            const auto& pa = path[static_cast<std::size_t>(a)];
            const auto& pb = path[static_cast<std::size_t>(b)];
            const long d2 = static_cast<long>(pa.x - pb.x) * (pa.x - pb.x) + static_cast<long>(pa.y - pb.y) * (pa.y - pb.y);
            if (static_cast<double>(d2) > radius_steps * radius_steps + 1e-9) continue;
            const NodeId na = ids[static_cast<std::size_t>(a)], nb = ids[static_cast<std::size_t>(b)];
            const P rel = between(ds.ground_truth.at(na), ds.ground_truth.at(nb));
            ds.graph.add_edge(na, nb, synth_detail::perturb(rel, rng, cfg.odom_sigma_t, cfg.odom_sigma_r),
                              EdgeKind::landmark, info);
            ds.labels[{na, nb}] = false;
        }
    }
    if (ds.graph.num_landmark_edges() == 0) {
        throw GenerationError("no inter-session pose pair lies within the revisit radius; enlarge it");
    }
    const auto outliers = inject_outliers(ds.graph, ds.ground_truth, cfg.outlier_rate, rng(),
                                          cfg.min_outlier_distance, info);
    ds.labels.insert(outliers.begin(), outliers.end());

    const auto guess = initial_guess(ds.graph.filtered([&](const Edge<P>& e) {
        return e.is_odometry() || !find_label(ds.labels, e.from, e.to).value_or(false);
    }));
    for (const auto& [n, p] : guess.poses) ds.graph.add_node(n, p);
    return ds;
}

}  // namespace mcslam
