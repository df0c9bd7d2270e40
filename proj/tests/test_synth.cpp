#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace mcslam;

namespace {

template <RigidPose P>
void check_label_invariants(const LabeledDataset<P>& ds, const SynthConfig& sc) {
    std::size_t landmark = 0;
    for (const auto& e : ds.graph.edges()) {
        if (!e.is_landmark()) continue;
        ++landmark;
        const auto label = find_label(ds.labels, e.from, e.to);
        ASSERT_TRUE(label.has_value());
        const double d = (ds.ground_truth.at(e.from).translation() - ds.ground_truth.at(e.to).translation()).norm();
        EXPECT_NE(e.from.session, e.to.session);
        if (*label) {
            EXPECT_GT(d, sc.min_outlier_distance);
        }
        else EXPECT_LE(d, sc.revisit_radius + 1e-9);
    }
    EXPECT_EQ(landmark, ds.labels.size());
}

}  // namespace

TEST(Synth, DefaultOutlierFraction) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        SynthConfig sc;
        sc.seed = seed;
        const auto ds = generate_multisession<Pose2>(sc);
        std::size_t incorrect = 0;
        for (const auto& [_, bad] : ds.labels) incorrect += bad;
        const double n = static_cast<double>(ds.labels.size());
        EXPECT_LE(std::abs(static_cast<double>(incorrect) - 0.10 * n), 1.0) << "seed " << seed;
        check_label_invariants(ds, sc);
    }
}

TEST(Synth, StructureOfDefaultDataset) {
    SynthConfig sc;
    const auto ds = generate_multisession<Pose2>(sc);
    EXPECT_EQ(ds.graph.num_nodes(), 400U);
    EXPECT_EQ(ds.graph.sessions(), (std::set<int>{0, 1}));
    EXPECT_EQ(*ds.graph.frame_range(1), (std::pair<int, int>{0, 199}));
    std::size_t odo = 0;
    for (const auto& e : ds.graph.edges()) odo += e.is_odometry();
    EXPECT_EQ(odo, 2U * 199U);
    for (const auto& [n, p] : ds.graph.nodes()) {
        EXPECT_TRUE(p.has_value());
    }
    const auto& info = ds.graph.edges().front().info;
    EXPECT_NEAR(info(0, 0), 1.0 / (0.05 * 0.05), 1e-9);
    EXPECT_NEAR(info(2, 2), 1.0 / (0.01 * 0.01), 1e-6);
    // Consecutive ground-truth poses are one step apart.
    for (int k = 0; k + 1 < 200; ++k) {
        const Eigen::Vector2d d = ds.ground_truth.at(NodeId{0, k}).translation() - ds.ground_truth.at(NodeId{0, k + 1}).translation();
        EXPECT_NEAR(d.norm(), 1.0, 1e-12);
    }
}

TEST(Synth, Deterministic) {
    SynthConfig sc;
    sc.seed = 42;
    const auto a = generate_multisession<Pose2>(sc), b = generate_multisession<Pose2>(sc);
    EXPECT_EQ(write_g2o(a.graph), write_g2o(b.graph));
    EXPECT_EQ(write_labels(a.labels), write_labels(b.labels));
    sc.seed = 43;
    EXPECT_NE(write_g2o(generate_multisession<Pose2>(sc).graph), write_g2o(a.graph));
    const auto c = generate_multisession<Pose3>(sc), d = generate_multisession<Pose3>(sc);
    EXPECT_EQ(write_g2o(c.graph), write_g2o(d.graph));
}

TEST(Synth, ZeroNoiseGraphIsExact) {
    SynthConfig sc;
    sc.odom_sigma_t = sc.odom_sigma_r = 0.0;
    sc.outlier_rate = 0.0;
    const auto ds = generate_multisession<Pose2>(sc);
    EXPECT_LT(total_error(ds.graph, ds.ground_truth), 1e-18);
    for (const auto& e : ds.graph.edges()) {
        EXPECT_EQ(e.info, Eigen::Matrix3d::Identity());
    }
    const auto res = optimize(ds.graph, initial_guess(ds.graph));
    EXPECT_LT(align_and_rmse(res.estimate, ds.ground_truth).rmse, 1e-6);
}

TEST(Synth, Se3DatasetsMatchLabelInvariants) {
    SynthConfig sc;
    sc.seed = 5;
    const auto ds = generate_multisession<Pose3>(sc);
    check_label_invariants(ds, sc);
}

TEST(Synth, InvalidConfigurations) {
    SynthConfig sc;
    sc.outlier_rate = 1.0;
    EXPECT_THROW(generate_multisession<Pose2>(sc), UsageError);
    sc = SynthConfig{};
    sc.revisit_radius = 25.0;
    EXPECT_THROW(generate_multisession<Pose2>(sc), UsageError);
    sc = SynthConfig{};
    sc.frames_per_session = 3;
    EXPECT_THROW(generate_multisession<Pose2>(sc), GenerationError);
}

TEST(InjectOutliers, ZeroRateLeavesGraphUnchanged) {
    SynthConfig sc;
    sc.outlier_rate = 0.0;
    const auto ds = generate_multisession<Pose2>(sc);
    auto g = ds.graph;
    EXPECT_TRUE(inject_outliers(g, ds.ground_truth, 0.0, 1, 20.0).empty());
    EXPECT_EQ(write_g2o(g), write_g2o(ds.graph));
}

TEST(InjectOutliers, NinetyCorrectGetTen) {
    SynthConfig sc;
    sc.outlier_rate = 0.0;
    const auto ds = generate_multisession<Pose2>(sc);
    auto g = ds.graph.filtered([](const Edge<Pose2>& e) { return e.is_odometry(); });
    std::size_t kept = 0;
    for (const auto& e : ds.graph.edges()) {
        if (e.is_landmark() && kept < 90) {
            g.add_edge(e.from, e.to, e.z, EdgeKind::landmark, e.info);
            ++kept;
        }
    }
    ASSERT_EQ(kept, 90U);
    const auto added = inject_outliers(g, ds.ground_truth, 0.10, 3, 20.0);
    EXPECT_EQ(added.size(), 10U);
    EXPECT_EQ(g.num_landmark_edges(), 100U);
}

TEST(InjectOutliers, NoDuplicatePairsAndFarEndpoints) {
    SynthConfig sc;
    sc.outlier_rate = 0.0;
    const auto ds = generate_multisession<Pose2>(sc);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto g = ds.graph;
        const auto added = inject_outliers(g, ds.ground_truth, 0.5, seed, 20.0);
        std::set<std::pair<NodeId, NodeId>> pairs;
        for (const auto& e : g.edges()) {
            EXPECT_TRUE(pairs.insert(std::minmax(e.from, e.to)).second);
        }
        for (const auto& [key, bad] : added) {
            EXPECT_TRUE(bad);
            EXPECT_NE(key.first.session, key.second.session);
            EXPECT_GT((ds.ground_truth.at(key.first).translation() - ds.ground_truth.at(key.second).translation()).norm(), 20.0);
        }
    }
}

TEST(InjectOutliers, NoEligiblePairIsAnError) {
    auto g = testutil::chain_graph<Pose2>(2, 3);
    g.add_edge(NodeId{0, 0}, NodeId{1, 0}, Pose2(), EdgeKind::landmark);
    const auto gt = initial_guess(g);
    EXPECT_THROW(inject_outliers(g, gt, 0.5, 1, 20.0), GenerationError);
    EXPECT_THROW(inject_outliers(g, gt, 1.0, 1, 20.0), UsageError);
}
