#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace mcslam;
using testutil::matrix_of;
using testutil::pose_distance;

namespace {

constexpr double kPi = std::numbers::pi;

Pose2 pose_from_matrix(const Eigen::Matrix3d& m) { return Pose2(m(0, 2), m(1, 2), std::atan2(m(1, 0), m(0, 0))); }

}  // namespace

TEST(Geometry, AngleNormalizationRange) {
    EXPECT_DOUBLE_EQ(normalize_angle(kPi), kPi);
    EXPECT_DOUBLE_EQ(normalize_angle(-kPi), kPi);
    EXPECT_NEAR(normalize_angle(3 * kPi), kPi, 1e-12);
    EXPECT_NEAR(normalize_angle(2 * kPi + 0.25), 0.25, 1e-12);
    EXPECT_NEAR(Pose2(0, 0, -3 * kPi / 2).theta, kPi / 2, 1e-12);
}

TEST(Geometry, Se2ComposeMatchesMatrixProduct) {
    const Pose2 c = compose(Pose2(1, 0, kPi / 2), Pose2(1, 0, 0));
    EXPECT_NEAR(c.x, 1.0, 1e-12);
    EXPECT_NEAR(c.y, 1.0, 1e-12);
    EXPECT_NEAR(c.theta, kPi / 2, 1e-12);

    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        const Pose2 a = testutil::random_pose2(rng), b = testutil::random_pose2(rng);
        EXPECT_LT(pose_distance(compose(a, b), pose_from_matrix(matrix_of(a) * matrix_of(b))), 1e-12);
    }
}

TEST(Geometry, Se2Between) {
    const Pose2 d = between(Pose2(1, 1, kPi / 2), Pose2(1, 2, kPi / 2));
    EXPECT_NEAR(d.x, 1.0, 1e-12);
    EXPECT_NEAR(d.y, 0.0, 1e-12);
    EXPECT_NEAR(d.theta, 0.0, 1e-12);
    const Pose2 p(3, -2, 0.7);
    EXPECT_LT(pose_distance(between(p, p), Pose2()), 1e-12);
    EXPECT_LT(pose_distance(between(Pose2(), p), p), 1e-12);
}

TEST(Geometry, IdentityIsNeutral) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
        const Pose2 p = testutil::random_pose2(rng);
        EXPECT_LT(pose_distance(compose(identity<Pose2>(), p), p), 1e-15);
        EXPECT_LT(pose_distance(compose(p, identity<Pose2>()), p), 1e-15);
        const Pose3 q = testutil::random_pose3(rng);
        EXPECT_LT(pose_distance(compose(identity<Pose3>(), q), q), 1e-15);
    }
}

template <class P>
class GroupAxioms : public ::testing::Test {};
using PoseTypes = ::testing::Types<Pose2, Pose3>;
TYPED_TEST_SUITE(GroupAxioms, PoseTypes);

TYPED_TEST(GroupAxioms, AssociativityAndInverse) {
    using P = TypeParam;
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        const P a = testutil::random_pose<P>(rng), b = testutil::random_pose<P>(rng), c = testutil::random_pose<P>(rng);
        EXPECT_LT(pose_distance(compose(compose(a, b), c), compose(a, compose(b, c))), 1e-12);
        EXPECT_LT(pose_distance(compose(a, inverse(a)), identity<P>()), 1e-12);
        EXPECT_LT(pose_distance(compose(inverse(a), a), identity<P>()), 1e-12);
        EXPECT_LT(pose_distance(compose(a, between(a, b)), b), 1e-12);
    }
}

TYPED_TEST(GroupAxioms, LogExpRoundTrip) {
    using P = TypeParam;
    constexpr int D = PoseTraits<P>::kDof;
    EXPECT_EQ(log_map(identity<P>()), Twist<P>::Zero());
    EXPECT_LT(pose_distance(exp_map(Twist<P>::Zero().eval()), identity<P>()), 1e-15);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> angle(-3.0, 3.0);
    for (int i = 0; i < 1000; ++i) {
        P p;
        if constexpr (std::is_same_v<P, Pose2>) {
            p = Pose2(std::uniform_real_distribution<double>(-10, 10)(rng), std::uniform_real_distribution<double>(-10, 10)(rng),
                      angle(rng));
        } else {
            p = testutil::random_pose3(rng, 10.0, 3.0);
        }
        EXPECT_LT(pose_distance(exp_map(log_map(p)), p), 1e-9);
        const Twist<P> v = log_map(p);
        for (int k = 0; k < D; ++k) {
            EXPECT_TRUE(std::isfinite(v[k]));
        }
    }
}

TYPED_TEST(GroupAxioms, SmallAngleSeriesIsContinuous) {
    using P = TypeParam;
    constexpr int D = PoseTraits<P>::kDof;
    constexpr int N = PoseTraits<P>::kDim;
    for (double a : {0.0, 1e-12, 5e-8, 1e-7, 2e-7, 1e-5}) {
        Twist<P> v = Twist<P>::Zero();
        v[0] = 1.5;
        v[1] = -0.5;
        v[D - 1] = a;
        const P p = exp_map(v);
        EXPECT_LT((log_map(p) - v).norm(), 1e-12) << "angle " << a;
        (void)N;
    }
}

TEST(Geometry, Se2ExpMatchesMatrixExponential) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 100; ++i) {
        const Eigen::Vector3d v(u(rng), u(rng), u(rng));
        Eigen::Matrix3d xi = Eigen::Matrix3d::Zero();
        xi(0, 1) = -v[2];
        xi(1, 0) = v[2];
        xi(0, 2) = v[0];
        xi(1, 2) = v[1];
        // Truncated power series of the matrix exponential.
        Eigen::Matrix3d term = Eigen::Matrix3d::Identity(), sum = Eigen::Matrix3d::Identity();
        for (int k = 1; k < 40; ++k) {
            term = term * xi / k;
            sum += term;
        }
        EXPECT_LT(pose_distance(exp_map(v), pose_from_matrix(sum)), 1e-12);
    }
}

TEST(Geometry, Se3ExpMatchesMatrixExponential) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int i = 0; i < 100; ++i) {
        Eigen::Matrix<double, 6, 1> v;
        for (int k = 0; k < 6; ++k) v[k] = u(rng);
        Eigen::Matrix4d xi = Eigen::Matrix4d::Zero();
        xi.topLeftCorner<3, 3>() << 0, -v[5], v[4], v[5], 0, -v[3], -v[4], v[3], 0;
        xi.topRightCorner<3, 1>() = v.head<3>();
        Eigen::Matrix4d term = Eigen::Matrix4d::Identity(), sum = Eigen::Matrix4d::Identity();
        for (int k = 1; k < 40; ++k) {
            term = term * xi / k;
            sum += term;
        }
        EXPECT_LT((matrix_of(exp_map(v)) - sum).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Geometry, QuaternionCanonicalAndNormalized) {
    std::mt19937_64 rng(9);
    Pose3 acc;
    for (int i = 0; i < 1000; ++i) {
        acc = compose(acc, testutil::random_pose3(rng, 1.0));
        EXPECT_GE(acc.q.w(), 0.0);
        EXPECT_NEAR(acc.q.norm(), 1.0, 1e-9);
    }
    const Pose3 flipped(Eigen::Vector3d::Zero(), Eigen::Quaterniond(-0.5, 0.5, 0.5, 0.5));
    EXPECT_GE(flipped.q.w(), 0.0);
    EXPECT_NEAR(flipped.q.x(), -0.5, 1e-15);
}

TEST(Geometry, RotationByPiUsesPositiveAxis) {
    const Pose3 half_turn(Eigen::Vector3d::Zero(), Eigen::Quaterniond(0.0, 0.0, 0.0, -1.0));
    const auto v = log_map(half_turn);
    EXPECT_NEAR(v[5], kPi, 1e-12);
    EXPECT_NEAR(rotation_angle(half_turn), kPi, 1e-12);
    const Pose2 p(0.0, 0.0, -kPi);
    EXPECT_NEAR(log_map(p)[2], kPi, 1e-12);
}
