#pragma once

#include <cmath>
#include <concepts>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mcslam {

/// Below this rotation angle log/exp switch to series expansions.
inline constexpr double kSmallAngle = 1e-7;

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double theta) {
    double r = std::remainder(theta, 2.0 * std::numbers::pi);
    if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
    return r;
}

/// Planar rigid motion. Heading is kept in (-pi, pi].
struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;

    Pose2() = default;
    Pose2(double x_, double y_, double theta_) : x(x_), y(y_), theta(normalize_angle(theta_)) {}

    Eigen::Vector2d translation() const { return {x, y}; }
    Eigen::Matrix2d rotation() const {
        const double c = std::cos(theta), s = std::sin(theta);
        return (Eigen::Matrix2d() << c, -s, s, c).finished();
    }
    double angle() const { return std::abs(theta); }

    friend bool operator==(const Pose2&, const Pose2&) = default;
};

/// Spatial rigid motion. The quaternion is unit-norm with w >= 0.
struct Pose3 {
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    Eigen::Quaterniond q = Eigen::Quaterniond::Identity();

    Pose3() = default;
    Pose3(const Eigen::Vector3d& t_, const Eigen::Quaterniond& q_) : t(t_), q(canonical(q_)) {}

    Eigen::Vector3d translation() const { return t; }
    Eigen::Matrix3d rotation() const { return q.toRotationMatrix(); }
    /// Rotation angle in [0, pi].
    double angle() const { return 2.0 * std::atan2(q.vec().norm(), q.w()); }

    /// Normalizes and flips to w >= 0. Already-canonical input is returned bit-for-bit.
    static Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
        const double n = q.norm();
        if (std::abs(n - 1.0) > 1e-15) q.coeffs() /= n;
        if (q.w() < 0.0) q.coeffs() = -q.coeffs();
        return q;
    }

    friend bool operator==(const Pose3& a, const Pose3& b) {
        return a.t == b.t && a.q.coeffs() == b.q.coeffs();
    }
};

template <class P>
struct PoseTraits;

template <>
struct PoseTraits<Pose2> {
    static constexpr int kDim = 2;
    static constexpr int kDof = 3;
    static constexpr const char* kVertexTag = "VERTEX_SE2";
    static constexpr const char* kEdgeTag = "EDGE_SE2";
};

template <>
struct PoseTraits<Pose3> {
    static constexpr int kDim = 3;
    static constexpr int kDof = 6;
    static constexpr const char* kVertexTag = "VERTEX_SE3:QUAT";
    static constexpr const char* kEdgeTag = "EDGE_SE3:QUAT";
};

template <class P>
concept RigidPose = std::same_as<P, Pose2> || std::same_as<P, Pose3>;

/// Tangent-space coordinates: translation part first, rotation part last.
template <RigidPose P>
using Twist = Eigen::Matrix<double, PoseTraits<P>::kDof, 1>;

template <RigidPose P>
using InfoMatrix = Eigen::Matrix<double, PoseTraits<P>::kDof, PoseTraits<P>::kDof>;

template <RigidPose P>
using Vector = Eigen::Matrix<double, PoseTraits<P>::kDim, 1>;

// ---------------------------------------------------------------------------
// SE(2)

inline Pose2 compose(const Pose2& a, const Pose2& b) {
    const double c = std::cos(a.theta), s = std::sin(a.theta);
    return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta};
}

inline Pose2 inverse(const Pose2& p) {
    const double c = std::cos(p.theta), s = std::sin(p.theta);
    return {-c * p.x - s * p.y, s * p.x - c * p.y, -p.theta};
}

inline Pose2 between(const Pose2& a, const Pose2& b) {
    const double c = std::cos(a.theta), s = std::sin(a.theta);
    const double dx = b.x - a.x, dy = b.y - a.y;
    return {c * dx + s * dy, -s * dx + c * dy, b.theta - a.theta};
}

namespace detail {

// V(theta) = [[a, -b], [b, a]] maps rotation-frame translation to pose translation.
inline void se2_v_coeffs(double theta, double& a, double& b) {
    if (std::abs(theta) < kSmallAngle) {
        a = 1.0 - theta * theta / 6.0;
        b = theta / 2.0;
    } else {
        a = std::sin(theta) / theta;
        const double h = std::sin(0.5 * theta);
        b = 2.0 * h * h / theta;
    }
}

}  // namespace detail

inline Pose2 exp_map(const Eigen::Vector3d& v) {
    double a, b;
    detail::se2_v_coeffs(v[2], a, b);
    return {a * v[0] - b * v[1], b * v[0] + a * v[1], v[2]};
}

inline Eigen::Vector3d log_map(const Pose2& p) {
    double a, b;
    detail::se2_v_coeffs(p.theta, a, b);
    const double det = a * a + b * b;
    return {(a * p.x + b * p.y) / det, (-b * p.x + a * p.y) / det, p.theta};
}

// ---------------------------------------------------------------------------
// SE(3)

namespace detail {

inline Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
    Eigen::Matrix3d m;
    m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
    return m;
}

inline Eigen::Quaterniond quat_exp(const Eigen::Vector3d& phi) {
    const double angle = phi.norm();
    double half_sinc;  // sin(angle/2) / angle
    if (angle < kSmallAngle) {
        half_sinc = 0.5 - angle * angle / 48.0;
    } else {
        half_sinc = std::sin(0.5 * angle) / angle;
    }
    Eigen::Quaterniond q;
    q.w() = std::cos(0.5 * angle);
    q.vec() = half_sinc * phi;
    return q;
}

/// Rotation vector of a canonical (w >= 0) quaternion. At exactly pi the axis
/// sign is chosen so that its first non-zero component is positive.
inline Eigen::Vector3d quat_log(const Eigen::Quaterniond& q) {
    const double n = q.vec().norm();
    const double w = q.w();
    if (n < kSmallAngle * 0.5) {
        // 2 atan2(n, w) / n ~ (2 / w) (1 - n^2 / (3 w^2))
        return (2.0 / w) * (1.0 - n * n / (3.0 * w * w)) * q.vec();
    }
    const double angle = 2.0 * std::atan2(n, w);
    Eigen::Vector3d axis = q.vec() / n;
    if (w == 0.0) {
        for (int i = 0; i < 3; ++i) {
            if (axis[i] != 0.0) {
                if (axis[i] < 0.0) axis = -axis;
                break;
            }
        }
    }
    return angle * axis;
}

// V(phi) = I + (1 - cos)/a^2 K + (a - sin)/a^3 K^2. The half-angle form and a
// longer series keep both coefficients accurate where the closed forms cancel.
inline constexpr double kCancellationAngle = 1e-3;

inline double half_angle_ratio(double a) {  // (1 - cos a) / a^2
    const double s = std::sin(0.5 * a) / a;
    return 2.0 * s * s;
}

inline Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& phi) {
    const double a = phi.norm();
    const Eigen::Matrix3d K = skew(phi);
    if (a < kSmallAngle) return Eigen::Matrix3d::Identity() + 0.5 * K + K * K / 6.0;
    const double a2 = a * a;
    const double cubic = a < kCancellationAngle ? 1.0 / 6.0 - a2 / 120.0 + a2 * a2 / 5040.0
                                                : (a - std::sin(a)) / (a2 * a);
    return Eigen::Matrix3d::Identity() + half_angle_ratio(a) * K + cubic * K * K;
}

inline Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& phi) {
    const double a = phi.norm();
    const Eigen::Matrix3d K = skew(phi);
    if (a < kSmallAngle) return Eigen::Matrix3d::Identity() - 0.5 * K + K * K / 12.0;
    const double a2 = a * a;
    const double coeff = a < kCancellationAngle
                             ? 1.0 / 12.0 + a2 / 720.0 + a2 * a2 / 30240.0
                             : (1.0 - a * std::sin(a) / (2.0 * (1.0 - std::cos(a)))) / a2;
    return Eigen::Matrix3d::Identity() - 0.5 * K + coeff * K * K;
}

}  // namespace detail

inline Pose3 compose(const Pose3& a, const Pose3& b) {
    return {a.t + a.q * b.t, a.q * b.q};
}

inline Pose3 inverse(const Pose3& p) {
    const Eigen::Quaterniond qi = p.q.conjugate();
    return {-(qi * p.t), qi};
}

inline Pose3 between(const Pose3& a, const Pose3& b) {
    const Eigen::Quaterniond qi = a.q.conjugate();
    return {qi * (b.t - a.t), qi * b.q};
}

inline Pose3 exp_map(const Eigen::Matrix<double, 6, 1>& v) {
    const Eigen::Vector3d rho = v.head<3>();
    const Eigen::Vector3d phi = v.tail<3>();
    return {detail::so3_left_jacobian(phi) * rho, detail::quat_exp(phi)};
}

inline Eigen::Matrix<double, 6, 1> log_map(const Pose3& p) {
    const Eigen::Vector3d phi = detail::quat_log(p.q);
    Eigen::Matrix<double, 6, 1> v;
    v.head<3>() = detail::so3_left_jacobian_inverse(phi) * p.t;
    v.tail<3>() = phi;
    return v;
}

template <RigidPose P>
P identity() {
    return P{};
}

/// Rotation angle of `p` in [0, pi].
template <RigidPose P>
double rotation_angle(const P& p) {
    return p.angle();
}

}  // namespace mcslam
