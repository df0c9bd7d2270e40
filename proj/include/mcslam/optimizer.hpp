#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "mcslam/errors.hpp"
#include "mcslam/posegraph.hpp"

namespace mcslam {

struct LmConfig {
    int max_iterations = 100;
    double lambda_init = 1e-4;
    double lambda_factor = 10.0;
    double min_relative_decrease = 1e-9;
    double min_step_norm = 1e-10;
};

/// Poses per node. The anchor (smallest node id) is held fixed by the optimizer.
template <RigidPose P>
struct Estimate {
    std::map<NodeId, P> poses;
    std::vector<std::string> warnings;

    NodeId anchor() const { return poses.begin()->first; }
    const P& at(const NodeId& n) const {
        auto it = poses.find(n);
        if (it == poses.end()) throw UsageError("node " + to_string(n) + " missing from estimate");
        return it->second;
    }
};

// ---------------------------------------------------------------------------
// Residuals and Jacobians

/// Unwhitened residual log(z^-1 * xi^-1 * xj).
template <RigidPose P>
Twist<P> raw_residual(const P& z, const P& xi, const P& xj) {
    return log_map(between(z, between(xi, xj)));
}

template <RigidPose P>
Eigen::Matrix<double, PoseTraits<P>::kDof, PoseTraits<P>::kDof> whitener(const InfoMatrix<P>& info) {
    Eigen::LLT<InfoMatrix<P>> llt(info);
    return llt.matrixL().transpose();
}

/// Residual of an edge whitened by the square root of its information matrix.
template <RigidPose P>
Twist<P> residual(const Edge<P>& e, const Estimate<P>& est) {
    return whitener<P>(e.info) * raw_residual(e.z, est.at(e.from), est.at(e.to));
}

/// 0.5 * sum of squared whitened residuals.
template <RigidPose P>
double total_error(const PoseGraph<P>& g, const Estimate<P>& est) {
    double sum = 0.0;
    for (const auto& e : g.edges()) {
        const Twist<P> r = raw_residual(e.z, est.at(e.from), est.at(e.to));
        sum += r.dot(e.info * r);
    }
    return 0.5 * sum;
}

namespace opt_detail {

// Right Jacobian of SE(2) exp for twist (rho_x, rho_y, theta).
inline Eigen::Matrix3d se2_right_jacobian(const Eigen::Vector3d& v) {
    const double th = v[2], r1 = v[0], r2 = v[1];
    Eigen::Matrix3d J = Eigen::Matrix3d::Identity();
    if (std::abs(th) < kSmallAngle) {
        J(0, 1) = th / 2.0;
        J(1, 0) = -th / 2.0;
        J(0, 2) = -r2 / 2.0;
        J(1, 2) = r1 / 2.0;
        return J;
    }
    const double s = std::sin(th), c = std::cos(th), th2 = th * th;
    J(0, 0) = s / th;
    J(0, 1) = (1.0 - c) / th;
    J(1, 0) = (c - 1.0) / th;
    J(1, 1) = s / th;
    J(0, 2) = (th * r1 - r2 + r2 * c - r1 * s) / th2;
    J(1, 2) = (r1 + th * r2 - r1 * c - r2 * s) / th2;
    return J;
}

inline Eigen::Matrix3d se2_adjoint(const Pose2& p) {
    Eigen::Matrix3d A = Eigen::Matrix3d::Identity();
    A.topLeftCorner<2, 2>() = p.rotation();
    A(0, 2) = p.y;
    A(1, 2) = -p.x;
    return A;
}

}  // namespace opt_detail

template <RigidPose P>
struct EdgeJacobians {
    Eigen::Matrix<double, PoseTraits<P>::kDof, PoseTraits<P>::kDof> from;
    Eigen::Matrix<double, PoseTraits<P>::kDof, PoseTraits<P>::kDof> to;
};

/// Analytic Jacobians of the unwhitened SE(2) residual with respect to right
/// perturbations x <- x * exp(d) of both endpoints.
inline EdgeJacobians<Pose2> residual_jacobians(const Pose2& z, const Pose2& xi, const Pose2& xj) {
    const Eigen::Vector3d r = raw_residual(z, xi, xj);
    const Eigen::Matrix3d jr_inv = opt_detail::se2_right_jacobian(r).inverse();
    return {-jr_inv * opt_detail::se2_adjoint(between(xj, xi)), jr_inv};
}

/// Central-difference Jacobians of the unwhitened SE(3) residual.
inline EdgeJacobians<Pose3> residual_jacobians(const Pose3& z, const Pose3& xi, const Pose3& xj) {
    constexpr double h = 1e-6;
    EdgeJacobians<Pose3> J;
    for (int k = 0; k < 6; ++k) {
        Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
        d[k] = h;
        const Eigen::Matrix<double, 6, 1> nd = -d;
        J.from.col(k) = (raw_residual(z, compose(xi, exp_map(d)), xj) - raw_residual(z, compose(xi, exp_map(nd)), xj)) /
                        (2.0 * h);
        J.to.col(k) = (raw_residual(z, xi, compose(xj, exp_map(d))) - raw_residual(z, xi, compose(xj, exp_map(nd)))) /
                      (2.0 * h);
    }
    return J;
}

// ---------------------------------------------------------------------------
// Initialisation

/// Dead-reckoned estimate. Each session is composed from its first frame; the
/// first session starts at the identity and every later session is placed by
/// the first landmark edge (in stored order) reaching an already placed session.
/// A session with no such edge starts at the identity and a warning is recorded.
template <RigidPose P>
Estimate<P> initial_guess(const PoseGraph<P>& g) {
    Estimate<P> est;
    if (g.num_nodes() == 0) return est;
    if (const auto gaps = g.sessions_with_gaps(); !gaps.empty()) {
        throw StructuralError("session " + std::to_string(gaps.front()) + " has an incomplete odometry chain");
    }
    // Session-local poses relative to the first frame.
    std::map<int, std::map<NodeId, P>> local;
    for (int s : g.sessions()) {
        auto [lo, hi] = *g.frame_range(s);
        P acc = identity<P>();
        local[s].emplace(NodeId{s, lo}, acc);
        for (int f = lo; f < hi; ++f) {
            acc = compose(acc, g.odometry_from(NodeId{s, f})->z);
            local[s].emplace(NodeId{s, f + 1}, acc);
        }
    }
    auto place = [&](int s, const P& origin) {
        for (const auto& [n, p] : local[s]) est.poses[n] = compose(origin, p);
    };
    std::set<int> placed, pending;
    for (const auto& [s, _] : local) pending.insert(s);
    place(*pending.begin(), identity<P>());
    placed.insert(*pending.begin());
    pending.erase(pending.begin());
    while (!pending.empty()) {
        bool progressed = false;
        for (const auto& e : g.edges()) {
            if (!e.is_landmark()) continue;
            const bool from_placed = placed.contains(e.from.session), to_placed = placed.contains(e.to.session);
            if (from_placed == to_placed) continue;
            const NodeId known = from_placed ? e.from : e.to;
            const NodeId fresh = from_placed ? e.to : e.from;
            const P link = from_placed ? e.z : inverse(e.z);
            const P target = compose(est.poses.at(known), link);
            place(fresh.session, compose(target, inverse(local[fresh.session].at(fresh))));
            placed.insert(fresh.session);
            pending.erase(fresh.session);
            progressed = true;
            break;
        }
        if (!progressed) {
            const int s = *pending.begin();
            est.warnings.push_back("session " + std::to_string(s) + " has no landmark edge; placed at identity");
            place(s, identity<P>());
            placed.insert(s);
            pending.erase(pending.begin());
        }
    }
    return est;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

enum class OptimizeStatus { converged, max_iterations, numerical_failure };

template <RigidPose P>
struct OptimizeResult {
    Estimate<P> estimate;  ///< last valid estimate (also on failure)
    OptimizeStatus status = OptimizeStatus::converged;
    std::vector<double> error_history;  ///< total error at start and after each accepted step
    int iterations = 0;
    std::string message;
};

/// Levenberg-Marquardt on the pose manifold with retraction x <- x * exp(d).
/// The smallest node id is fixed at its initial pose.
template <RigidPose P>
OptimizeResult<P> optimize(const PoseGraph<P>& g, const Estimate<P>& init, const LmConfig& cfg = {}) {
    constexpr int D = PoseTraits<P>::kDof;
    OptimizeResult<P> result;
    result.estimate = init;
    for (const auto& e : g.edges()) {
        (void)init.at(e.from);
        (void)init.at(e.to);
    }
    if (init.poses.empty()) return result;

    const NodeId anchor = init.anchor();
    std::map<NodeId, int> block;
    for (const auto& [n, _] : init.poses)
        if (n != anchor) block.emplace(n, static_cast<int>(block.size()));
    const int dim = static_cast<int>(block.size()) * D;

    double error = total_error(g, result.estimate);
    result.error_history.push_back(error);
    if (!std::isfinite(error)) {
        result.status = OptimizeStatus::numerical_failure;
        result.message = "initial error is not finite";
        return result;
    }
    if (dim == 0 || error == 0.0) return result;

    struct Whitened {
        Eigen::Matrix<double, D, D> L;
    };
    std::vector<Whitened> whiten;
    whiten.reserve(g.num_edges());
    for (const auto& e : g.edges()) whiten.push_back({whitener<P>(e.info)});

    double lambda = cfg.lambda_init;
    result.status = OptimizeStatus::max_iterations;
    for (int it = 0; it < cfg.max_iterations; ++it) {
        result.iterations = it + 1;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(g.num_edges() * 4 * D * D + static_cast<std::size_t>(dim));
        Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
        for (std::size_t k = 0; k < g.num_edges(); ++k) {
            const auto& e = g.edges()[k];
            const P& xi = result.estimate.poses.at(e.from);
            const P& xj = result.estimate.poses.at(e.to);
            const auto& L = whiten[k].L;
            const Twist<P> r = L * raw_residual(e.z, xi, xj);
            const auto J = residual_jacobians(e.z, xi, xj);
            const Eigen::Matrix<double, D, D> Ji = L * J.from;
            const Eigen::Matrix<double, D, D> Jj = L * J.to;
            const auto bi = block.find(e.from);
            const auto bj = block.find(e.to);
            auto add_block = [&](int r0, int c0, const Eigen::Matrix<double, D, D>& m) {
                for (int a = 0; a < D; ++a)
                    for (int c = 0; c < D; ++c) trip.emplace_back(r0 + a, c0 + c, m(a, c));
            };
            if (bi != block.end()) {
                const int oi = bi->second * D;
                add_block(oi, oi, Ji.transpose() * Ji);
                b.segment<D>(oi) += Ji.transpose() * r;
            }
            if (bj != block.end()) {
                const int oj = bj->second * D;
                add_block(oj, oj, Jj.transpose() * Jj);
                b.segment<D>(oj) += Jj.transpose() * r;
            }
            if (bi != block.end() && bj != block.end()) {
                const int oi = bi->second * D, oj = bj->second * D;
                add_block(oi, oj, Ji.transpose() * Jj);
                add_block(oj, oi, Jj.transpose() * Ji);
            }
        }
        Eigen::SparseMatrix<double> H(dim, dim);
        H.setFromTriplets(trip.begin(), trip.end());

        bool accepted = false;
        while (!accepted) {
            Eigen::SparseMatrix<double> A = H;
            for (int d = 0; d < dim; ++d) A.coeffRef(d, d) += lambda;
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
            Eigen::VectorXd step;
            if (solver.info() == Eigen::Success) step = solver.solve(-b);
            if (solver.info() != Eigen::Success || !step.allFinite()) {
                lambda *= cfg.lambda_factor;
                if (lambda > 1e20) {
                    result.status = OptimizeStatus::numerical_failure;
                    result.message = "normal equations could not be solved";
                    return result;
                }
                continue;
            }
            Estimate<P> trial = result.estimate;
            for (const auto& [n, bidx] : block) {
                auto& pose = trial.poses.at(n);
                pose = compose(pose, exp_map(Twist<P>(step.segment<D>(bidx * D))));
            }
            const double trial_error = total_error(g, trial);
            if (!std::isfinite(trial_error)) {
                result.status = OptimizeStatus::numerical_failure;
                result.message = "error became non-finite";
                return result;
            }
            if (trial_error < error) {
                const double decrease = (error - trial_error) / error;
                result.estimate = std::move(trial);
                error = trial_error;
                result.error_history.push_back(error);
                lambda = std::max(lambda / cfg.lambda_factor, 1e-12);
                accepted = true;
                if (decrease < cfg.min_relative_decrease || step.norm() < cfg.min_step_norm || error == 0.0) {
                    result.status = OptimizeStatus::converged;
                    return result;
                }
            } else {
                lambda *= cfg.lambda_factor;
                if (step.norm() < cfg.min_step_norm || lambda > 1e20) {
                    result.status = OptimizeStatus::converged;
                    return result;
                }
            }
        }
    }
    return result;
}

}  // namespace mcslam
