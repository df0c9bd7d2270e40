#pragma once

#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SVD>

#include "mcslam/errors.hpp"
#include "mcslam/graph_io.hpp"
#include "mcslam/optimizer.hpp"

namespace mcslam {

/// Rigid transform (rotation + translation) between two point sets.
template <int N>
struct RigidAlignment {
    Eigen::Matrix<double, N, N> R = Eigen::Matrix<double, N, N>::Identity();
    Eigen::Matrix<double, N, 1> t = Eigen::Matrix<double, N, 1>::Zero();

    Eigen::Matrix<double, N, 1> apply(const Eigen::Matrix<double, N, 1>& p) const { return R * p + t; }
};

/// Closed-form least-squares rigid transform mapping `src` onto `dst`, no scale.
template <int N>
RigidAlignment<N> align_points(const std::vector<Eigen::Matrix<double, N, 1>>& src,
                               const std::vector<Eigen::Matrix<double, N, 1>>& dst) {
    using Vec = Eigen::Matrix<double, N, 1>;
    using Mat = Eigen::Matrix<double, N, N>;
    if (src.size() != dst.size()) throw UsageError("point sets differ in size");
    if (src.size() < 2) throw AlignmentError("alignment needs at least 2 common nodes");
    Vec mu_s = Vec::Zero(), mu_d = Vec::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        mu_s += src[i];
        mu_d += dst[i];
    }
    mu_s /= static_cast<double>(src.size());
    mu_d /= static_cast<double>(src.size());

    Mat cov = Mat::Zero();
    Mat spread = Mat::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        cov += (dst[i] - mu_d) * (src[i] - mu_s).transpose();
        spread += (src[i] - mu_s) * (src[i] - mu_s).transpose();
    }
    Eigen::JacobiSVD<Mat> spread_svd(spread);
    const auto sv = spread_svd.singularValues();
    if (sv[0] <= 1e-18) throw AlignmentError("all points coincide");
    if (N == 3 && sv[1] <= 1e-12 * sv[0]) throw AlignmentError("points are collinear");

    Eigen::JacobiSVD<Mat> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat S = Mat::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) S(N - 1, N - 1) = -1.0;
    RigidAlignment<N> a;
    a.R = svd.matrixU() * S * svd.matrixV().transpose();
    a.t = mu_d - a.R * mu_s;
    return a;
}

struct EdgeMetrics {
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 1.0;
    std::size_t removed = 0;
    std::size_t removed_incorrect = 0;
    std::size_t incorrect = 0;
    std::size_t correct = 0;
    std::size_t removed_correct = 0;

    double correct_removed_fraction() const {
        return correct == 0 ? 0.0 : static_cast<double>(removed_correct) / static_cast<double>(correct);
    }
};

template <RigidPose P>
struct EvalReport {
    double rmse = 0.0;
    std::size_t n_nodes = 0;
    P alignment;
    std::optional<EdgeMetrics> edges;
};

/// RMSE of translations after the best rigid alignment of `est` onto `gt`
/// over their common nodes.
template <RigidPose P>
EvalReport<P> align_and_rmse(const std::map<NodeId, P>& est, const std::map<NodeId, P>& gt) {
    constexpr int N = PoseTraits<P>::kDim;
    std::vector<Eigen::Matrix<double, N, 1>> src, dst;
    for (const auto& [n, p] : est) {
        auto it = gt.find(n);
        if (it == gt.end()) continue;
        src.push_back(p.translation());
        dst.push_back(it->second.translation());
    }
    const auto a = align_points<N>(src, dst);
    double sq = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) sq += (a.apply(src[i]) - dst[i]).squaredNorm();
    EvalReport<P> rep;
    rep.n_nodes = src.size();
    rep.rmse = std::sqrt(sq / static_cast<double>(src.size()));
    if constexpr (N == 2) {
        rep.alignment = Pose2(a.t.x(), a.t.y(), std::atan2(a.R(1, 0), a.R(0, 0)));
    } else {
        rep.alignment = Pose3(a.t, Eigen::Quaterniond(a.R));
    }
    return rep;
}

template <RigidPose P>
EvalReport<P> align_and_rmse(const Estimate<P>& est, const Estimate<P>& gt) {
    return align_and_rmse(est.poses, gt.poses);
}

/// Precision/recall of incorrect-edge detection. An empty removal set has
/// precision 1; a dataset without incorrect edges has recall 1.
inline EdgeMetrics edge_metrics(const std::vector<std::pair<NodeId, NodeId>>& removed, const LabelSidecar& labels) {
    EdgeMetrics m;
    for (const auto& [_, incorrect] : labels) (incorrect ? m.incorrect : m.correct)++;
    std::set<std::pair<NodeId, NodeId>> seen;
    for (const auto& [a, b] : removed) {
        const auto key = a < b ? std::pair{a, b} : std::pair{b, a};
        if (!seen.insert(key).second) continue;
        const auto label = find_label(labels, a, b);
        if (!label) throw UsageError("removed edge " + to_string(a) + "-" + to_string(b) + " has no label");
        ++m.removed;
        (*label ? m.removed_incorrect : m.removed_correct)++;
    }
    if (m.removed > 0) m.precision = static_cast<double>(m.removed_incorrect) / static_cast<double>(m.removed);
    if (m.incorrect > 0) m.recall = static_cast<double>(m.removed_incorrect) / static_cast<double>(m.incorrect);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

/// Landmark edges of `before` (as endpoint pairs) that are absent from `after`.
template <RigidPose P>
std::vector<std::pair<NodeId, NodeId>> removed_landmark_edges(const PoseGraph<P>& before, const PoseGraph<P>& after) {
    std::multiset<std::pair<NodeId, NodeId>> kept;
    for (const auto& e : after.edges())
        if (e.is_landmark()) kept.insert({e.from, e.to});
    std::vector<std::pair<NodeId, NodeId>> out;
    for (const auto& e : before.edges()) {
        if (!e.is_landmark()) continue;
        auto it = kept.find({e.from, e.to});
        if (it != kept.end()) {
            kept.erase(it);
        } else {
            out.emplace_back(e.from, e.to);
        }
    }
    return out;
}

/// One report row: dataset, variant, rmse_m, precision, recall, f1, wall_ms.
struct ReportRow {
    std::string dataset;
    std::string variant;
    std::optional<double> rmse;
    std::optional<EdgeMetrics> edges;
    std::optional<double> wall_ms;
};

inline std::string report_header() { return "dataset\tvariant\trmse_m\tprecision\trecall\tf1\twall_ms\n"; }

inline std::string format_report_row(const ReportRow& row) {
    auto fixed = [](std::optional<double> v, int digits) {
        if (!v) return std::string("-");
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), *v, std::chars_format::fixed, digits);
        return std::string(buf, ptr);
    };
    std::string out = row.dataset + '\t' + row.variant + '\t' + fixed(row.rmse, 9);
    if (row.edges) {
        out += '\t' + fixed(row.edges->precision, 6) + '\t' + fixed(row.edges->recall, 6) + '\t' +
               fixed(row.edges->f1, 6);
    } else {
        out += "\t-\t-\t-";
    }
    out += '\t' + fixed(row.wall_ms, 3) + '\n';
    return out;
}

}  // namespace mcslam
