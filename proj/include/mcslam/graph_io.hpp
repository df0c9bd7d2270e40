#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mcslam/errors.hpp"
#include "mcslam/posegraph.hpp"

namespace mcslam {

inline constexpr std::int64_t kDefaultSessionOffset = 100000;

/// Ground-truth edge labels keyed by (from, to); true marks an incorrect edge.
using LabelSidecar = std::map<std::pair<NodeId, NodeId>, bool>;

namespace io_detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline double parse_double(std::string_view tok, std::size_t line) {
    double v = 0.0;
    const char* first = tok.data();
    if (!tok.empty() && tok.front() == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        throw ParseError("invalid number '" + std::string(tok) + "'", line);
    }
    return v;
}

inline std::int64_t parse_int(std::string_view tok, std::size_t line) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError("invalid integer '" + std::string(tok) + "'", line);
    }
    return v;
}

inline void append_double(std::string& out, double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    out.append(buf, ptr);
}

inline void append_int(std::string& out, std::int64_t v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

inline NodeId decode(std::int64_t id, std::int64_t offset, std::size_t line) {
    if (id < 0) throw ParseError("negative vertex id", line);
    return NodeId{static_cast<int>(id / offset), static_cast<int>(id % offset)};
}

inline std::vector<std::pair<std::size_t, std::string_view>> lines_of(std::string_view text) {
    std::vector<std::pair<std::size_t, std::string_view>> out;
    std::size_t start = 0, no = 1;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        out.emplace_back(no++, text.substr(start, end - start));
        if (end == text.size()) break;
        start = end + 1;
    }
    return out;
}

// Reads a "# SESSION_OFFSET n" comment; returns false for other comments.
inline bool read_offset_comment(const std::vector<std::string_view>& tok, std::int64_t& offset, std::size_t line) {
    if (tok.size() >= 2 && tok[0] == "#" && tok[1] == "SESSION_OFFSET") {
        if (tok.size() != 3) throw ParseError("SESSION_OFFSET expects one value", line);
        offset = parse_int(tok[2], line);
        if (offset <= 0) throw ParseError("SESSION_OFFSET must be positive", line);
        return true;
    }
    return false;
}

}  // namespace io_detail

inline std::int64_t encode(const NodeId& n, std::int64_t offset = kDefaultSessionOffset) {
    return static_cast<std::int64_t>(n.session) * offset + n.frame;
}

/// 2 or 3 according to the first vertex or edge record; 0 when there is none.
inline int detect_dimension(std::string_view text) {
    for (const auto& [no, line] : io_detail::lines_of(text)) {
        const auto tok = io_detail::split_ws(line);
        if (tok.empty() || tok[0].front() == '#') continue;
        if (tok[0] == "VERTEX_SE2" || tok[0] == "EDGE_SE2") return 2;
        if (tok[0] == "VERTEX_SE3:QUAT" || tok[0] == "EDGE_SE3:QUAT") return 3;
        throw ParseError("unknown record type '" + std::string(tok[0]) + "'", no);
    }
    return 0;
}

namespace io_detail {

inline Pose2 parse_pose(const std::vector<std::string_view>& tok, std::size_t at, std::size_t line, Pose2*) {
    return {parse_double(tok[at], line), parse_double(tok[at + 1], line), parse_double(tok[at + 2], line)};
}

inline Pose3 parse_pose(const std::vector<std::string_view>& tok, std::size_t at, std::size_t line, Pose3*) {
    const Eigen::Vector3d t(parse_double(tok[at], line), parse_double(tok[at + 1], line),
                            parse_double(tok[at + 2], line));
    Eigen::Quaterniond q(parse_double(tok[at + 6], line), parse_double(tok[at + 3], line),
                         parse_double(tok[at + 4], line), parse_double(tok[at + 5], line));
    if (q.norm() < 1e-12) throw ParseError("zero quaternion", line);
    return {t, q};
}

inline void append_pose(std::string& out, const Pose2& p) {
    append_double(out, p.x);
    out += ' ';
    append_double(out, p.y);
    out += ' ';
    append_double(out, p.theta);
}

inline void append_pose(std::string& out, const Pose3& p) {
    for (int i = 0; i < 3; ++i) {
        append_double(out, p.t[i]);
        out += ' ';
    }
    append_double(out, p.q.x());
    out += ' ';
    append_double(out, p.q.y());
    out += ' ';
    append_double(out, p.q.z());
    out += ' ';
    append_double(out, p.q.w());
}

template <RigidPose P>
constexpr std::size_t pose_fields() {
    return std::is_same_v<P, Pose2> ? 3 : 7;
}

template <RigidPose P>
constexpr std::size_t info_fields() {
    constexpr int d = PoseTraits<P>::kDof;
    return d * (d + 1) / 2;
}

}  // namespace io_detail

/// Parses g2o text. Vertex ids are split into (session, frame) with the
/// `# SESSION_OFFSET n` header (default 100000). An edge is odometry when it
/// joins consecutive frames of one session, unless the preceding line is a
/// `# KIND landmark` or `# KIND odometry` tag.
template <RigidPose P>
PoseGraph<P> read_g2o(std::string_view text) {
    using namespace io_detail;
    constexpr std::size_t kPose = pose_fields<P>();
    constexpr std::size_t kInfo = info_fields<P>();
    constexpr int kDof = PoseTraits<P>::kDof;
    const std::string_view vertex_tag = PoseTraits<P>::kVertexTag;
    const std::string_view edge_tag = PoseTraits<P>::kEdgeTag;

    PoseGraph<P> g;
    std::int64_t offset = kDefaultSessionOffset;
    // Kind forced by a preceding "# KIND" tag: 0 none, 1 landmark, 2 odometry.
    int pending_kind = 0;
    for (const auto& [no, line] : lines_of(text)) {
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok[0].front() == '#') {
            if (read_offset_comment(tok, offset, no)) continue;
            if (tok.size() >= 2 && tok[0] == "#" && tok[1] == "KIND") {
                if (tok.size() != 3 || (tok[2] != "landmark" && tok[2] != "odometry"))
                    throw ParseError("KIND expects 'landmark' or 'odometry'", no);
                pending_kind = tok[2] == "landmark" ? 1 : 2;
            } else if (tok.size() >= 2 && tok[0] == "#" && tok[1] == "NODE") {
                if (tok.size() != 3) throw ParseError("NODE expects one id", no);
                g.add_node(decode(parse_int(tok[2], no), offset, no));
            }
            continue;
        }
        if (tok[0] == vertex_tag) {
            if (tok.size() != 2 + kPose) throw ParseError("expected " + std::to_string(kPose + 1) + " fields after " + std::string(vertex_tag), no);
            g.add_node(decode(parse_int(tok[1], no), offset, no), parse_pose(tok, 2, no, static_cast<P*>(nullptr)));
        } else if (tok[0] == edge_tag) {
            if (tok.size() != 3 + kPose + kInfo) throw ParseError("expected " + std::to_string(2 + kPose + kInfo) + " fields after " + std::string(edge_tag), no);
            Edge<P> e;
            e.from = decode(parse_int(tok[1], no), offset, no);
            e.to = decode(parse_int(tok[2], no), offset, no);
            e.z = parse_pose(tok, 3, no, static_cast<P*>(nullptr));
            std::size_t k = 3 + kPose;
            for (int r = 0; r < kDof; ++r) {
                for (int c = r; c < kDof; ++c) {
                    e.info(r, c) = parse_double(tok[k++], no);
                    e.info(c, r) = e.info(r, c);
                }
            }
            const bool consecutive = e.from.session == e.to.session && e.to.frame == e.from.frame + 1;
            if (pending_kind == 0) e.kind = consecutive ? EdgeKind::odometry : EdgeKind::landmark;
            else e.kind = pending_kind == 1 ? EdgeKind::landmark : EdgeKind::odometry;
            pending_kind = 0;
            try {
                g.add_edge(std::move(e));
            } catch (const StructuralError& err) {
                throw StructuralError("line " + std::to_string(no) + ": " + err.what());
            }
        } else {
            throw ParseError("unknown record type '" + std::string(tok[0]) + "'", no);
        }
    }
    return g;
}

/// Serializes a graph: header, vertices ascending by encoded id, then edges in
/// stored order. Every number carries 17 significant digits.
template <RigidPose P>
std::string write_g2o(const PoseGraph<P>& g, std::int64_t offset = kDefaultSessionOffset) {
    using namespace io_detail;
    constexpr int kDof = PoseTraits<P>::kDof;
    std::string out = "# SESSION_OFFSET ";
    append_int(out, offset);
    out += '\n';
    for (const auto& [n, pose] : g.nodes()) {
        if (n.frame < 0 || n.frame >= offset || n.session < 0)
            throw UsageError("node " + to_string(n) + " cannot be encoded with session offset " + std::to_string(offset));
        if (!pose) {
            out += "# NODE ";
            append_int(out, encode(n, offset));
            out += '\n';
            continue;
        }
        out += PoseTraits<P>::kVertexTag;
        out += ' ';
        append_int(out, encode(n, offset));
        out += ' ';
        append_pose(out, *pose);
        out += '\n';
    }
    for (const auto& e : g.edges()) {
        const bool consecutive = e.from.session == e.to.session && e.to.frame == e.from.frame + 1;
        if (e.is_landmark() == consecutive) out += e.is_landmark() ? "# KIND landmark\n" : "# KIND odometry\n";
        out += PoseTraits<P>::kEdgeTag;
        out += ' ';
        append_int(out, encode(e.from, offset));
        out += ' ';
        append_int(out, encode(e.to, offset));
        out += ' ';
        append_pose(out, e.z);
        for (int r = 0; r < kDof; ++r) {
            for (int c = r; c < kDof; ++c) {
                out += ' ';
                append_double(out, e.info(r, c));
            }
        }
        out += '\n';
    }
    return out;
}

/// Parses `EDGE_LABEL <i> <j> <0|1>` lines (1 = incorrect).
inline LabelSidecar read_labels(std::string_view text) {
    using namespace io_detail;
    LabelSidecar labels;
    std::int64_t offset = kDefaultSessionOffset;
    for (const auto& [no, line] : lines_of(text)) {
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok[0].front() == '#') {
            read_offset_comment(tok, offset, no);
            continue;
        }
        if (tok[0] != "EDGE_LABEL") throw ParseError("unknown record type '" + std::string(tok[0]) + "'", no);
        if (tok.size() != 4) throw ParseError("EDGE_LABEL expects 3 fields", no);
        const auto flag = parse_int(tok[3], no);
        if (flag != 0 && flag != 1) throw ParseError("label must be 0 or 1", no);
        labels[{decode(parse_int(tok[1], no), offset, no), decode(parse_int(tok[2], no), offset, no)}] = flag == 1;
    }
    return labels;
}

inline std::string write_labels(const LabelSidecar& labels, std::int64_t offset = kDefaultSessionOffset) {
    using namespace io_detail;
    std::string out = "# SESSION_OFFSET ";
    append_int(out, offset);
    out += '\n';
    for (const auto& [key, incorrect] : labels) {
        out += "EDGE_LABEL ";
        append_int(out, encode(key.first, offset));
        out += ' ';
        append_int(out, encode(key.second, offset));
        out += incorrect ? " 1\n" : " 0\n";
    }
    return out;
}

/// Label lookup tolerant of edge direction.
inline std::optional<bool> find_label(const LabelSidecar& labels, const NodeId& a, const NodeId& b) {
    if (auto it = labels.find({a, b}); it != labels.end()) return it->second;
    if (auto it = labels.find({b, a}); it != labels.end()) return it->second;
    return std::nullopt;
}

/// Vertices-only graph, used to store trajectories and ground truth.
template <RigidPose P>
PoseGraph<P> graph_from_poses(const std::map<NodeId, P>& poses) {
    PoseGraph<P> g;
    for (const auto& [n, p] : poses) g.add_node(n, p);
    return g;
}

/// Node poses of a graph; throws ParseError if a node has no pose.
template <RigidPose P>
std::map<NodeId, P> poses_of(const PoseGraph<P>& g) {
    std::map<NodeId, P> out;
    for (const auto& [n, p] : g.nodes()) {
        if (!p) throw ParseError("node " + to_string(n) + " has no pose");
        out.emplace(n, *p);
    }
    return out;
}

/// Tab-separated `node_id x y [z]` dump for plotting.
template <RigidPose P>
std::string write_trajectory_tsv(const std::map<NodeId, P>& poses, std::int64_t offset = kDefaultSessionOffset) {
    using namespace io_detail;
    std::string out;
    for (const auto& [n, p] : poses) {
        append_int(out, encode(n, offset));
        const auto t = p.translation();
        for (int i = 0; i < t.size(); ++i) {
            out += '\t';
            append_double(out, t[i]);
        }
        out += '\n';
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace mcslam
