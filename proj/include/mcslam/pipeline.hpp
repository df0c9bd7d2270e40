#pragma once

#include <chrono>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcslam/errors.hpp"
#include "mcslam/eval.hpp"
#include "mcslam/graph_io.hpp"
#include "mcslam/multicut.hpp"
#include "mcslam/optimizer.hpp"
#include "mcslam/pcm.hpp"
#include "mcslam/synth.hpp"

namespace mcslam {

struct PipelineConfig {
    bool pcm = true;
    bool gc = true;
    int dim = 2;
    PcmConfig pcm_config;
    SupportConfig support;
    LmConfig lm;
    SynthConfig synth;
    std::optional<std::filesystem::path> input;
    std::optional<std::filesystem::path> labels;
    std::optional<std::filesystem::path> ground_truth;
    std::optional<std::filesystem::path> output;
    std::optional<std::filesystem::path> report;
    std::vector<std::uint64_t> seeds{1};
    bool timing = true;  ///< false writes "-" for wall_ms so reports are reproducible byte for byte
};

/// Error raised inside a pipeline stage; keeps the exit code of the cause.
class StageError : public Error {
public:
    StageError(const std::string& stage, const Error& cause)
        : Error("stage '" + stage + "': " + cause.what()), code_(cause.exit_code()) {}
    int exit_code() const noexcept override { return code_; }

private:
    int code_;
};

namespace cfg_detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T number(std::string_view key, std::string_view v) {
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw UsageError("invalid value '" + std::string(v) + "' for " + std::string(key));
    return out;
}

inline bool boolean(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw UsageError("invalid boolean '" + std::string(v) + "' for " + std::string(key));
}

inline std::vector<std::uint64_t> seed_range(std::string_view v) {
    const auto dots = v.find("..");
    if (dots == std::string_view::npos) return {number<std::uint64_t>("seeds", v)};
    const auto lo = number<std::uint64_t>("seeds", v.substr(0, dots));
    const auto hi = number<std::uint64_t>("seeds", v.substr(dots + 2));
    if (hi < lo) throw UsageError("empty seed range '" + std::string(v) + "'");
    std::vector<std::uint64_t> out;
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    return out;
}

}  // namespace cfg_detail

/// Applies one `key = value` setting. Keys use underscores; dashes are accepted too.
/// On error `out` is left unchanged.
inline void apply_setting(PipelineConfig& out, std::string key, std::string_view value) {
    using namespace cfg_detail;
    PipelineConfig cfg = out;
    for (auto& c : key)
        if (c == '-') c = '_';
    value = trim(value);
    if (key == "input") cfg.input = std::string(value);
    else if (key == "labels") cfg.labels = std::string(value);
    else if (key == "ground_truth") cfg.ground_truth = std::string(value);
    else if (key == "output") cfg.output = std::string(value);
    else if (key == "report") cfg.report = std::string(value);
    else if (key == "seed") cfg.seeds = {number<std::uint64_t>(key, value)};
    else if (key == "seeds") cfg.seeds = seed_range(value);
    else if (key == "pcm") cfg.pcm = boolean(key, value);
    else if (key == "gc") cfg.gc = boolean(key, value);
    else if (key == "timing") cfg.timing = boolean(key, value);
    else if (key == "dim") {
        cfg.dim = number<int>(key, value);
        if (cfg.dim != 2 && cfg.dim != 3) throw UsageError("dim must be 2 or 3");
    } else if (key == "delta") {
        cfg.support.delta = number<int>(key, value);
        if (cfg.support.delta < 0) throw UsageError("delta must be >= 0");
    } else if (key == "mode") {
        if (value == "landmark-only" || value == "landmark_only") cfg.support.mode = InstanceMode::landmark_only;
        else if (value == "full" || value == "full-graph" || value == "full_graph") cfg.support.mode = InstanceMode::full_graph;
        else throw UsageError("mode must be landmark-only or full");
    } else if (key == "theta_odo") cfg.support.theta_odo = number<double>(key, value);
    else if (key == "gamma_t") cfg.pcm_config.gamma_t = number<double>(key, value);
    else if (key == "gamma_r") cfg.pcm_config.gamma_r = number<double>(key, value);
    else if (key == "exact_clique_limit") cfg.pcm_config.exact_clique_limit = number<std::size_t>(key, value);
    else if (key == "max_iterations") cfg.lm.max_iterations = number<int>(key, value);
    else if (key == "lambda_init") cfg.lm.lambda_init = number<double>(key, value);
    else if (key == "lambda_factor") cfg.lm.lambda_factor = number<double>(key, value);
    else if (key == "outlier_rate") cfg.synth.outlier_rate = number<double>(key, value);
    else if (key == "frames_per_session") cfg.synth.frames_per_session = number<int>(key, value);
    else if (key == "step_length") cfg.synth.step_length = number<double>(key, value);
    else if (key == "turn_probability") cfg.synth.turn_probability = number<double>(key, value);
    else if (key == "odom_sigma_t") cfg.synth.odom_sigma_t = number<double>(key, value);
    else if (key == "odom_sigma_r") cfg.synth.odom_sigma_r = number<double>(key, value);
    else if (key == "revisit_radius") cfg.synth.revisit_radius = number<double>(key, value);
    else if (key == "min_outlier_distance") cfg.synth.min_outlier_distance = number<double>(key, value);
    else throw UsageError("unknown setting '" + key + "'");

    if (cfg.pcm_config.gamma_t <= 0.0 || cfg.pcm_config.gamma_r <= 0.0)
        throw UsageError("PCM thresholds must be positive");
    if (cfg.lm.max_iterations <= 0 || cfg.lm.lambda_init <= 0.0 || cfg.lm.lambda_factor <= 1.0)
        throw UsageError("LM settings must be positive (lambda_factor > 1)");
    out = std::move(cfg);
}

/// Flat `key = value` lines; `#` starts a comment.
inline void apply_config_text(PipelineConfig& cfg, std::string_view text) {
    std::size_t no = 0, start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++no;
        auto line = text.substr(start, end - start);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = cfg_detail::trim(line);
        if (!line.empty()) {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", no);
            try {
                apply_setting(cfg, std::string(cfg_detail::trim(line.substr(0, eq))), line.substr(eq + 1));
            } catch (const UsageError& e) {
                throw ParseError(e.what(), no);
            }
        }
        if (end == text.size()) break;
        start = end + 1;
    }
}

// ---------------------------------------------------------------------------

template <RigidPose P>
struct VariantResult {
    std::string dataset;
    std::string variant;
    PoseGraph<P> filtered;
    Estimate<P> estimate;
    std::vector<std::pair<NodeId, NodeId>> removed;
    ReportRow row;
};

inline std::string variant_name(bool pcm, bool gc) {
    if (pcm && gc) return "PCM+GC";
    if (pcm) return "PCM";
    if (gc) return "GC";
    return "NONE";
}

inline std::string variant_slug(const std::string& variant) {
    std::string s;
    for (char c : variant) s += c == '+' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

template <class F>
auto run_stage(const std::string& name, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e);
    }
}

template <RigidPose P>
Estimate<P> optimize_or_throw(const PoseGraph<P>& g, const LmConfig& lm) {
    auto res = optimize(g, initial_guess(g), lm);
    if (res.status == OptimizeStatus::numerical_failure) throw NumericalError(res.message);
    return std::move(res.estimate);
}

/// Runs the outlier-rejection / graph-cut / optimization / evaluation chain on
/// one dataset. The configured variant is evaluated, and when the graph cut is
/// enabled the same chain without it is evaluated as the baseline. The PCM
/// stage runs once and feeds both.
template <RigidPose P>
std::vector<VariantResult<P>> run_dataset(const std::string& dataset, const PoseGraph<P>& graph,
                                          const std::optional<LabelSidecar>& labels,
                                          const std::optional<Estimate<P>>& ground_truth, const PipelineConfig& cfg) {
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    const PoseGraph<P> after_pcm =
        cfg.pcm ? run_stage("pcm", [&] { return pcm_filter(graph, cfg.pcm_config); }) : graph;
    const double pcm_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

    std::vector<bool> gc_options;
    if (cfg.gc) gc_options.push_back(false);
    gc_options.push_back(cfg.gc);

    std::vector<VariantResult<P>> out;
    for (bool use_gc : gc_options) {
        const auto t1 = Clock::now();
        VariantResult<P> r;
        r.dataset = dataset;
        r.variant = variant_name(cfg.pcm, use_gc);
        r.filtered = use_gc ? run_stage("gc", [&] { return graph_cut_filter(after_pcm, cfg.support); }) : after_pcm;
        r.estimate = run_stage("optimize", [&] { return optimize_or_throw(r.filtered, cfg.lm); });
        const double ms = pcm_ms + std::chrono::duration<double, std::milli>(Clock::now() - t1).count();
        r.removed = removed_landmark_edges(graph, r.filtered);
        r.row.dataset = dataset;
        r.row.variant = r.variant;
        run_stage("eval", [&] {
            if (ground_truth) r.row.rmse = align_and_rmse(r.estimate, *ground_truth).rmse;
            if (labels) r.row.edges = edge_metrics(r.removed, *labels);
            return 0;
        });
        if (cfg.timing) r.row.wall_ms = ms;
        out.push_back(std::move(r));
    }
    return out;
}

/// Pseudo ground truth: the graph optimized without its labeled-incorrect edges.
template <RigidPose P>
Estimate<P> pseudo_ground_truth(const PoseGraph<P>& g, const LabelSidecar& labels, const LmConfig& lm) {
    const auto clean = g.filtered([&](const Edge<P>& e) {
        return e.is_odometry() || !find_label(labels, e.from, e.to).value_or(false);
    });
    return optimize_or_throw(clean, lm);
}

template <RigidPose P>
void write_variant_outputs(const std::filesystem::path& dir, const VariantResult<P>& r) {
    PoseGraph<P> g = r.filtered;
    for (const auto& [n, p] : r.estimate.poses) g.add_node(n, p);
    const std::string stem = r.dataset + "_" + variant_slug(r.variant);
    write_file(dir / (stem + ".g2o"), write_g2o(g));
    write_file(dir / (stem + ".traj.tsv"), write_trajectory_tsv(r.estimate.poses));
}

/// Full pipeline: synthetic datasets per seed, or the input graph when given.
/// Writes per-variant graphs, trajectory dumps and the report when an output
/// directory / report path is configured.
template <RigidPose P>
std::vector<VariantResult<P>> run_pipeline(const PipelineConfig& cfg) {
    std::vector<VariantResult<P>> all;
    auto emit = [&](std::vector<VariantResult<P>> rs) {
        for (auto& r : rs) {
            if (cfg.output) write_variant_outputs(*cfg.output, r);
            all.push_back(std::move(r));
        }
    };
    if (cfg.input) {
        const auto graph = run_stage("ingest", [&] { return read_g2o<P>(read_file(*cfg.input)); });
        std::optional<LabelSidecar> labels;
        if (cfg.labels) labels = run_stage("ingest", [&] { return read_labels(read_file(*cfg.labels)); });
        std::optional<Estimate<P>> gt;
        if (cfg.ground_truth) {
            gt = run_stage("ingest", [&] {
                Estimate<P> e;
                e.poses = poses_of(read_g2o<P>(read_file(*cfg.ground_truth)));
                return e;
            });
        } else if (labels) {
            gt = run_stage("ground-truth", [&] { return pseudo_ground_truth(graph, *labels, cfg.lm); });
        }
        emit(run_dataset(cfg.input->stem().string(), graph, labels, gt, cfg));
    } else {
        for (auto seed : cfg.seeds) {
            SynthConfig sc = cfg.synth;
            sc.seed = seed;
            const auto ds = run_stage("synth", [&] { return generate_multisession<P>(sc); });
            const std::string name = "synth_s" + std::to_string(seed);
            if (cfg.output) {
                write_file(*cfg.output / (name + "_input.g2o"), write_g2o(ds.graph));
                write_file(*cfg.output / (name + "_labels.txt"), write_labels(ds.labels));
                write_file(*cfg.output / (name + "_gt.g2o"), write_g2o(graph_from_poses(ds.ground_truth.poses)));
            }
            emit(run_dataset(name, ds.graph, std::optional<LabelSidecar>(ds.labels),
                             std::optional<Estimate<P>>(ds.ground_truth), cfg));
        }
    }
    std::optional<std::filesystem::path> report = cfg.report;
    if (!report && cfg.output) report = *cfg.output / "report.tsv";
    if (report) {
        std::string text = report_header();
        for (const auto& r : all) text += format_report_row(r.row);
        write_file(*report, text);
    }
    return all;
}

}  // namespace mcslam
