// Command-line front end: every pipeline stage runs standalone on g2o files,
// and `run` chains them end to end.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mcslam/mcslam.hpp"

namespace fs = std::filesystem;
using namespace mcslam;

namespace {

struct Flags {
    std::optional<std::string> config;
    std::map<std::string, std::optional<std::string>> values;
    bool no_pcm = false;
    bool no_gc = false;
    bool no_timing = false;
    std::optional<int> factor;
    std::optional<std::string> original;
};

void add_flags(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "flat key = value configuration file");
    const std::pair<const char*, const char*> opts[] = {
        {"input", "input g2o graph"},
        {"labels", "edge label sidecar"},
        {"ground-truth", "ground-truth g2o (vertices)"},
        {"output", "output directory"},
        {"seed", "random seed"},
        {"seeds", "seed range N..M"},
        {"delta", "support window radius in frames"},
        {"mode", "multicut instance: landmark-only or full"},
        {"theta-odo", "odometry edge cost in full mode"},
        {"gamma-t", "PCM translation threshold [m]"},
        {"gamma-r", "PCM rotation threshold [rad]"},
        {"outlier-rate", "fraction of incorrect landmark edges"},
        {"dim", "2 or 3"},
        {"report", "report TSV path"},
    };
    for (const auto& [name, help] : opts) sub->add_option(std::string("--") + name, f.values[name], help);
    sub->add_flag("--no-pcm", f.no_pcm, "disable pairwise-consistency rejection");
    sub->add_flag("--no-gc", f.no_gc, "disable the multicut graph cut");
    sub->add_flag("--no-timing", f.no_timing, "write '-' instead of wall_ms");
}

PipelineConfig build_config(const Flags& f) {
    PipelineConfig cfg;
    if (f.config) apply_config_text(cfg, read_file(*f.config));
    for (const auto& [key, value] : f.values)
        if (value) apply_setting(cfg, key, *value);
    if (f.no_pcm) cfg.pcm = false;
    if (f.no_gc) cfg.gc = false;
    if (f.no_timing) cfg.timing = false;
    return cfg;
}

const fs::path& require(const std::optional<fs::path>& p, const char* flag) {
    if (!p) throw UsageError(std::string("missing required flag --") + flag);
    return *p;
}

/// Dimension of the input file when it has records, otherwise the configured one.
int input_dim(const PipelineConfig& cfg) {
    if (!cfg.input) return cfg.dim;
    const int d = detect_dimension(read_file(*cfg.input));
    return d == 0 ? cfg.dim : d;
}

template <RigidPose P>
PoseGraph<P> load_input(const PipelineConfig& cfg) {
    return read_g2o<P>(read_file(require(cfg.input, "input")));
}

template <RigidPose P>
int cmd_synth(const PipelineConfig& cfg) {
    SynthConfig sc = cfg.synth;
    sc.seed = cfg.seeds.front();
    const auto ds = generate_multisession<P>(sc);
    const auto& dir = require(cfg.output, "output");
    write_file(dir / "graph.g2o", write_g2o(ds.graph));
    write_file(dir / "labels.txt", write_labels(ds.labels));
    write_file(dir / "gt.g2o", write_g2o(graph_from_poses(ds.ground_truth.poses)));
    std::size_t incorrect = 0;
    for (const auto& [_, bad] : ds.labels) incorrect += bad ? 1 : 0;
    std::cout << "nodes " << ds.graph.num_nodes() << "  landmark edges " << ds.graph.num_landmark_edges()
              << "  incorrect " << incorrect << '\n';
    return 0;
}

template <RigidPose P>
int cmd_inject(const PipelineConfig& cfg) {
    auto g = load_input<P>(cfg);
    Estimate<P> gt;
    gt.poses = poses_of(read_g2o<P>(read_file(require(cfg.ground_truth, "ground-truth"))));
    LabelSidecar labels;
    if (cfg.labels) labels = read_labels(read_file(*cfg.labels));
    for (const auto& e : g.edges())
        if (e.is_landmark() && !find_label(labels, e.from, e.to)) labels[{e.from, e.to}] = false;
    const auto added =
        inject_outliers(g, gt, cfg.synth.outlier_rate, cfg.seeds.front(), cfg.synth.min_outlier_distance);
    labels.insert(added.begin(), added.end());
    const auto& dir = require(cfg.output, "output");
    write_file(dir / "graph.g2o", write_g2o(g));
    write_file(dir / "labels.txt", write_labels(labels));
    std::cout << "added " << added.size() << " incorrect edges\n";
    return 0;
}

template <RigidPose P>
int cmd_decimate(const PipelineConfig& cfg, int factor) {
    const auto g = load_input<P>(cfg);
    const auto d = decimate(g, factor);
    const auto& dir = require(cfg.output, "output");
    write_file(dir / "graph.g2o", write_g2o(d.graph));
    if (cfg.labels) {
        LabelSidecar out;
        for (const auto& [key, bad] : read_labels(read_file(*cfg.labels))) {
            auto a = d.anchors.find(key.first), b = d.anchors.find(key.second);
            if (a != d.anchors.end() && b != d.anchors.end()) out[{a->second, b->second}] = bad;
        }
        write_file(dir / "labels.txt", write_labels(out));
    }
    std::cout << "nodes " << d.graph.num_nodes() << "  edges " << d.graph.num_edges() << '\n';
    return 0;
}

template <RigidPose P>
int cmd_pcm(const PipelineConfig& cfg) {
    const auto g = load_input<P>(cfg);
    const auto out = pcm_filter(g, cfg.pcm_config);
    write_file(require(cfg.output, "output") / "pcm.g2o", write_g2o(out));
    std::cout << "kept " << out.num_landmark_edges() << " of " << g.num_landmark_edges() << " landmark edges\n";
    return 0;
}

template <RigidPose P>
int cmd_gc(const PipelineConfig& cfg) {
    const auto g = load_input<P>(cfg);
    std::vector<std::size_t> removed;
    const auto out = graph_cut_filter(g, cfg.support, &removed);
    write_file(require(cfg.output, "output") / "gc.g2o", write_g2o(out));
    std::cout << "cut " << removed.size() << " of " << g.num_landmark_edges() << " landmark edges\n";
    return 0;
}

template <RigidPose P>
int cmd_optimize(const PipelineConfig& cfg) {
    auto g = load_input<P>(cfg);
    const auto init = initial_guess(g);
    for (const auto& w : init.warnings) std::cerr << "warning: " << w << '\n';
    const auto res = optimize(g, init, cfg.lm);
    for (const auto& [n, p] : res.estimate.poses) g.add_node(n, p);
    const auto& dir = require(cfg.output, "output");
    write_file(dir / "optimized.g2o", write_g2o(g));
    write_file(dir / "trajectory.tsv", write_trajectory_tsv(res.estimate.poses));
    std::cout << "error " << res.error_history.front() << " -> " << res.error_history.back() << " in "
              << res.iterations << " iterations\n";
    if (res.status == OptimizeStatus::numerical_failure) throw NumericalError(res.message);
    return 0;
}

template <RigidPose P>
int cmd_run(const PipelineConfig& cfg) {
    const auto results = run_pipeline<P>(cfg);
    std::cout << report_header();
    for (const auto& r : results) std::cout << format_report_row(r.row);
    return 0;
}

template <RigidPose P>
int cmd_eval(const PipelineConfig& cfg, const std::optional<std::string>& original) {
    const auto est = load_input<P>(cfg);
    ReportRow row;
    row.dataset = cfg.input->stem().string();
    row.variant = "eval";
    if (cfg.ground_truth) {
        row.rmse = align_and_rmse(poses_of(est), poses_of(read_g2o<P>(read_file(*cfg.ground_truth)))).rmse;
    }
    if (cfg.labels) {
        const auto labels = read_labels(read_file(*cfg.labels));
        if (!original) throw UsageError("--labels needs --original to know which edges were removed");
        row.edges = edge_metrics(removed_landmark_edges(read_g2o<P>(read_file(*original)), est), labels);
    }
    const std::string text = report_header() + format_report_row(row);
    if (cfg.report) write_file(*cfg.report, text);
    std::cout << text;
    return 0;
}

template <RigidPose P>
int dispatch(const std::string& cmd, const PipelineConfig& cfg, const Flags& f) {
    if (cmd == "synth") return cmd_synth<P>(cfg);
    if (cmd == "inject") return cmd_inject<P>(cfg);
    if (cmd == "decimate") {
        if (!f.factor) throw UsageError("missing required flag --factor");
        return cmd_decimate<P>(cfg, *f.factor);
    }
    if (cmd == "pcm") return cmd_pcm<P>(cfg);
    if (cmd == "gc") return cmd_gc<P>(cfg);
    if (cmd == "optimize") return cmd_optimize<P>(cfg);
    if (cmd == "run") return cmd_run<P>(cfg);
    if (cmd == "eval") return cmd_eval<P>(cfg, f.original);
    throw UsageError("unknown subcommand " + cmd);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-session pose-graph back end with consistency and multicut outlier rejection"};
    app.require_subcommand(1);
    Flags flags;
    const std::pair<const char*, const char*> subs[] = {
        {"synth", "generate a labeled two-session dataset"},
        {"inject", "add incorrect landmark edges to a graph"},
        {"decimate", "keep every k-th frame"},
        {"pcm", "pairwise-consistency outlier rejection"},
        {"gc", "support-weighted minimum-cost multicut"},
        {"optimize", "Levenberg-Marquardt pose-graph optimization"},
        {"run", "full pipeline with evaluation"},
        {"eval", "score an estimate against ground truth"},
    };
    for (const auto& [name, help] : subs) {
        auto* sub = app.add_subcommand(name, help);
        add_flags(sub, flags);
        if (std::string(name) == "decimate") sub->add_option("--factor", flags.factor, "keep frames with frame % k == 0");
        if (std::string(name) == "eval")
            sub->add_option("--original", flags.original, "graph before filtering, for edge metrics");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        const PipelineConfig cfg = build_config(flags);
        return input_dim(cfg) == 3 ? dispatch<Pose3>(cmd, cfg, flags) : dispatch<Pose2>(cmd, cfg, flags);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
