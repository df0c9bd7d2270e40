#include <gtest/gtest.h>

#include <functional>
#include <numeric>

#include "test_util.hpp"

using namespace mcslam;

namespace {

using Triples = std::vector<std::tuple<std::size_t, std::size_t, double>>;

WeightedGraph random_signed_graph(std::mt19937_64& rng, std::size_t n, double density = 0.5) {
    std::bernoulli_distribution edge(density), sign(0.5);
    Triples es;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (edge(rng)) es.emplace_back(i, j, sign(rng) ? 1.0 : -1.0);
    return WeightedGraph::from_costs(n, es);
}

struct Oracle {
    double objective = 0.0;
    std::vector<std::size_t> labels;
    std::size_t partitions = 0;
};

// Independent partition enumeration: vertex i joins an existing block or opens
// a new one. Ties as documented: fewest blocks, then smallest labelling.
Oracle exhaustive(const WeightedGraph& wg) {
    const std::size_t n = wg.num_vertices();
    Oracle best;
    bool have = false;
    std::vector<std::size_t> labels(n);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t blocks) {
        if (i == n) {
            ++best.partitions;
            double value = 0.0;
            for (const auto& e : wg.edges) value += labels[e.u] != labels[e.v] ? e.cost : 0.0;
            const std::size_t best_blocks =
                best.labels.empty() ? 0 : *std::max_element(best.labels.begin(), best.labels.end()) + 1;
            const bool better = !have || value < best.objective - 1e-12 ||
                                (std::abs(value - best.objective) <= 1e-12 &&
                                 (blocks < best_blocks || (blocks == best_blocks && labels < best.labels)));
            if (better) {
                best.objective = value;
                best.labels = labels;
                have = true;
            }
            return;
        }
        for (std::size_t b = 0; b <= blocks; ++b) {
            labels[i] = b;
            rec(i + 1, std::max(blocks, b + 1));
        }
    };
    rec(0, 0);
    return best;
}

bool feasible_oracle(const WeightedGraph& wg, const MulticutLabeling& y) {
    // Components of uncut edges by repeated relaxation; a cut edge inside one is infeasible.
    std::vector<std::size_t> comp(wg.num_vertices());
    std::iota(comp.begin(), comp.end(), 0);
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t k = 0; k < wg.num_edges(); ++k) {
            if (y[k]) continue;
            auto& a = comp[wg.edges[k].u];
            auto& b = comp[wg.edges[k].v];
            if (a != b) {
                a = b = std::min(a, b);
                changed = true;
            }
        }
    }
    for (std::size_t k = 0; k < wg.num_edges(); ++k)
        if (y[k] && comp[wg.edges[k].u] == comp[wg.edges[k].v]) return false;
    return true;
}

PoseGraph2 landmark_graph(const std::vector<std::pair<NodeId, NodeId>>& pairs) {
    PoseGraph2 g;
    for (const auto& [a, b] : pairs) g.add_edge(a, b, Pose2(), EdgeKind::landmark);
    return g;
}

// Support count by direct scan over other landmark edges.
std::size_t support_oracle(const PoseGraph2& g, const Edge<Pose2>& e, int delta) {
    std::set<std::pair<NodeId, NodeId>> found;
    auto near = [&](const NodeId& a, const NodeId& b) {
        return a.session == b.session && std::abs(a.frame - b.frame) <= delta;
    };
    for (const auto& o : g.edges()) {
        if (!o.is_landmark()) continue;
        const auto key = std::minmax(o.from, o.to);
        if (key == std::minmax(e.from, e.to)) continue;
        if ((near(o.from, e.from) && near(o.to, e.to)) || (near(o.to, e.from) && near(o.from, e.to)))
            found.insert(key);
    }
    return found.size();
}

}  // namespace

TEST(Support, BoundPerDelta) {
    EXPECT_EQ(max_support_candidates(1), 8U);
    EXPECT_EQ(max_support_candidates(2), 24U);
    EXPECT_EQ(max_support_candidates(3), 48U);
    EXPECT_EQ(max_support_candidates(0), 0U);
}

TEST(Support, NeighbouringEdgesSupportEachOther) {
    const auto g = landmark_graph({{NodeId{0, 10}, NodeId{1, 55}}, {NodeId{0, 11}, NodeId{1, 56}}, {NodeId{0, 20}, NodeId{1, 80}}});
    const auto w = compute_support_weights(g, SupportConfig{});
    EXPECT_EQ(w.at(0), 1.0);
    EXPECT_EQ(w.at(1), 1.0);
    EXPECT_EQ(w.at(2), -1.0);
}

TEST(Support, SwappedEndpointsMatch) {
    const auto g = landmark_graph({{NodeId{0, 10}, NodeId{1, 55}}, {NodeId{1, 56}, NodeId{0, 11}}});
    const auto w = compute_support_weights(g, SupportConfig{});
    EXPECT_EQ(w.at(0), 1.0);
    EXPECT_EQ(w.at(1), 1.0);
}

TEST(Support, FullWindowSaturatesTheBound) {
    for (int delta = 1; delta <= 3; ++delta) {
        std::vector<std::pair<NodeId, NodeId>> pairs;
        for (int a = -delta; a <= delta; ++a)
            for (int b = -delta; b <= delta; ++b) pairs.push_back({NodeId{0, 50 + a}, NodeId{1, 50 + b}});
        const auto g = landmark_graph(pairs);
        SupportConfig cfg;
        cfg.delta = delta;
        const auto counts = support_counts(g, cfg);
        const std::size_t centre = static_cast<std::size_t>((2 * delta + 1) * delta + delta);
        EXPECT_EQ(counts.at(centre), max_support_candidates(delta));
    }
}

TEST(Support, RandomGraphsMatchOracleAndRespectBound) {
    std::mt19937_64 rng(17);
    for (int delta = 1; delta <= 3; ++delta) {
        for (int t = 0; t < 20; ++t) {
            std::uniform_int_distribution<int> f(0, 25), s(0, 2);
            PoseGraph2 g;
            for (int k = 0; k < 300; ++k) {
                const NodeId a{s(rng), f(rng)}, b{s(rng), f(rng)};
                if (a != b) g.add_edge(a, b, Pose2(), EdgeKind::landmark);
            }
            SupportConfig cfg;
            cfg.delta = delta;
            const auto counts = support_counts(g, cfg);
            const auto weights = compute_support_weights(g, cfg);
            for (const auto& e : g.edges()) {
                const std::size_t c = counts.at(e.id);
                EXPECT_EQ(c, support_oracle(g, e, delta));
                EXPECT_LE(c, max_support_candidates(delta));
                EXPECT_EQ(weights.at(e.id), c > 0 ? 1.0 : -1.0);
            }
        }
    }
}

TEST(Support, RelationIsSymmetric) {
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<int> f(0, 15);
    PoseGraph2 g;
    for (int k = 0; k < 60; ++k) g.add_edge(NodeId{0, f(rng)}, NodeId{1, f(rng)}, Pose2(), EdgeKind::landmark);
    const auto lm = g.edges();
    for (const auto& a : lm) {
        for (const auto& b : lm) {
            if (std::minmax(a.from, a.to) == std::minmax(b.from, b.to)) continue;
            const auto only = landmark_graph({{a.from, a.to}, {b.from, b.to}});
            const auto c = support_counts(only, SupportConfig{});
            EXPECT_EQ(c.at(0), c.at(1));
        }
    }
}

TEST(Instance, LandmarkOnlyAndFullGraph) {
    auto g = testutil::chain_graph<Pose2>(2, 10);
    g.add_edge(NodeId{0, 1}, NodeId{1, 1}, Pose2(), EdgeKind::landmark);
    g.add_edge(NodeId{0, 2}, NodeId{1, 2}, Pose2(), EdgeKind::landmark);
    g.add_edge(NodeId{0, 8}, NodeId{1, 3}, Pose2(), EdgeKind::landmark);
    const auto lo = build_instance(g, SupportConfig{});
    EXPECT_EQ(lo.num_edges(), 3U);
    EXPECT_EQ(lo.num_vertices(), 6U);
    SupportConfig full;
    full.mode = InstanceMode::full_graph;
    full.theta_odo = 2.5;
    const auto fg = build_instance(g, full);
    EXPECT_EQ(fg.num_edges(), 18U + 3U);
    EXPECT_EQ(fg.num_vertices(), 20U);
    for (const auto& e : fg.edges)
        if (e.origin == EdgeOrigin::odometry) {
            EXPECT_EQ(e.cost, 2.5);
        }
}

TEST(Instance, ParallelEdgesMergeBySum) {
    const auto g = landmark_graph({{NodeId{0, 10}, NodeId{1, 55}}, {NodeId{0, 10}, NodeId{1, 55}}, {NodeId{0, 11}, NodeId{1, 56}}});
    const auto wg = build_instance(g, SupportConfig{});
    ASSERT_EQ(wg.num_edges(), 2U);
    EXPECT_EQ(wg.edges[0].cost, 2.0);
    EXPECT_EQ(wg.edges[0].members, (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(WeightedGraph::from_costs(2, {{0, 1, 1.0}, {1, 0, 1.0}}).edges.at(0).cost, 2.0);
}

TEST(Gaec, BasicCases) {
    const auto neg = WeightedGraph::from_costs(4, {{0, 1, -1}, {1, 2, -1}, {2, 3, -1}, {0, 3, -1}});
    EXPECT_EQ(solve_gaec(neg), Decomposition::singletons(4));
    const auto path = WeightedGraph::from_costs(5, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {3, 4, 1}});
    EXPECT_EQ(solve_gaec(path), Decomposition::joined(5));
    const auto tri = WeightedGraph::from_costs(3, {{0, 1, 1}, {1, 2, 1}, {0, 2, -1}});
    // After 0-1 merges, the merged edge to 2 has cost 1 - 1 = 0 and is not contracted.
    const auto d = solve_gaec(tri);
    EXPECT_EQ(d, Decomposition::canonical({0, 0, 1}));
    EXPECT_EQ(objective(tri, d), 0.0);
    EXPECT_EQ(exhaustive(tri).objective, 0.0);
}

TEST(Gaec, PositiveComponentsMatchUnionFind) {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 30)(rng);
        std::vector<std::size_t> group(n);
        const std::size_t groups = std::uniform_int_distribution<std::size_t>(1, n)(rng);
        for (auto& g : group) g = std::uniform_int_distribution<std::size_t>(0, groups - 1)(rng);
        Triples es;
        std::bernoulli_distribution coin(0.4);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (coin(rng)) es.emplace_back(i, j, group[i] == group[j] ? 1.0 : -1.0);
        const auto wg = WeightedGraph::from_costs(n, es);

        std::vector<std::size_t> parent(n);
        std::iota(parent.begin(), parent.end(), 0);
        std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
            return parent[x] == x ? x : parent[x] = find(parent[x]);
        };
        for (const auto& e : wg.edges)
            if (e.cost > 0) parent[find(e.u)] = find(e.v);
        std::vector<std::size_t> roots(n);
        for (std::size_t i = 0; i < n; ++i) roots[i] = find(i);
        EXPECT_EQ(solve_gaec(wg), Decomposition::canonical(roots));
    }
}

TEST(Gaec, DeterministicTieBreak) {
    const auto wg = WeightedGraph::from_costs(4, {{2, 3, 1}, {0, 1, 1}, {1, 2, -3}});
    EXPECT_EQ(solve_gaec(wg), Decomposition::canonical({0, 0, 1, 1}));
    EXPECT_EQ(solve_gaec(wg), solve_gaec(wg));
}

TEST(Refine, OptimalInputUnchangedAndNeverWorse) {
    std::mt19937_64 rng(41);
    for (int t = 0; t < 200; ++t) {
        const auto wg = random_signed_graph(rng, std::uniform_int_distribution<std::size_t>(2, 9)(rng));
        const auto exact = solve_exact(wg);
        EXPECT_EQ(objective(wg, refine_klj(wg, exact)), objective(wg, exact));
        std::vector<std::size_t> raw(wg.num_vertices());
        for (auto& c : raw) c = std::uniform_int_distribution<std::size_t>(0, 3)(rng);
        const auto start = Decomposition::canonical(raw);
        const auto refined = refine_klj(wg, start);
        EXPECT_LE(objective(wg, refined), objective(wg, start) + 1e-12);
        EXPECT_LE(objective(wg, refined), 1e-12);
        EXPECT_TRUE(validate(wg, labeling_of(wg, refined)));
    }
}

TEST(Refine, MatchesExactOnMostSmallInstances) {
    std::mt19937_64 rng(2024);
    int matches = 0;
    for (int t = 0; t < 100; ++t) {
        const auto wg = random_signed_graph(rng, std::uniform_int_distribution<std::size_t>(2, 8)(rng));
        const double heuristic = objective(wg, solve_multicut(wg));
        const double best = exhaustive(wg).objective;
        EXPECT_LE(heuristic, 1e-12);
        EXPECT_GE(heuristic, best - 1e-12);
        matches += std::abs(heuristic - best) <= 1e-12;
    }
    EXPECT_GE(matches, 90);
}

TEST(Exact, SmallCases) {
    const auto neg = WeightedGraph::from_costs(2, {{0, 1, -1}});
    EXPECT_EQ(solve_exact(neg).num_components(), 2U);
    EXPECT_EQ(objective(neg, solve_exact(neg)), -1.0);
    const auto pos = WeightedGraph::from_costs(2, {{0, 1, 1}});
    EXPECT_EQ(solve_exact(pos).num_components(), 1U);
    EXPECT_EQ(objective(pos, solve_exact(pos)), 0.0);
    EXPECT_THROW(solve_exact(WeightedGraph::from_costs(11, {})), CapacityError);
    EXPECT_EQ(solve_exact(WeightedGraph::from_costs(0, {})).component.size(), 0U);
}

TEST(Exact, BellNumbers) {
    const std::size_t bell[] = {1, 1, 2, 5, 15, 52, 203, 877, 4140, 21147};
    for (std::size_t n = 0; n < 10; ++n) {
        std::size_t seen = 0;
        EXPECT_EQ(for_each_partition(n, [&](const std::vector<std::size_t>&) { ++seen; }), bell[n]);
        EXPECT_EQ(seen, bell[n]);
    }
    EXPECT_EQ(solve_exact_detailed(WeightedGraph::from_costs(8, {})).partitions_enumerated, 4140U);
    EXPECT_EQ(exhaustive(WeightedGraph::from_costs(8, {})).partitions, 4140U);
}

TEST(Exact, MatchesIndependentEnumeration) {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 100; ++t) {
        const auto wg = random_signed_graph(rng, std::uniform_int_distribution<std::size_t>(1, 8)(rng));
        const auto sol = solve_exact_detailed(wg);
        const auto oracle = exhaustive(wg);
        EXPECT_EQ(sol.objective, oracle.objective);
        EXPECT_EQ(sol.decomposition.component, oracle.labels);
        EXPECT_EQ(objective(wg, labeling_of(wg, sol.decomposition)), sol.objective);
    }
}

TEST(Exact, OptimumBelowEveryFeasibleLabeling) {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 30; ++t) {
        const auto wg = random_signed_graph(rng, std::uniform_int_distribution<std::size_t>(2, 6)(rng));
        const double best = objective(wg, labeling_of(wg, solve_exact(wg)));
        const std::size_t m = wg.num_edges();
        for (std::uint32_t mask = 0; mask < (1U << m); ++mask) {
            MulticutLabeling y(m);
            for (std::size_t k = 0; k < m; ++k) y[k] = mask >> k & 1U;
            const bool ok = feasible_oracle(wg, y);
            ASSERT_EQ(validate(wg, y), ok);
            if (ok) {
                EXPECT_LE(best, objective(wg, y) + 1e-12);
            }
        }
    }
}

TEST(Validate, CycleInequalities) {
    const auto tri = WeightedGraph::from_costs(3, {{0, 1, 1}, {1, 2, 1}, {0, 2, -1}});
    EXPECT_TRUE(validate(tri, MulticutLabeling{0, 0, 0}));
    EXPECT_FALSE(validate(tri, MulticutLabeling{0, 0, 1}));
    EXPECT_TRUE(validate(tri, MulticutLabeling{0, 1, 1}));
    EXPECT_FALSE(validate(tri, MulticutLabeling{0, 1}));
}

TEST(Validate, LabelingsOfDecompositionsAreValid) {
    std::mt19937_64 rng(53);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 25)(rng);
        const auto wg = random_signed_graph(rng, n, 0.3);
        std::vector<std::size_t> raw(n);
        const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n)(rng);
        for (auto& c : raw) c = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
        EXPECT_TRUE(validate(wg, labeling_of(wg, Decomposition::canonical(raw))));
    }
}

TEST(Validate, SingleCutEdgeOnCycleIsInvalid) {
    std::mt19937_64 rng(59);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 20)(rng);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t len = std::uniform_int_distribution<std::size_t>(3, n)(rng);
        Triples es;
        for (std::size_t i = 0; i < len; ++i) es.emplace_back(order[i], order[(i + 1) % len], 1.0);
        // Chords and extra edges do not change the verdict.
        std::bernoulli_distribution coin(0.2);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (coin(rng)) es.emplace_back(i, j, -1.0);
        const auto wg = WeightedGraph::from_costs(n, es);
        MulticutLabeling y(wg.num_edges(), 0);
        const std::size_t pos = std::uniform_int_distribution<std::size_t>(0, len - 1)(rng);
        const auto [u, v] = std::minmax(order[pos], order[(pos + 1) % len]);
        for (std::size_t k = 0; k < wg.num_edges(); ++k)
            if (std::pair<std::size_t, std::size_t>(std::minmax(wg.edges[k].u, wg.edges[k].v)) == std::pair{u, v}) y[k] = 1;
        EXPECT_FALSE(validate(wg, y));
    }
}

TEST(Objective, ValuesAndFeasibility) {
    const auto wg = WeightedGraph::from_costs(3, {{0, 1, -1}, {1, 2, 1}});
    EXPECT_EQ(objective(wg, MulticutLabeling{0, 0}), 0.0);
    EXPECT_EQ(objective(wg, MulticutLabeling{1, 0}), -1.0);
    const auto tri = WeightedGraph::from_costs(3, {{0, 1, 1}, {1, 2, 1}, {0, 2, -1}});
    EXPECT_THROW(objective(tri, MulticutLabeling{0, 0, 1}), FeasibilityError);
}

TEST(Decompositions, CanonicalForm) {
    EXPECT_EQ(Decomposition::canonical({7, 3, 7, 9}).component, (std::vector<std::size_t>{0, 1, 0, 2}));
    EXPECT_EQ(Decomposition::canonical({7, 3, 7, 9}).num_components(), 3U);
}

TEST(RejectCutEdges, Cases) {
    auto g = testutil::chain_graph<Pose2>(2, 30);
    g.add_edge(NodeId{0, 10}, NodeId{1, 10}, Pose2(), EdgeKind::landmark);
    g.add_edge(NodeId{0, 11}, NodeId{1, 11}, Pose2(), EdgeKind::landmark);
    const auto lone = g.add_edge(NodeId{0, 25}, NodeId{1, 2}, Pose2(), EdgeKind::landmark);
    const auto wg = build_instance(g, SupportConfig{});

    EXPECT_EQ(write_g2o(reject_cut_edges(g, wg, Decomposition::joined(wg.num_vertices()))), write_g2o(g));

    const auto lone_wg = build_instance(landmark_graph({{NodeId{0, 25}, NodeId{1, 2}}}), SupportConfig{});
    EXPECT_EQ(solve_exact_detailed(lone_wg).objective, -1.0);

    std::vector<std::size_t> removed;
    const auto out = reject_cut_edges(g, wg, solve_exact(wg), &removed);
    EXPECT_EQ(removed, std::vector<std::size_t>{lone});
    EXPECT_EQ(out.num_edges(), g.num_edges() - 1);
    EXPECT_EQ(out.find_edge(lone), nullptr);

    const auto d = Decomposition::singletons(wg.num_vertices());
    std::size_t cut = 0;
    for (auto y : labeling_of(wg, d)) cut += y;
    removed.clear();
    reject_cut_edges(g, wg, d, &removed);
    EXPECT_EQ(removed.size(), cut);
}

TEST(RejectCutEdges, OdometryAlwaysKept) {
    auto g = testutil::chain_graph<Pose2>(2, 10);
    g.add_edge(NodeId{0, 3}, NodeId{1, 3}, Pose2(), EdgeKind::landmark);
    SupportConfig full;
    full.mode = InstanceMode::full_graph;
    full.theta_odo = -1.0;
    const auto wg = build_instance(g, full);
    const auto out = reject_cut_edges(g, wg, Decomposition::singletons(wg.num_vertices()));
    EXPECT_EQ(out.num_edges(), 18U);
}

TEST(GraphCut, RemovesIsolatedOutliersOnSynthData) {
    SynthConfig sc;
    sc.seed = 2;
    const auto ds = generate_multisession<Pose2>(sc);
    std::vector<std::size_t> removed;
    const auto out = graph_cut_filter(ds.graph, SupportConfig{}, &removed);
    std::size_t incorrect = 0, caught = 0;
    for (const auto& e : ds.graph.edges()) {
        if (!e.is_landmark() || !*find_label(ds.labels, e.from, e.to)) continue;
        ++incorrect;
        caught += out.find_edge(e.id) == nullptr;
    }
    EXPECT_GT(incorrect, 0U);
    EXPECT_GE(static_cast<double>(caught), 0.9 * static_cast<double>(incorrect));
}
