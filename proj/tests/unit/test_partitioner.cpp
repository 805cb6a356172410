#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "snnconv/partitioner.hpp"
#include "snnconv/rng.hpp"

using namespace snnconv;

namespace {

NetworkGraph small_graph()
{
    UNetConfig c;
    c.input_size = 16;
    c.base_channels = 2;
    c.meta_layers = 1;
    c.seed = 3;
    return build_unet(c);
}

CoreGraph random_graph(int nodes, double density, std::uint64_t seed)
{
    Rng rng(seed);
    CoreGraph g;
    g.nodes = nodes;
    g.adj.resize(static_cast<std::size_t>(nodes));
    for (int u = 0; u < nodes; ++u) {
        for (int v = u + 1; v < nodes; ++v) {
            if (rng.uniform(0.0, 1.0) < density) {
                g.add_edge(u, v, 1 + static_cast<std::int64_t>(rng.uniform(0.0, 20.0)));
            }
        }
    }
    return g;
}

} // namespace

TEST_CASE("footprint of a 3x3 region counts the receptive field")
{
    LayerConnectivity conn{LayerKind::Conv3x3, {10, 10, 2}, 1};
    CoreRegion reg{0, 0, 0, 0, 2, 3, 1};
    CHECK(footprint(reg, conn) == 4 * 5 * 2);
    conn.kind = LayerKind::Conv3x3Stride2;
    CHECK(footprint(reg, conn) == 5 * 7 * 2);
    const CoreUsage u = region_usage(reg, conn);
    CHECK(u.neurons == 6);
    CHECK(u.synapses == 6 * 9 * 2);
    CHECK(u.out_axons == 6);
}

TEST_CASE("split_layer finds the minimum core count")
{
    const struct {
        TensorShape out;
        LayerConnectivity conn;
    } cases[] = {
            {{30, 30, 4}, {LayerKind::Conv3x3, {32, 32, 4}, 1}},
            {{13, 13, 8}, {LayerKind::Conv3x3Stride2, {28, 28, 4}, 1}},
            {{18, 18, 4}, {LayerKind::Deconv2x2Stride2, {9, 9, 8}, 1}},
            {{14, 14, 2}, {LayerKind::Output1x1, {14, 14, 4}, 0}},
            {{32, 32, 1}, {LayerKind::InputEncoder, {32, 32, 1}, 2}},
    };
    for (const CoreBudget budget : {CoreBudget{}, CoreBudget{256, 1024, 1024, 1 << 14}, CoreBudget{64, 300, 300, 4000}}) {
        for (const auto &c : cases) {
            const LayerTiling t = split_layer(c.out, budget, c.conn);
            CHECK(t.core_count() == oracles::min_cores_exhaustive(c.out, budget, c.conn));
            for (const CoreRegion &reg : tile_regions(c.out, t)) {
                CHECK(fits(region_usage(reg, c.conn), budget));
            }
        }
    }
}

TEST_CASE("split_layer rejects budgets nothing fits")
{
    CoreBudget tiny{1, 1, 1, 1};
    CHECK_THROWS_AS(split_layer({4, 4, 1}, tiny, {LayerKind::Conv3x3, {6, 6, 1}, 1}), std::invalid_argument);
}

TEST_CASE("split_graph tiles every layer within budget")
{
    const NetworkGraph g = small_graph();
    CoreBudget budget{128, 1024, 1024, 1 << 14};
    const Partition p = split_graph(g, budget);
    CHECK(verify_partition(g, p).empty());
    const RouteTable routes = build_routes(g, p);
    for (const CoreUsage &u : core_usage(g, p, routes)) {
        CHECK(fits(u, budget));
    }
    // Threaded split is identical.
    const Partition p4 = split_graph(g, budget, 4);
    REQUIRE(p4.core_count() == p.core_count());
    for (int k = 0; k < p.core_count(); ++k) {
        CHECK(p4.cores[k].y == p.cores[k].y);
        CHECK(p4.cores[k].c == p.cores[k].c);
        CHECK(p4.cores[k].height == p.cores[k].height);
    }
}

TEST_CASE("core graph edge weights equal the axon counts between regions")
{
    const NetworkGraph g = small_graph();
    const Partition p = split_graph(g, CoreBudget{128, 1024, 1024, 1 << 14});
    const CoreGraph cg = build_core_graph(p, build_routes(g, p));
    REQUIRE(cg.nodes == p.core_count());
    for (int u = 0; u < cg.nodes; ++u) {
        for (int v = u + 1; v < cg.nodes; ++v) {
            const CoreRegion &a = p.cores[u];
            const CoreRegion &b = p.cores[v];
            const std::int64_t expected = axon_count(g, a, b) + axon_count(g, b, a);
            CHECK(cg.weight(u, v) == expected);
        }
    }
}

TEST_CASE("allowed imbalance")
{
    CHECK(allowed_imbalance(100, 0.05) == 5);
    bool relaxed = false;
    CHECK(allowed_imbalance(11, 0.05, &relaxed) == 1);
    CHECK(relaxed);
    relaxed = true;
    CHECK(allowed_imbalance(10, 0.05, &relaxed) == 0);
    CHECK_FALSE(relaxed);
}

TEST_CASE("bipartition matches the exhaustive optimum on small graphs")
{
    int optimal = 0;
    const int trials = 60;
    for (int t = 0; t < trials; ++t) {
        const int n = 6 + t % 7;
        const CoreGraph g = random_graph(n, 0.4, 1000 + static_cast<std::uint64_t>(t));
        const Bipartition b = bipartition(g, 0.05, 0);
        const std::int64_t imb = allowed_imbalance(n, 0.05);
        const oracles::Cut best = oracles::exhaustive_bipartition(g, imb);
        CHECK(b.cut == oracles::cut_of(g, b.side));
        CHECK(b.cut >= best.cut);
        const auto ones = std::count(b.side.begin(), b.side.end(), 1);
        CHECK(std::abs(n - 2 * ones) <= imb);
        optimal += b.cut == best.cut ? 1 : 0;
    }
    CHECK(optimal >= trials * 9 / 10);
}

TEST_CASE("bipartition balance holds on larger graphs")
{
    for (int n : {40, 101, 300}) {
        const CoreGraph g = random_graph(n, 6.0 / n, static_cast<std::uint64_t>(n));
        const Bipartition b = bipartition(g, 0.05, 7);
        const auto ones = std::count(b.side.begin(), b.side.end(), 1);
        CHECK(std::abs(n - 2 * ones) <= allowed_imbalance(n, 0.05));
        CHECK(b.cut <= edge_cut(g, naive_split(n)));
        CHECK(std::is_sorted(b.refinement_trace.rbegin(), b.refinement_trace.rend()));
    }
}

TEST_CASE("bipartition is deterministic per seed")
{
    const CoreGraph g = random_graph(80, 0.08, 42);
    const Bipartition a = bipartition(g, 0.05, 3);
    const Bipartition b = bipartition(g, 0.05, 3);
    CHECK(a.side == b.side);
    CHECK(a.cut == b.cut);
}

TEST_CASE("naive split puts the first half on chip 0")
{
    CHECK(naive_split(5) == std::vector<int>{0, 0, 0, 1, 1});
    CHECK(naive_split(4) == std::vector<int>{0, 0, 1, 1});
}

TEST_CASE("partition json round trip")
{
    const NetworkGraph g = small_graph();
    Partition p = split_graph(g, CoreBudget{128, 1024, 1024, 1 << 14});
    p.chip = naive_split(p.core_count());
    const Partition r = partition_from_json(partition_to_json(p, 12, 34));
    REQUIRE(r.core_count() == p.core_count());
    CHECK(r.chip == p.chip);
    CHECK(r.budget.max_neurons == p.budget.max_neurons);
    for (int k = 0; k < p.core_count(); ++k) {
        CHECK(r.cores[k].layer == p.cores[k].layer);
        CHECK(r.cores[k].x == p.cores[k].x);
        CHECK(r.cores[k].width == p.cores[k].width);
        CHECK(r.cores[k].channels == p.cores[k].channels);
    }
    CHECK(r.core_of(p.cores[1].layer, p.cores[1].c, p.cores[1].y, p.cores[1].x) == 1);
}

TEST_CASE("core graph dump lists each undirected edge once")
{
    CoreGraph g;
    g.nodes = 3;
    g.adj.resize(3);
    g.add_edge(0, 1, 5);
    g.add_edge(2, 1, 2);
    CHECK(core_graph_dump(g) == "# nodes 3\n0 1 5\n1 2 2\n");
    CHECK(g.total_weight() == 7);
}
