#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnconv/netgraph.hpp"

namespace snnconv {

struct CoreBudget {
    std::int64_t max_neurons = 1024;
    std::int64_t max_in_axons = 4096;
    std::int64_t max_out_axons = 4096;
    std::int64_t max_synapses = std::int64_t{1} << 17;
};

void check(const CoreBudget &budget);

struct CoreRegion {
    int layer = 0;
    int y = 0;  // origin
    int x = 0;
    int c = 0;
    int height = 0;  // extent (q, r, s)
    int width = 0;
    int channels = 0;

    [[nodiscard]] long volume() const { return static_cast<long>(height) * width * channels; }
    [[nodiscard]] bool contains(int cc, int yy, int xx) const
    {
        return yy >= y && yy < y + height && xx >= x && xx < x + width && cc >= c && cc < c + channels;
    }
};

/// Connection pattern seen by the neurons of one layer.
struct LayerConnectivity {
    LayerKind kind = LayerKind::Conv3x3;
    TensorShape in_shape;  // the layer's input frame
    int efferents = 0;     // number of weight-bearing consumer layers
};

LayerConnectivity connectivity(const NetworkGraph &graph, int layer);

struct CoreUsage {
    std::int64_t neurons = 0;
    std::int64_t in_axons = 0;
    std::int64_t out_axons = 0;  // estimate: neurons x efferent layers
    std::int64_t synapses = 0;   // sum of per-neuron fan-in
};

/// Resource use of a region; in-axons are the exact receptive-field footprint.
CoreUsage region_usage(const CoreRegion &region, const LayerConnectivity &conn);
bool fits(const CoreUsage &usage, const CoreBudget &budget);

/// Distinct input positions (across all input channels) that feed a region.
std::int64_t footprint(const CoreRegion &region, const LayerConnectivity &conn);

struct LayerTiling {
    int layer = -1;
    int q = 0;  // region extent along height, width, channels
    int r = 0;
    int s = 0;
    int ny = 0;  // tiles along each axis
    int nx = 0;
    int nc = 0;
    int first_core = -1;

    [[nodiscard]] int core_count() const { return ny * nx * nc; }
};

/// Exhaustive search over region extents: fewest cores, then fewest neurons
/// per core, then smallest (q, r, s). Regions tile from the origin; edge
/// regions may be smaller. Throws std::invalid_argument if nothing fits.
LayerTiling split_layer(const TensorShape &shape, const CoreBudget &budget, const LayerConnectivity &conn);

std::vector<CoreRegion> tile_regions(const TensorShape &shape, const LayerTiling &tiling);

/// Neurons of `region_a` (a producer layer) whose outgoing connections reach
/// at least one neuron of `region_b` (a consumer layer).
std::int64_t axon_count(const NetworkGraph &graph, const CoreRegion &region_a, const CoreRegion &region_b);

/// Undirected weighted graph on cores.
struct CoreGraph {
    int nodes = 0;
    std::vector<std::vector<std::pair<int, std::int64_t>>> adj;  // sorted by neighbour

    [[nodiscard]] std::int64_t weight(int u, int v) const;
    [[nodiscard]] std::int64_t total_weight() const;
    void add_edge(int u, int v, std::int64_t w);
};

struct Partition {
    CoreBudget budget;
    std::vector<LayerTiling> tilings;  // per layer; concat entries have layer = -1
    std::vector<CoreRegion> cores;
    std::vector<int> chip;             // core -> 0/1
    double tolerance = 0.05;
    bool relaxed = false;
    std::string warning;

    [[nodiscard]] int core_of(int layer, int c, int y, int x) const;
    [[nodiscard]] int core_count() const { return static_cast<int>(cores.size()); }
};

/// Split every non-concat layer.
Partition split_graph(const NetworkGraph &graph, const CoreBudget &budget, unsigned threads = 1);

/// Fan-out of every neuron to cores: for each layer and neuron (CHW index),
/// the list of (target core, synapse count) it drives.
struct RouteTable {
    std::vector<std::vector<std::uint32_t>> offsets;              // per layer, neurons + 1
    std::vector<std::vector<std::pair<int, int>>> targets;        // per layer
};

RouteTable build_routes(const NetworkGraph &graph, const Partition &partition);

/// Exact per-core usage (out-axons from the route table).
std::vector<CoreUsage> core_usage(const NetworkGraph &graph, const Partition &partition, const RouteTable &routes);

/// Empty iff the regions tile each layer exactly and every core fits the budget.
std::vector<std::string> verify_partition(const NetworkGraph &graph, const Partition &partition);

CoreGraph build_core_graph(const Partition &partition, const RouteTable &routes);

struct Bipartition {
    std::vector<int> side;
    std::int64_t cut = 0;
    bool relaxed = false;       // tolerance could not be met and was widened
    std::string warning;
    std::vector<std::int64_t> refinement_trace;  // cut after each finest-level refinement pass
};

/// Largest allowed |count(0) - count(1)|; widened to 1 when tolerance * n < 1
/// and n is odd.
std::int64_t allowed_imbalance(int nodes, double tolerance, bool *relaxed = nullptr);

/// Multilevel 2-way partition: heavy-edge coarsening, several greedy
/// graph-growing starts refined by Fiduccia-Mattheyses, and FM refinement
/// while uncoarsening. Deterministic for a given seed.
Bipartition bipartition(const CoreGraph &graph, double tolerance, std::uint64_t seed = 0);

std::int64_t edge_cut(const CoreGraph &graph, const std::vector<int> &side);

/// First ceil(n/2) cores on chip 0, the rest on chip 1.
std::vector<int> naive_split(int nodes);

std::string partition_to_json(const Partition &partition, std::int64_t cut, std::int64_t naive_cut);
Partition partition_from_json(const std::string &text);
/// "u v w" per undirected edge (u < v), preceded by a "# nodes N" line.
std::string core_graph_dump(const CoreGraph &graph);

} // namespace snnconv
