#include "snnconv/partitioner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "snnconv/parallel.hpp"
#include "snnconv/rng.hpp"

namespace snnconv {

void check(const CoreBudget &budget)
{
    if (budget.max_neurons < 1 || budget.max_in_axons < 1 || budget.max_out_axons < 1 ||
        budget.max_synapses < 1) {
        throw std::invalid_argument("core budget entries must be positive");
    }
}

namespace {

int count_efferents(const NetworkGraph &graph, int layer)
{
    int n = 0;
    for (int c : graph.consumers(layer)) {
        n += graph.layers[static_cast<std::size_t>(c)].kind == LayerKind::Concat ? count_efferents(graph, c) : 1;
    }
    return n;
}

// Input rows [lo, hi] read by output rows [y0, y0 + h) along one axis.
std::pair<int, int> input_span(LayerKind kind, int y0, int h)
{
    if (is_transposed(kind)) {
        return {y0 / 2, (y0 + h - 1) / 2};
    }
    const int k = kernel_size(kind);
    const int s = stride(kind);
    return {y0 * s, (y0 + h - 1) * s + k - 1};
}

// Output rows of a consumer reached by input row yi (inclusive, may be empty).
std::pair<int, int> output_span(LayerKind kind, int yi, int out_len)
{
    if (is_transposed(kind)) {
        return {2 * yi, std::min(out_len - 1, 2 * yi + 1)};
    }
    const int k = kernel_size(kind);
    const int s = stride(kind);
    const int num = yi - k + 1;
    const int lo = num <= 0 ? 0 : (num + s - 1) / s;
    const int hi = std::min(out_len - 1, yi / s);
    return {lo, hi};
}

std::int64_t fan_in(const LayerConnectivity &conn)
{
    const int k = kernel_size(conn.kind);
    return is_transposed(conn.kind) ? conn.in_shape.channels
                                    : static_cast<std::int64_t>(conn.in_shape.channels) * k * k;
}

std::int64_t span_len(std::pair<int, int> s) { return std::max(0, s.second - s.first + 1); }

} // namespace

LayerConnectivity connectivity(const NetworkGraph &graph, int layer)
{
    const LayerSpec &spec = graph.layers.at(static_cast<std::size_t>(layer));
    if (!spec.has_params()) {
        throw std::invalid_argument("layer '" + spec.name + "' holds no neurons");
    }
    return {spec.kind, spec.in_shape, count_efferents(graph, layer)};
}

std::int64_t footprint(const CoreRegion &region, const LayerConnectivity &conn)
{
    return span_len(input_span(conn.kind, region.y, region.height)) *
           span_len(input_span(conn.kind, region.x, region.width)) * conn.in_shape.channels;
}

CoreUsage region_usage(const CoreRegion &region, const LayerConnectivity &conn)
{
    CoreUsage u;
    u.neurons = region.volume();
    u.in_axons = footprint(region, conn);
    u.out_axons = u.neurons * conn.efferents;
    u.synapses = u.neurons * fan_in(conn);
    return u;
}

bool fits(const CoreUsage &u, const CoreBudget &b)
{
    return u.neurons <= b.max_neurons && u.in_axons <= b.max_in_axons && u.out_axons <= b.max_out_axons &&
           u.synapses <= b.max_synapses;
}

LayerTiling split_layer(const TensorShape &shape, const CoreBudget &budget, const LayerConnectivity &conn)
{
    check(budget);
    if (!shape.valid()) {
        throw std::invalid_argument("split_layer: invalid shape " + shape.str());
    }
    // Largest input span over all tiles of extent q along one axis.
    auto max_span = [&](int len, int q) {
        std::int64_t m = 0;
        for (int y0 = 0; y0 < len; y0 += q) {
            m = std::max(m, span_len(input_span(conn.kind, y0, std::min(q, len - y0))));
        }
        return m;
    };
    std::vector<std::int64_t> rows(static_cast<std::size_t>(shape.height) + 1);
    std::vector<std::int64_t> cols(static_cast<std::size_t>(shape.width) + 1);
    for (int q = 1; q <= shape.height; ++q) {
        rows[static_cast<std::size_t>(q)] = max_span(shape.height, q);
    }
    for (int r = 1; r <= shape.width; ++r) {
        cols[static_cast<std::size_t>(r)] = max_span(shape.width, r);
    }
    const std::int64_t fan = fan_in(conn);
    LayerTiling best;
    std::int64_t best_cores = std::numeric_limits<std::int64_t>::max();
    std::int64_t best_volume = 0;
    for (int q = 1; q <= shape.height; ++q) {
        for (int r = 1; r <= shape.width; ++r) {
            const std::int64_t in_per_channel = rows[static_cast<std::size_t>(q)] * cols[static_cast<std::size_t>(r)];
            if (in_per_channel * conn.in_shape.channels > budget.max_in_axons) {
                continue;
            }
            for (int s = 1; s <= shape.channels; ++s) {
                // The largest tile is the origin tile, so checking it bounds all.
                const std::int64_t vol = static_cast<std::int64_t>(q) * r * s;
                if (vol > budget.max_neurons || vol * conn.efferents > budget.max_out_axons ||
                    vol * fan > budget.max_synapses) {
                    break;  // grows with s
                }
                const int ny = (shape.height + q - 1) / q;
                const int nx = (shape.width + r - 1) / r;
                const int nc = (shape.channels + s - 1) / s;
                const std::int64_t cores = static_cast<std::int64_t>(ny) * nx * nc;
                if (cores < best_cores || (cores == best_cores && vol < best_volume)) {
                    best_cores = cores;
                    best_volume = vol;
                    best.q = q;
                    best.r = r;
                    best.s = s;
                    best.ny = ny;
                    best.nx = nx;
                    best.nc = nc;
                }
            }
        }
    }
    if (best_cores == std::numeric_limits<std::int64_t>::max()) {
        throw std::invalid_argument("split_layer: no region of a " + shape.str() + " layer fits the core budget");
    }
    return best;
}

std::vector<CoreRegion> tile_regions(const TensorShape &shape, const LayerTiling &t)
{
    std::vector<CoreRegion> out;
    for (int ty = 0; ty < t.ny; ++ty) {
        for (int tx = 0; tx < t.nx; ++tx) {
            for (int tc = 0; tc < t.nc; ++tc) {
                CoreRegion reg;
                reg.layer = t.layer;
                reg.y = ty * t.q;
                reg.x = tx * t.r;
                reg.c = tc * t.s;
                reg.height = std::min(t.q, shape.height - reg.y);
                reg.width = std::min(t.r, shape.width - reg.x);
                reg.channels = std::min(t.s, shape.channels - reg.c);
                out.push_back(reg);
            }
        }
    }
    return out;
}

namespace {

struct Afferent {
    int consumer;
    InputSlice slice;
};

// For each producer layer, the weight-bearing layers that read it.
std::vector<std::vector<Afferent>> afferent_index(const NetworkGraph &graph)
{
    std::vector<std::vector<Afferent>> idx(graph.layers.size());
    for (std::size_t l = 0; l < graph.layers.size(); ++l) {
        const LayerSpec &spec = graph.layers[l];
        if (!spec.has_params() || spec.kind == LayerKind::InputEncoder) {
            continue;
        }
        for (const InputSlice &s : resolve_inputs(graph, static_cast<int>(l))) {
            idx[static_cast<std::size_t>(s.producer)].push_back({static_cast<int>(l), s});
        }
    }
    return idx;
}

// Output rectangle of `consumer` reached by producer neuron (y, x); empty if
// the neuron is cropped away.
bool reach(const LayerSpec &consumer, const InputSlice &s, int y, int x, std::pair<int, int> &ys,
           std::pair<int, int> &xs)
{
    const int yi = y - s.crop_y;
    const int xi = x - s.crop_x;
    if (yi < 0 || xi < 0 || yi >= consumer.in_shape.height || xi >= consumer.in_shape.width) {
        return false;
    }
    ys = output_span(consumer.kind, yi, consumer.out_shape.height);
    xs = output_span(consumer.kind, xi, consumer.out_shape.width);
    return span_len(ys) > 0 && span_len(xs) > 0;
}

std::pair<int, int> intersect(std::pair<int, int> a, int lo, int len)
{
    return {std::max(a.first, lo), std::min(a.second, lo + len - 1)};
}

} // namespace

std::int64_t axon_count(const NetworkGraph &graph, const CoreRegion &a, const CoreRegion &b)
{
    const LayerSpec &consumer = graph.layers.at(static_cast<std::size_t>(b.layer));
    if (!consumer.has_params() || consumer.kind == LayerKind::InputEncoder) {
        return 0;
    }
    std::int64_t count = 0;
    for (const InputSlice &s : resolve_inputs(graph, b.layer)) {
        if (s.producer != a.layer) {
            continue;
        }
        for (int c = a.c; c < a.c + a.channels; ++c) {
            for (int y = a.y; y < a.y + a.height; ++y) {
                for (int x = a.x; x < a.x + a.width; ++x) {
                    std::pair<int, int> ys;
                    std::pair<int, int> xs;
                    if (reach(consumer, s, y, x, ys, xs) && span_len(intersect(ys, b.y, b.height)) > 0 &&
                        span_len(intersect(xs, b.x, b.width)) > 0 && b.channels > 0) {
                        ++count;
                    }
                }
            }
        }
    }
    return count;
}

std::int64_t CoreGraph::weight(int u, int v) const
{
    const auto &row = adj.at(static_cast<std::size_t>(u));
    auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(v, std::int64_t{0}),
                               [](const auto &p, const auto &q) { return p.first < q.first; });
    return (it != row.end() && it->first == v) ? it->second : 0;
}

std::int64_t CoreGraph::total_weight() const
{
    std::int64_t total = 0;
    for (int u = 0; u < nodes; ++u) {
        for (const auto &[v, w] : adj[static_cast<std::size_t>(u)]) {
            if (u < v) {
                total += w;
            }
        }
    }
    return total;
}

void CoreGraph::add_edge(int u, int v, std::int64_t w)
{
    if (u == v || w == 0) {
        return;
    }
    if (u < 0 || v < 0 || u >= nodes || v >= nodes) {
        throw std::out_of_range("core graph edge endpoint out of range");
    }
    adj.resize(static_cast<std::size_t>(nodes));
    for (auto [a, b] : {std::pair{u, v}, std::pair{v, u}}) {
        auto &row = adj[static_cast<std::size_t>(a)];
        auto it = std::lower_bound(row.begin(), row.end(), std::make_pair(b, std::int64_t{0}),
                                   [](const auto &p, const auto &q) { return p.first < q.first; });
        if (it != row.end() && it->first == b) {
            it->second += w;
        } else {
            row.insert(it, {b, w});
        }
    }
}

int Partition::core_of(int layer, int c, int y, int x) const
{
    const LayerTiling &t = tilings.at(static_cast<std::size_t>(layer));
    if (t.first_core < 0) {
        throw std::out_of_range("layer has no cores");
    }
    return t.first_core + ((y / t.q) * t.nx + x / t.r) * t.nc + c / t.s;
}

Partition split_graph(const NetworkGraph &graph, const CoreBudget &budget, unsigned threads)
{
    check(budget);
    Partition part;
    part.budget = budget;
    const std::size_t n = graph.layers.size();
    part.tilings.resize(n);
    std::vector<std::string> errors(n);
    parallel_for(n, threads, [&](std::size_t l) {
        const LayerSpec &spec = graph.layers[l];
        if (!spec.has_params()) {
            return;
        }
        try {
            LayerTiling t = split_layer(spec.out_shape, budget, connectivity(graph, static_cast<int>(l)));
            t.layer = static_cast<int>(l);
            part.tilings[l] = t;
        } catch (const std::invalid_argument &e) {
            errors[l] = "layer '" + spec.name + "': " + e.what();
        }
    });
    for (const std::string &e : errors) {
        if (!e.empty()) {
            throw std::invalid_argument(e);
        }
    }
    for (std::size_t l = 0; l < n; ++l) {
        LayerTiling &t = part.tilings[l];
        if (t.layer < 0) {
            continue;
        }
        t.first_core = static_cast<int>(part.cores.size());
        for (const CoreRegion &r : tile_regions(graph.layers[l].out_shape, t)) {
            part.cores.push_back(r);
        }
    }
    part.chip.assign(part.cores.size(), 0);
    return part;
}

RouteTable build_routes(const NetworkGraph &graph, const Partition &part)
{
    const auto aff = afferent_index(graph);
    RouteTable rt;
    rt.offsets.resize(graph.layers.size());
    rt.targets.resize(graph.layers.size());
    std::map<int, int> per_core;
    for (std::size_t p = 0; p < graph.layers.size(); ++p) {
        const LayerSpec &prod = graph.layers[p];
        if (!prod.has_params()) {
            continue;
        }
        const TensorShape ps = prod.out_shape;
        auto &offs = rt.offsets[p];
        auto &tg = rt.targets[p];
        offs.reserve(static_cast<std::size_t>(ps.volume()) + 1);
        for (int c = 0; c < ps.channels; ++c) {
            for (int y = 0; y < ps.height; ++y) {
                for (int x = 0; x < ps.width; ++x) {
                    offs.push_back(static_cast<std::uint32_t>(tg.size()));
                    per_core.clear();
                    for (const Afferent &a : aff[p]) {
                        const LayerSpec &cons = graph.layers[static_cast<std::size_t>(a.consumer)];
                        const LayerTiling &t = part.tilings[static_cast<std::size_t>(a.consumer)];
                        std::pair<int, int> ys;
                        std::pair<int, int> xs;
                        if (!reach(cons, a.slice, y, x, ys, xs)) {
                            continue;
                        }
                        for (int ty = ys.first / t.q; ty <= ys.second / t.q; ++ty) {
                            const auto ry = span_len(intersect(ys, ty * t.q, t.q));
                            for (int tx = xs.first / t.r; tx <= xs.second / t.r; ++tx) {
                                const auto rx = span_len(intersect(xs, tx * t.r, t.r));
                                for (int tc = 0; tc < t.nc; ++tc) {
                                    const int ch = std::min(t.s, cons.out_shape.channels - tc * t.s);
                                    const int core = t.first_core + (ty * t.nx + tx) * t.nc + tc;
                                    per_core[core] += static_cast<int>(ry * rx * ch);
                                }
                            }
                        }
                    }
                    for (const auto &[core, syn] : per_core) {
                        tg.emplace_back(core, syn);
                    }
                }
            }
        }
        offs.push_back(static_cast<std::uint32_t>(tg.size()));
    }
    return rt;
}

std::vector<CoreUsage> core_usage(const NetworkGraph &graph, const Partition &part, const RouteTable &routes)
{
    std::vector<CoreUsage> usage(part.cores.size());
    for (std::size_t k = 0; k < part.cores.size(); ++k) {
        const CoreRegion &reg = part.cores[k];
        usage[k] = region_usage(reg, connectivity(graph, reg.layer));
        usage[k].out_axons = 0;
    }
    for (std::size_t p = 0; p < graph.layers.size(); ++p) {
        const auto &offs = routes.offsets[p];
        if (offs.empty()) {
            continue;
        }
        const TensorShape ps = graph.layers[p].out_shape;
        for (int c = 0; c < ps.channels; ++c) {
            for (int y = 0; y < ps.height; ++y) {
                for (int x = 0; x < ps.width; ++x) {
                    const auto n = static_cast<std::size_t>((c * ps.height + y) * ps.width + x);
                    const int core = part.core_of(static_cast<int>(p), c, y, x);
                    usage[static_cast<std::size_t>(core)].out_axons += offs[n + 1] - offs[n];
                }
            }
        }
    }
    return usage;
}

std::vector<std::string> verify_partition(const NetworkGraph &graph, const Partition &part)
{
    std::vector<std::string> out;
    if (part.tilings.size() != graph.layers.size()) {
        out.push_back("partition covers " + std::to_string(part.tilings.size()) + " layers, graph has " +
                      std::to_string(graph.layers.size()));
        return out;
    }
    for (std::size_t l = 0; l < graph.layers.size(); ++l) {
        const LayerSpec &spec = graph.layers[l];
        const LayerTiling &t = part.tilings[l];
        if (!spec.has_params()) {
            if (t.layer >= 0) {
                out.push_back("concat layer '" + spec.name + "' must not own cores");
            }
            continue;
        }
        if (t.layer != static_cast<int>(l) || t.first_core < 0 ||
            t.first_core + t.core_count() > part.core_count()) {
            out.push_back("layer '" + spec.name + "' has no valid tiling");
            continue;
        }
        std::vector<int> cover(static_cast<std::size_t>(spec.out_shape.volume()), 0);
        long volume = 0;
        for (int k = t.first_core; k < t.first_core + t.core_count(); ++k) {
            const CoreRegion &r = part.cores[static_cast<std::size_t>(k)];
            if (r.layer != static_cast<int>(l) || r.y < 0 || r.x < 0 || r.c < 0 ||
                r.y + r.height > spec.out_shape.height || r.x + r.width > spec.out_shape.width ||
                r.c + r.channels > spec.out_shape.channels || r.volume() <= 0) {
                out.push_back("core " + std::to_string(k) + " lies outside layer '" + spec.name + "'");
                continue;
            }
            volume += r.volume();
            for (int c = r.c; c < r.c + r.channels; ++c) {
                for (int y = r.y; y < r.y + r.height; ++y) {
                    for (int x = r.x; x < r.x + r.width; ++x) {
                        ++cover[static_cast<std::size_t>((c * spec.out_shape.height + y) * spec.out_shape.width + x)];
                    }
                }
            }
        }
        if (volume != spec.out_shape.volume() ||
            std::any_of(cover.begin(), cover.end(), [](int v) { return v != 1; })) {
            out.push_back("regions of layer '" + spec.name + "' do not tile it exactly");
        }
    }
    if (!out.empty()) {
        return out;
    }
    const RouteTable routes = build_routes(graph, part);
    const auto usage = core_usage(graph, part, routes);
    for (std::size_t k = 0; k < usage.size(); ++k) {
        const CoreUsage &u = usage[k];
        const CoreBudget &b = part.budget;
        std::ostringstream os;
        if (u.neurons > b.max_neurons) {
            os << "core " << k << ": " << u.neurons << " neurons > " << b.max_neurons;
        } else if (u.in_axons > b.max_in_axons) {
            os << "core " << k << ": " << u.in_axons << " input axons > " << b.max_in_axons;
        } else if (u.out_axons > b.max_out_axons) {
            os << "core " << k << ": " << u.out_axons << " output axons > " << b.max_out_axons;
        } else if (u.synapses > b.max_synapses) {
            os << "core " << k << ": " << u.synapses << " synapses > " << b.max_synapses;
        }
        if (!os.str().empty()) {
            out.push_back(os.str());
        }
    }
    if (part.chip.size() != part.cores.size()) {
        out.push_back("chip assignment does not cover every core");
    } else if (std::any_of(part.chip.begin(), part.chip.end(), [](int c) { return c != 0 && c != 1; })) {
        out.push_back("chip ids must be 0 or 1");
    }
    return out;
}

CoreGraph build_core_graph(const Partition &part, const RouteTable &routes)
{
    CoreGraph g;
    g.nodes = part.core_count();
    g.adj.resize(static_cast<std::size_t>(g.nodes));
    std::map<std::pair<int, int>, std::int64_t> edges;
    for (std::size_t p = 0; p < routes.offsets.size(); ++p) {
        const auto &offs = routes.offsets[p];
        if (offs.empty()) {
            continue;
        }
        const LayerTiling &t = part.tilings[p];
        // Neurons are numbered CHW; recover the layer extent from its tiles.
        std::size_t n = 0;
        int height = 0;
        int width = 0;
        int chans = 0;
        for (int k = t.first_core; k < t.first_core + t.core_count(); ++k) {
            const CoreRegion &r = part.cores[static_cast<std::size_t>(k)];
            height = std::max(height, r.y + r.height);
            width = std::max(width, r.x + r.width);
            chans = std::max(chans, r.c + r.channels);
        }
        for (int c = 0; c < chans; ++c) {
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x, ++n) {
                    const int src = part.core_of(static_cast<int>(p), c, y, x);
                    for (std::uint32_t e = offs[n]; e < offs[n + 1]; ++e) {
                        const int dst = routes.targets[p][e].first;
                        if (dst != src) {
                            edges[{std::min(src, dst), std::max(src, dst)}] += 1;
                        }
                    }
                }
            }
        }
    }
    for (const auto &[uv, w] : edges) {
        g.adj[static_cast<std::size_t>(uv.first)].emplace_back(uv.second, w);
        g.adj[static_cast<std::size_t>(uv.second)].emplace_back(uv.first, w);
    }
    for (auto &row : g.adj) {
        std::sort(row.begin(), row.end());
    }
    return g;
}

std::int64_t edge_cut(const CoreGraph &graph, const std::vector<int> &side)
{
    if (side.size() != static_cast<std::size_t>(graph.nodes)) {
        throw std::invalid_argument("edge_cut: assignment does not cover every node");
    }
    std::int64_t cut = 0;
    for (int u = 0; u < graph.nodes; ++u) {
        if (side[static_cast<std::size_t>(u)] != 0 && side[static_cast<std::size_t>(u)] != 1) {
            throw std::invalid_argument("edge_cut: node " + std::to_string(u) + " is unassigned");
        }
        for (const auto &[v, w] : graph.adj[static_cast<std::size_t>(u)]) {
            if (u < v && side[static_cast<std::size_t>(u)] != side[static_cast<std::size_t>(v)]) {
                cut += w;
            }
        }
    }
    return cut;
}

std::vector<int> naive_split(int nodes)
{
    std::vector<int> side(static_cast<std::size_t>(nodes), 1);
    for (int i = 0; i < (nodes + 1) / 2; ++i) {
        side[static_cast<std::size_t>(i)] = 0;
    }
    return side;
}

std::int64_t allowed_imbalance(int nodes, double tolerance, bool *relaxed)
{
    if (!(tolerance >= 0.0)) {
        throw std::invalid_argument("balance tolerance must be >= 0");
    }
    auto allowed = static_cast<std::int64_t>(std::floor(tolerance * nodes + 1e-9));
    const bool widen = nodes % 2 == 1 && allowed < 1;
    if (widen) {
        allowed = 1;
    }
    if (relaxed != nullptr) {
        *relaxed = widen;
    }
    return allowed;
}

namespace {

struct WGraph {
    int n = 0;
    std::vector<std::int64_t> vw;
    std::vector<std::vector<std::pair<int, std::int64_t>>> adj;
};

std::int64_t wcut(const WGraph &g, const std::vector<int> &side)
{
    std::int64_t cut = 0;
    for (int u = 0; u < g.n; ++u) {
        for (const auto &[v, w] : g.adj[static_cast<std::size_t>(u)]) {
            if (u < v && side[static_cast<std::size_t>(u)] != side[static_cast<std::size_t>(v)]) {
                cut += w;
            }
        }
    }
    return cut;
}

std::int64_t imbalance(const WGraph &g, const std::vector<int> &side)
{
    std::int64_t d = 0;
    for (int u = 0; u < g.n; ++u) {
        d += side[static_cast<std::size_t>(u)] == 0 ? g.vw[static_cast<std::size_t>(u)] : -g.vw[static_cast<std::size_t>(u)];
    }
    return d;  // weight(0) - weight(1)
}

std::int64_t violation(std::int64_t imb, std::int64_t allowed) { return std::max<std::int64_t>(0, std::llabs(imb) - allowed); }

// One Fiduccia-Mattheyses pass: move every node at most once, greedily by
// gain under the balance rule, then keep the best prefix (least balance
// violation, then least cut, then fewest moves). Returns true if it improved.
bool fm_pass(const WGraph &g, std::vector<int> &side, std::int64_t allowed)
{
    const auto n = static_cast<std::size_t>(g.n);
    std::vector<std::int64_t> gain(n, 0);
    for (std::size_t u = 0; u < n; ++u) {
        for (const auto &[v, w] : g.adj[u]) {
            gain[u] += side[u] != side[static_cast<std::size_t>(v)] ? w : -w;
        }
    }
    std::vector<char> locked(n, 0);
    std::int64_t cut = wcut(g, side);
    std::int64_t imb = imbalance(g, side);
    const std::int64_t start_cut = cut;
    const std::int64_t start_viol = violation(imb, allowed);
    std::int64_t best_cut = cut;
    std::int64_t best_viol = start_viol;
    std::size_t best_len = 0;
    std::vector<int> moves;
    for (std::size_t step = 0; step < n; ++step) {
        int pick = -1;
        for (std::size_t u = 0; u < n; ++u) {
            if (locked[u]) {
                continue;
            }
            const std::int64_t w = g.vw[u];
            const std::int64_t next = side[u] == 0 ? imb - 2 * w : imb + 2 * w;
            const std::int64_t cur_v = violation(imb, allowed);
            const std::int64_t next_v = violation(next, allowed);
            if (next_v > 0 && next_v >= cur_v) {
                continue;
            }
            if (pick < 0 || gain[u] > gain[static_cast<std::size_t>(pick)]) {
                pick = static_cast<int>(u);
            }
        }
        if (pick < 0) {
            break;
        }
        const auto p = static_cast<std::size_t>(pick);
        imb = side[p] == 0 ? imb - 2 * g.vw[p] : imb + 2 * g.vw[p];
        cut -= gain[p];
        side[p] ^= 1;
        locked[p] = 1;
        gain[p] = -gain[p];
        for (const auto &[v, w] : g.adj[p]) {
            const auto vv = static_cast<std::size_t>(v);
            gain[vv] += side[vv] != side[p] ? 2 * w : -2 * w;
        }
        moves.push_back(pick);
        const std::int64_t viol = violation(imb, allowed);
        if (viol < best_viol || (viol == best_viol && cut < best_cut)) {
            best_viol = viol;
            best_cut = cut;
            best_len = moves.size();
        }
    }
    for (std::size_t k = moves.size(); k > best_len; --k) {
        side[static_cast<std::size_t>(moves[k - 1])] ^= 1;
    }
    return best_viol < start_viol || best_cut < start_cut;
}

void fm_refine(const WGraph &g, std::vector<int> &side, std::int64_t allowed, std::vector<std::int64_t> *trace)
{
    if (trace != nullptr) {
        trace->push_back(wcut(g, side));
    }
    for (int pass = 0; pass < 64 && fm_pass(g, side, allowed); ++pass) {
        if (trace != nullptr) {
            trace->push_back(wcut(g, side));
        }
    }
}

// Greedy graph growing: grow side 1 from `seed_node` by best gain until it
// holds about half the weight.
std::vector<int> grow(const WGraph &g, int seed_node)
{
    const auto n = static_cast<std::size_t>(g.n);
    std::vector<int> side(n, 0);
    const std::int64_t total = std::accumulate(g.vw.begin(), g.vw.end(), std::int64_t{0});
    std::int64_t w1 = 0;
    std::vector<std::int64_t> conn(n, 0);  // edge weight into side 1
    int next = seed_node;
    while (next >= 0 && 2 * (w1 + g.vw[static_cast<std::size_t>(next)]) <= total + g.vw[static_cast<std::size_t>(next)]) {
        const auto u = static_cast<std::size_t>(next);
        side[u] = 1;
        w1 += g.vw[u];
        for (const auto &[v, w] : g.adj[u]) {
            conn[static_cast<std::size_t>(v)] += w;
        }
        next = -1;
        std::int64_t best = std::numeric_limits<std::int64_t>::min();
        for (std::size_t v = 0; v < n; ++v) {
            if (side[v] == 1) {
                continue;
            }
            std::int64_t deg = 0;
            for (const auto &e : g.adj[v]) {
                deg += e.second;
            }
            const std::int64_t gain = 2 * conn[v] - deg;
            if (gain > best) {
                best = gain;
                next = static_cast<int>(v);
            }
        }
    }
    return side;
}

struct Level {
    WGraph graph;
    std::vector<int> map;  // fine node -> coarse node (into the next level)
};

WGraph coarsen(const WGraph &g, Rng &rng, std::vector<int> &map, std::int64_t max_vw)
{
    const auto n = static_cast<std::size_t>(g.n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<int> match(n, -1);
    for (int u : order) {
        const auto uu = static_cast<std::size_t>(u);
        if (match[uu] >= 0) {
            continue;
        }
        int best = -1;
        std::int64_t best_w = 0;
        for (const auto &[v, w] : g.adj[uu]) {
            const auto vv = static_cast<std::size_t>(v);
            if (match[vv] >= 0 || g.vw[uu] + g.vw[vv] > max_vw) {
                continue;
            }
            if (w > best_w || (w == best_w && best >= 0 && g.vw[vv] < g.vw[static_cast<std::size_t>(best)])) {
                best = v;
                best_w = w;
            }
        }
        match[uu] = best >= 0 ? best : u;
        if (best >= 0) {
            match[static_cast<std::size_t>(best)] = u;
        }
    }
    map.assign(n, -1);
    WGraph c;
    for (std::size_t u = 0; u < n; ++u) {
        if (map[u] >= 0) {
            continue;
        }
        map[u] = c.n;
        const auto m = static_cast<std::size_t>(match[u]);
        map[m] = c.n;
        c.vw.push_back(g.vw[u] + (m != u ? g.vw[m] : 0));
        ++c.n;
    }
    std::vector<std::map<int, std::int64_t>> rows(static_cast<std::size_t>(c.n));
    for (std::size_t u = 0; u < n; ++u) {
        for (const auto &[v, w] : g.adj[u]) {
            const int a = map[u];
            const int b = map[static_cast<std::size_t>(v)];
            if (a != b) {
                rows[static_cast<std::size_t>(a)][b] += w;
            }
        }
    }
    c.adj.resize(static_cast<std::size_t>(c.n));
    for (std::size_t a = 0; a < rows.size(); ++a) {
        c.adj[a].assign(rows[a].begin(), rows[a].end());
    }
    return c;
}

} // namespace

Bipartition bipartition(const CoreGraph &graph, double tolerance, std::uint64_t seed)
{
    if (graph.nodes < 2) {
        throw std::invalid_argument("bipartition needs at least 2 nodes");
    }
    Bipartition res;
    const std::int64_t allowed = allowed_imbalance(graph.nodes, tolerance, &res.relaxed);
    if (res.relaxed) {
        std::ostringstream os;
        os << "balance tolerance " << tolerance << " is infeasible for " << graph.nodes
           << " cores; relaxed to an imbalance of 1";
        res.warning = os.str();
    }
    WGraph fine;
    fine.n = graph.nodes;
    fine.vw.assign(static_cast<std::size_t>(graph.nodes), 1);
    fine.adj = graph.adj;
    fine.adj.resize(static_cast<std::size_t>(graph.nodes));

    Rng rng(mix_seed(seed, 0x62697061));
    constexpr int kCoarsenTo = 16;
    std::vector<Level> levels{{fine, {}}};
    while (levels.back().graph.n > kCoarsenTo) {
        const WGraph &g = levels.back().graph;
        const std::int64_t max_vw = std::max<std::int64_t>(2, (3 * graph.nodes) / (2 * kCoarsenTo));
        std::vector<int> map;
        WGraph c = coarsen(g, rng, map, max_vw);
        if (c.n * 10 > g.n * 9) {
            break;  // matching stalled
        }
        levels.back().map = std::move(map);
        levels.push_back({std::move(c), {}});
    }

    // Initial partitions on the coarsest level. The coarse graph may not
    // admit the exact balance, so refine there against a widened allowance
    // covering its heaviest node.
    const WGraph &coarse = levels.back().graph;
    const std::int64_t heaviest = *std::max_element(coarse.vw.begin(), coarse.vw.end());
    const std::int64_t coarse_allowed = std::max(allowed, levels.size() > 1 ? heaviest : allowed);
    std::vector<int> starts(static_cast<std::size_t>(coarse.n));
    std::iota(starts.begin(), starts.end(), 0);
    rng.shuffle(starts);
    starts.resize(std::min<std::size_t>(starts.size(), 16));
    std::vector<int> best;
    std::int64_t best_key_viol = 0;
    std::int64_t best_key_cut = 0;
    for (int s : starts) {
        std::vector<int> side = grow(coarse, s);
        fm_refine(coarse, side, coarse_allowed, nullptr);
        const std::int64_t v = violation(imbalance(coarse, side), coarse_allowed);
        const std::int64_t c = wcut(coarse, side);
        if (best.empty() || v < best_key_viol || (v == best_key_viol && c < best_key_cut)) {
            best = side;
            best_key_viol = v;
            best_key_cut = c;
        }
    }

    // Project and refine level by level.
    std::vector<int> side = best;
    for (std::size_t l = levels.size() - 1; l-- > 0;) {
        const Level &lv = levels[l];
        std::vector<int> projected(static_cast<std::size_t>(lv.graph.n));
        for (std::size_t u = 0; u < projected.size(); ++u) {
            projected[u] = side[static_cast<std::size_t>(lv.map[u])];
        }
        side = std::move(projected);
        const bool finest = l == 0;
        fm_refine(lv.graph, side, finest ? allowed : coarse_allowed, finest ? &res.refinement_trace : nullptr);
    }
    if (levels.size() == 1) {
        res.refinement_trace.clear();
        fm_refine(fine, side, allowed, &res.refinement_trace);
    }

    // The index-order split refined by FM is a cheap extra candidate.
    std::vector<int> naive = naive_split(graph.nodes);
    fm_refine(fine, naive, allowed, nullptr);
    auto key = [&](const std::vector<int> &s) {
        return std::make_pair(violation(imbalance(fine, s), allowed), wcut(fine, s));
    };
    if (key(naive) < key(side)) {
        side = naive;
        res.refinement_trace.push_back(wcut(fine, side));
    }
    // Canonical orientation: node 0 on chip 0.
    if (side[0] == 1) {
        for (int &v : side) {
            v ^= 1;
        }
    }
    res.side = side;
    res.cut = edge_cut(graph, side);
    if (violation(imbalance(fine, side), allowed) > 0) {
        res.warning += (res.warning.empty() ? "" : "; ") + std::string("final assignment exceeds the balance tolerance");
    }
    return res;
}

std::string partition_to_json(const Partition &part, std::int64_t cut, std::int64_t naive_cut)
{
    using nlohmann::json;
    json doc;
    doc["format"] = "snnconv-partition";
    doc["version"] = 1;
    doc["budget"] = {{"max_neurons", part.budget.max_neurons},
                     {"max_in_axons", part.budget.max_in_axons},
                     {"max_out_axons", part.budget.max_out_axons},
                     {"max_synapses", part.budget.max_synapses}};
    doc["tolerance"] = part.tolerance;
    doc["relaxed"] = part.relaxed;
    doc["warning"] = part.warning;
    doc["edge_cut"] = cut;
    doc["naive_edge_cut"] = naive_cut;
    json tilings = json::array();
    for (const LayerTiling &t : part.tilings) {
        if (t.layer < 0) {
            tilings.push_back(nullptr);
            continue;
        }
        tilings.push_back({{"layer", t.layer}, {"extent", {t.q, t.r, t.s}}, {"tiles", {t.ny, t.nx, t.nc}},
                           {"first_core", t.first_core}});
    }
    doc["tilings"] = tilings;
    json cores = json::array();
    for (std::size_t k = 0; k < part.cores.size(); ++k) {
        const CoreRegion &r = part.cores[k];
        cores.push_back({{"core", k},
                         {"layer", r.layer},
                         {"origin", {r.y, r.x, r.c}},
                         {"extent", {r.height, r.width, r.channels}},
                         {"chip", part.chip.at(k)}});
    }
    doc["cores"] = cores;
    return doc.dump(2) + "\n";
}

Partition partition_from_json(const std::string &text)
{
    using nlohmann::json;
    const json doc = json::parse(text);
    if (doc.value("format", "") != "snnconv-partition") {
        throw std::runtime_error("not a partition document");
    }
    Partition part;
    const json &b = doc.at("budget");
    part.budget = {b.at("max_neurons").get<std::int64_t>(), b.at("max_in_axons").get<std::int64_t>(),
                   b.at("max_out_axons").get<std::int64_t>(), b.at("max_synapses").get<std::int64_t>()};
    part.tolerance = doc.at("tolerance").get<double>();
    part.relaxed = doc.at("relaxed").get<bool>();
    part.warning = doc.at("warning").get<std::string>();
    for (const json &jt : doc.at("tilings")) {
        LayerTiling t;
        if (!jt.is_null()) {
            t.layer = jt.at("layer").get<int>();
            t.q = jt["extent"][0].get<int>();
            t.r = jt["extent"][1].get<int>();
            t.s = jt["extent"][2].get<int>();
            t.ny = jt["tiles"][0].get<int>();
            t.nx = jt["tiles"][1].get<int>();
            t.nc = jt["tiles"][2].get<int>();
            t.first_core = jt.at("first_core").get<int>();
        }
        part.tilings.push_back(t);
    }
    for (const json &jc : doc.at("cores")) {
        CoreRegion r;
        r.layer = jc.at("layer").get<int>();
        r.y = jc["origin"][0].get<int>();
        r.x = jc["origin"][1].get<int>();
        r.c = jc["origin"][2].get<int>();
        r.height = jc["extent"][0].get<int>();
        r.width = jc["extent"][1].get<int>();
        r.channels = jc["extent"][2].get<int>();
        part.cores.push_back(r);
        part.chip.push_back(jc.at("chip").get<int>());
    }
    return part;
}

std::string core_graph_dump(const CoreGraph &graph)
{
    std::ostringstream os;
    os << "# nodes " << graph.nodes << "\n";
    for (int u = 0; u < graph.nodes; ++u) {
        for (const auto &[v, w] : graph.adj[static_cast<std::size_t>(u)]) {
            if (u < v) {
                os << u << ' ' << v << ' ' << w << '\n';
            }
        }
    }
    return os.str();
}

} // namespace snnconv
