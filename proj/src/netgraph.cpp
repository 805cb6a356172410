#include "snnconv/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "snnconv/rng.hpp"

namespace snnconv {

std::string TensorShape::str() const
{
    std::ostringstream os;
    os << height << 'x' << width << 'x' << channels;
    return os.str();
}

const char *to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::InputEncoder: return "input-encoder-1x1";
    case LayerKind::Conv3x3: return "conv3x3";
    case LayerKind::Conv3x3Stride2: return "conv3x3-stride2";
    case LayerKind::Deconv2x2Stride2: return "deconv2x2-stride2";
    case LayerKind::Concat: return "concat";
    case LayerKind::Output1x1: return "output-1x1";
    }
    return "?";
}

LayerKind layer_kind_from_string(const std::string &name)
{
    for (LayerKind k : {LayerKind::InputEncoder, LayerKind::Conv3x3, LayerKind::Conv3x3Stride2,
                 LayerKind::Deconv2x2Stride2, LayerKind::Concat, LayerKind::Output1x1}) {
        if (name == to_string(k)) {
            return k;
        }
    }
    throw std::invalid_argument("unknown layer kind '" + name + "'");
}

int kernel_size(LayerKind kind)
{
    switch (kind) {
    case LayerKind::InputEncoder:
    case LayerKind::Output1x1: return 1;
    case LayerKind::Conv3x3:
    case LayerKind::Conv3x3Stride2: return 3;
    case LayerKind::Deconv2x2Stride2: return 2;
    case LayerKind::Concat: return 0;
    }
    return 0;
}

int stride(LayerKind kind)
{
    return (kind == LayerKind::Conv3x3Stride2 || kind == LayerKind::Deconv2x2Stride2) ? 2 : 1;
}

bool is_transposed(LayerKind kind) { return kind == LayerKind::Deconv2x2Stride2; }

std::size_t LayerSpec::weight_count() const
{
    if (!has_params()) {
        return 0;
    }
    const auto k = static_cast<std::size_t>(kernel_size(kind));
    return static_cast<std::size_t>(out_shape.channels) * in_shape.channels * k * k;
}

std::size_t LayerSpec::weight_index(int oc, int ic, int ky, int kx) const
{
    const int k = kernel_size(kind);
    return ((static_cast<std::size_t>(oc) * in_shape.channels + ic) * k + ky) * k + kx;
}

std::vector<int> NetworkGraph::producers(int layer) const
{
    std::vector<int> out;
    for (const Edge &e : edges) {
        if (e.to == layer) {
            out.push_back(e.from);
        }
    }
    return out;
}

std::vector<int> NetworkGraph::consumers(int layer) const
{
    std::vector<int> out;
    for (const Edge &e : edges) {
        if (e.from == layer) {
            out.push_back(e.to);
        }
    }
    return out;
}

int NetworkGraph::output_layer() const
{
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::Output1x1) {
            return static_cast<int>(i);
        }
    }
    throw std::invalid_argument("graph has no output layer");
}

int NetworkGraph::encoder_layer() const
{
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind == LayerKind::InputEncoder) {
            return static_cast<int>(i);
        }
    }
    throw std::invalid_argument("graph has no input encoder");
}

std::vector<InputSlice> resolve_inputs(const NetworkGraph &graph, int layer)
{
    std::vector<InputSlice> slices;
    const LayerSpec &spec = graph.layers.at(static_cast<std::size_t>(layer));
    int channel = 0;
    for (int p : graph.producers(layer)) {
        const LayerSpec &prod = graph.layers.at(static_cast<std::size_t>(p));
        if (prod.kind == LayerKind::Concat) {
            for (InputSlice s : resolve_inputs(graph, p)) {
                s.channel_offset += channel;
                if (spec.kind == LayerKind::Concat) {
                    s.crop_y += (prod.out_shape.height - spec.out_shape.height) / 2;
                    s.crop_x += (prod.out_shape.width - spec.out_shape.width) / 2;
                }
                slices.push_back(s);
            }
        } else {
            InputSlice s;
            s.producer = p;
            s.channel_offset = channel;
            if (spec.kind == LayerKind::Concat) {
                s.crop_y = (prod.out_shape.height - spec.out_shape.height) / 2;
                s.crop_x = (prod.out_shape.width - spec.out_shape.width) / 2;
            }
            slices.push_back(s);
        }
        channel += prod.out_shape.channels;
    }
    return slices;
}

namespace {

TensorShape output_shape(LayerKind kind, TensorShape in, int out_channels)
{
    switch (kind) {
    case LayerKind::InputEncoder:
    case LayerKind::Output1x1: return {in.height, in.width, out_channels};
    case LayerKind::Conv3x3: return {in.height - 2, in.width - 2, out_channels};
    case LayerKind::Conv3x3Stride2:
        // Non-padded 3x3, stride 2: floor((n - 3) / 2) + 1 outputs.
        return {in.height >= 3 ? (in.height - 3) / 2 + 1 : 0,
                in.width >= 3 ? (in.width - 3) / 2 + 1 : 0, out_channels};
    case LayerKind::Deconv2x2Stride2: return {2 * in.height, 2 * in.width, out_channels};
    case LayerKind::Concat: return in;
    }
    return in;
}

class UNetBuilder {
public:
    explicit UNetBuilder(const UNetConfig &config) : config_(config)
    {
        graph_.dt = config.dt;
        graph_.tau_s = config.tau_s;
        graph_.amplitude = config.amplitude;
        graph_.input_shape = {config.input_size, config.input_size, 1};
    }

    int add(const std::string &name, LayerKind kind, int producer, int out_channels)
    {
        const TensorShape in = producer < 0 ? graph_.input_shape
                                            : graph_.layers[static_cast<std::size_t>(producer)].out_shape;
        const TensorShape out = output_shape(kind, in, out_channels);
        if (out.height < 1 || out.width < 1) {
            throw std::invalid_argument("spatial dimension underflow at layer '" + name +
                                        "': input " + in.str() + " gives " +
                                        std::to_string(out.height) + "x" +
                                        std::to_string(out.width));
        }
        LayerSpec spec;
        spec.name = name;
        spec.kind = kind;
        spec.in_shape = in;
        spec.out_shape = out;
        spec.activation =
                kind == LayerKind::Output1x1 ? Activation::None : Activation::SpikingRelu;
        init_params(spec);
        graph_.layers.push_back(std::move(spec));
        const int id = static_cast<int>(graph_.layers.size()) - 1;
        if (producer >= 0) {
            graph_.edges.push_back({producer, id});
        }
        return id;
    }

    int add_concat(const std::string &name, int skip, int up)
    {
        const LayerSpec &s = graph_.layers[static_cast<std::size_t>(skip)];
        const LayerSpec &u = graph_.layers[static_cast<std::size_t>(up)];
        if (s.out_shape.height < u.out_shape.height || s.out_shape.width < u.out_shape.width) {
            throw std::invalid_argument("skip connection into '" + name + "' is smaller (" +
                                        s.out_shape.str() + ") than the upsampled path (" +
                                        u.out_shape.str() + ")");
        }
        LayerSpec spec;
        spec.name = name;
        spec.kind = LayerKind::Concat;
        spec.out_shape = {u.out_shape.height, u.out_shape.width,
                          s.out_shape.channels + u.out_shape.channels};
        spec.in_shape = spec.out_shape;
        spec.activation = Activation::None;
        graph_.layers.push_back(std::move(spec));
        const int id = static_cast<int>(graph_.layers.size()) - 1;
        graph_.edges.push_back({skip, id});
        graph_.edges.push_back({up, id});
        return id;
    }

    NetworkGraph finish() { return std::move(graph_); }

private:
    // He-style uniform init of the amplitude-normalised parameters, then
    // converted to physical (Hz) units for spiking layers.
    void init_params(LayerSpec &spec)
    {
        Rng rng(mix_seed(config_.seed, graph_.layers.size()));
        const int k = kernel_size(spec.kind);
        const int fan_in = is_transposed(spec.kind) ? spec.in_shape.channels
                                                    : spec.in_shape.channels * k * k;
        const double bound = std::sqrt(6.0 / fan_in);
        const double to_physical = spec.is_spiking() ? 1.0 / config_.amplitude : 1.0;
        spec.weights.resize(spec.weight_count());
        for (double &w : spec.weights) {
            w = rng.uniform(-bound, bound) * to_physical;
        }
        spec.bias.assign(static_cast<std::size_t>(spec.out_shape.channels), 0.0);
    }

    UNetConfig config_;
    NetworkGraph graph_;
};

} // namespace

NetworkGraph build_unet(const UNetConfig &config)
{
    if (config.meta_layers < 1) {
        throw std::invalid_argument("meta_layers must be >= 1");
    }
    if (config.base_channels < 1) {
        throw std::invalid_argument("base_channels must be >= 1");
    }
    if (config.input_size < 1) {
        throw std::invalid_argument("input_size must be >= 1");
    }
    if (!(config.dt > 0.0) || !(config.tau_s > 0.0) || !(config.amplitude > 0.0)) {
        throw std::invalid_argument("dt, tau_s and amplitude must be positive");
    }
    const int encoder_channels = config.encoder_channels > 0
                                         ? config.encoder_channels
                                         : std::max(1, config.base_channels / 4);

    UNetBuilder b(config);
    int prev = b.add("encoder", LayerKind::InputEncoder, -1, encoder_channels);
    std::vector<int> skips;
    for (int level = 0; level < config.meta_layers; ++level) {
        const int ch = config.base_channels << level;
        const std::string tag = "pre" + std::to_string(level);
        if (level > 0) {
            prev = b.add(tag + "_down", LayerKind::Conv3x3Stride2, prev, ch);
        }
        prev = b.add(tag + "_conv0", LayerKind::Conv3x3, prev, ch);
        prev = b.add(tag + "_conv1", LayerKind::Conv3x3, prev, ch);
        skips.push_back(prev);
    }
    for (int level = config.meta_layers - 2; level >= 0; --level) {
        const int ch = config.base_channels << level;
        const std::string tag = "post" + std::to_string(level);
        const int up = b.add(tag + "_up", LayerKind::Deconv2x2Stride2, prev, ch);
        const int cat = b.add_concat(tag + "_concat", skips[static_cast<std::size_t>(level)], up);
        prev = b.add(tag + "_conv0", LayerKind::Conv3x3, cat, ch);
        prev = b.add(tag + "_conv1", LayerKind::Conv3x3, prev, ch);
    }
    b.add("output", LayerKind::Output1x1, prev, 2);
    return b.finish();
}

std::vector<int> topological_order(const NetworkGraph &graph)
{
    const std::size_t n = graph.layers.size();
    std::vector<int> indegree(n, 0);
    for (const Edge &e : graph.edges) {
        indegree.at(static_cast<std::size_t>(e.to))++;
    }
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i) {
        if (indegree[i] == 0) {
            ready.push(static_cast<int>(i));
        }
    }
    std::vector<int> order;
    while (!ready.empty()) {
        const int v = ready.top();
        ready.pop();
        order.push_back(v);
        for (const Edge &e : graph.edges) {
            if (e.from == v && --indegree[static_cast<std::size_t>(e.to)] == 0) {
                ready.push(e.to);
            }
        }
    }
    if (order.size() != n) {
        throw std::invalid_argument("not a DAG");
    }
    return order;
}

std::vector<std::string> validate(const NetworkGraph &graph)
{
    std::vector<std::string> violations;
    auto fail = [&](const std::string &msg) { violations.push_back(msg); };
    const int n = static_cast<int>(graph.layers.size());

    if (!(graph.dt > 0.0)) {
        fail("dt must be > 0");
    }
    if (!(graph.tau_s > 0.0)) {
        fail("tau_s must be > 0");
    }
    if (!(graph.amplitude > 0.0)) {
        fail("amplitude must be > 0");
    }
    if (!graph.input_shape.valid()) {
        fail("input shape " + graph.input_shape.str() + " has a dimension < 1");
    }

    bool edges_ok = true;
    for (const Edge &e : graph.edges) {
        const std::string tag = "edge " + std::to_string(e.from) + "->" + std::to_string(e.to);
        if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n) {
            fail(tag + ": endpoint out of range");
            edges_ok = false;
        } else if (e.from == e.to) {
            fail(tag + ": self loop");
        }
    }
    if (!edges_ok) {
        return violations;
    }
    try {
        (void)topological_order(graph);
    } catch (const std::invalid_argument &) {
        fail("not a DAG");
    }

    int encoders = 0;
    int outputs = 0;
    for (int i = 0; i < n; ++i) {
        const LayerSpec &l = graph.layers[static_cast<std::size_t>(i)];
        const std::string tag = "layer " + std::to_string(i) + " '" + l.name + "'";
        if (!l.in_shape.valid() || !l.out_shape.valid()) {
            fail(tag + ": shape " + l.in_shape.str() + " -> " + l.out_shape.str() +
                 " has a dimension < 1");
            continue;
        }
        const auto prods = graph.producers(i);
        const bool want_spiking = l.kind != LayerKind::Output1x1 && l.kind != LayerKind::Concat;
        if (l.is_spiking() != want_spiking) {
            fail(tag + ": wrong activation for " + to_string(l.kind));
        }
        if (l.kind == LayerKind::InputEncoder) {
            ++encoders;
            if (!prods.empty()) {
                fail(tag + ": encoder must not have producers");
            }
            if (l.in_shape != graph.input_shape) {
                fail(tag + ": encoder input " + l.in_shape.str() + " != image " +
                     graph.input_shape.str());
            }
        } else if (l.kind == LayerKind::Concat) {
            if (prods.size() < 2) {
                fail(tag + ": concat needs at least two producers");
            }
            int channels = 0;
            for (int p : prods) {
                const TensorShape ps = graph.layers[static_cast<std::size_t>(p)].out_shape;
                channels += ps.channels;
                if (ps.height < l.out_shape.height || ps.width < l.out_shape.width) {
                    fail("edge " + std::to_string(p) + "->" + std::to_string(i) +
                         ": producer " + ps.str() + " cannot be cropped to " +
                         l.out_shape.str());
                }
            }
            if (channels != l.out_shape.channels) {
                fail(tag + ": concat channels " + std::to_string(l.out_shape.channels) +
                     " != sum of inputs " + std::to_string(channels));
            }
            if (l.in_shape != l.out_shape) {
                fail(tag + ": concat in/out shapes differ");
            }
        } else {
            if (l.kind == LayerKind::Output1x1) {
                ++outputs;
            }
            if (prods.size() != 1) {
                fail(tag + ": expected exactly one producer, got " +
                     std::to_string(prods.size()));
            } else {
                const TensorShape ps = graph.layers[static_cast<std::size_t>(prods[0])].out_shape;
                if (ps != l.in_shape) {
                    fail("edge " + std::to_string(prods[0]) + "->" + std::to_string(i) +
                         ": producer output " + ps.str() + " != consumer input " +
                         l.in_shape.str());
                }
            }
            const TensorShape expect = output_shape(l.kind, l.in_shape, l.out_shape.channels);
            if (expect != l.out_shape) {
                fail(tag + ": output " + l.out_shape.str() + " inconsistent with " +
                     to_string(l.kind) + " of " + l.in_shape.str() + " (expected " +
                     expect.str() + ")");
            }
        }
        if (l.has_params()) {
            if (l.weights.size() != l.weight_count()) {
                fail(tag + ": weight tensor has " + std::to_string(l.weights.size()) +
                     " entries, expected " + std::to_string(l.weight_count()));
            }
            if (l.bias.size() != static_cast<std::size_t>(l.out_shape.channels)) {
                fail(tag + ": bias has " + std::to_string(l.bias.size()) + " entries");
            }
        }
    }
    if (encoders != 1) {
        fail("expected exactly one input encoder, found " + std::to_string(encoders));
    }
    if (outputs != 1) {
        fail("expected exactly one output layer, found " + std::to_string(outputs));
    }
    return violations;
}

long neuron_count(const NetworkGraph &graph)
{
    long total = 0;
    for (const LayerSpec &l : graph.layers) {
        if (l.is_spiking()) {
            total += l.out_shape.volume();
        }
    }
    return total;
}

long compartment_count(const NetworkGraph &graph)
{
    long total = 0;
    for (const LayerSpec &l : graph.layers) {
        if (l.kind != LayerKind::Concat) {
            total += l.out_shape.volume();
        }
    }
    return total;
}

long param_count(const NetworkGraph &graph)
{
    long total = 0;
    for (const LayerSpec &l : graph.layers) {
        total += static_cast<long>(l.weights.size() + l.bias.size());
    }
    return total;
}

NetworkGraph with_amplitude(const NetworkGraph &graph, double amplitude)
{
    if (!(amplitude > 0.0)) {
        throw std::invalid_argument("amplitude must be > 0");
    }
    NetworkGraph out = graph;
    const double factor = graph.amplitude / amplitude;
    for (LayerSpec &l : out.layers) {
        if (!l.is_spiking()) {
            continue;
        }
        for (double &w : l.weights) {
            w *= factor;
        }
        for (double &b : l.bias) {
            b *= factor;
        }
    }
    out.amplitude = amplitude;
    return out;
}

} // namespace snnconv
