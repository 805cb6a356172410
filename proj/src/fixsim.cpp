#include "snnconv/fixsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

#include "snnconv/kernels.hpp"
#include "snnconv/parallel.hpp"
#include "snnconv/trainer.hpp"

namespace snnconv {

namespace {

std::int64_t saturate(std::int64_t x, std::int64_t lo, std::int64_t hi, std::uint64_t &count)
{
    if (x < lo) {
        ++count;
        return lo;
    }
    if (x > hi) {
        ++count;
        return hi;
    }
    return x;
}

std::int64_t apply_exponent(std::int64_t sum, int a) { return a >= 0 ? sum * (std::int64_t{1} << a) : sum >> -a; }

} // namespace

void step_core(CoreState &st, const std::vector<std::int64_t> &q, const CoreParams &p, std::vector<std::int64_t> *drive)
{
    const std::size_t n = st.u.size();
    if (q.size() != n || st.v.size() != n || st.bias.size() != n) {
        throw std::invalid_argument("step_core: state and input sizes differ");
    }
    const std::int64_t keep_u = 4096 - p.delta_u;
    const std::int64_t keep_v = 4096 - p.delta_v;
    st.spike_out.clear();
    if (drive != nullptr) {
        drive->resize(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        // >> on a negative int64 is an arithmetic shift (floor) in C++20.
        st.u[i] = saturate(((st.u[i] * keep_u) >> 12) + q[i], -p.u_max, p.u_max, st.saturations);
        if (!p.spiking) {
            if (drive != nullptr) {
                (*drive)[i] = st.u[i] + st.bias[i];
            }
            continue;
        }
        std::int64_t v = ((st.v[i] * keep_v) >> 12) + st.u[i] + st.bias[i];
        // The floor is the normal lower bound of v, not an overflow.
        v = saturate(std::max(v, p.v_min), p.v_min, p.v_max, st.saturations);
        if (v >= p.v_th) {
            st.spike_out.push_back(static_cast<std::uint32_t>(i));
            v = 0;
        }
        st.v[i] = v;
    }
}

Mask decode_output(const OutputTrace &trace, int window)
{
    return decode_output(trace, window, trace.steps);
}

Mask decode_output(const OutputTrace &trace, int window, int end_step)
{
    if (end_step < 1 || end_step > trace.steps) {
        throw std::invalid_argument("decode_output: end step " + std::to_string(end_step) + " not in [1, " +
                                    std::to_string(trace.steps) + "]");
    }
    if (window < 1 || window > end_step) {
        throw std::invalid_argument("decode_output: window " + std::to_string(window) + " not in [1, " +
                                    std::to_string(end_step) + "]");
    }
    if (trace.shape.channels != 2) {
        throw std::invalid_argument("decode_output expects a 2-channel head");
    }
    const std::size_t pixels = static_cast<std::size_t>(trace.shape.height) * trace.shape.width;
    const std::size_t n = 2 * pixels;
    const std::int64_t *end = &trace.cum[static_cast<std::size_t>(end_step) * n];
    const std::int64_t *start = &trace.cum[static_cast<std::size_t>(end_step - window) * n];
    Mask m(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
        const std::int64_t d0 = end[p] - start[p];
        const std::int64_t d1 = end[pixels + p] - start[pixels + p];
        m[p] = d1 > d0 ? 1 : 0;
    }
    return m;
}

std::uint64_t SpikeStats::total_spikes() const
{
    std::uint64_t total = 0;
    for (const auto &layer : layer_step_spikes) {
        for (std::uint64_t s : layer) {
            total += s;
        }
    }
    return total;
}

void accumulate(SpikeStats &a, const SpikeStats &b)
{
    if (a.inferences == 0 && a.layer_step_spikes.empty()) {
        a = b;
        return;
    }
    if (a.steps != b.steps || a.layer_step_spikes.size() != b.layer_step_spikes.size() ||
        a.core_synops.size() != b.core_synops.size() || a.neuron_spikes.size() != b.neuron_spikes.size()) {
        throw std::invalid_argument("accumulate: stats from different runs");
    }
    for (std::size_t l = 0; l < a.layer_step_spikes.size(); ++l) {
        for (std::size_t t = 0; t < a.layer_step_spikes[l].size(); ++t) {
            a.layer_step_spikes[l][t] += b.layer_step_spikes[l][t];
        }
    }
    for (std::size_t l = 0; l < a.neuron_spikes.size(); ++l) {
        if (a.neuron_spikes[l].size() != b.neuron_spikes[l].size()) {
            throw std::invalid_argument("accumulate: stats from different runs");
        }
        for (std::size_t k = 0; k < a.neuron_spikes[l].size(); ++k) {
            a.neuron_spikes[l][k] += b.neuron_spikes[l][k];
        }
    }
    for (std::size_t k = 0; k < a.core_synops.size(); ++k) {
        a.core_synops[k] += b.core_synops[k];
    }
    a.inferences += b.inferences;
    a.synops += b.synops;
    a.neuron_updates += b.neuron_updates;
    a.intra_hops += b.intra_hops;
    a.inter_hops += b.inter_hops;
    a.saturations += b.saturations;
}

std::vector<double> layer_rates(const SpikeStats &stats, const NetworkGraph &graph, int from_step)
{
    if (from_step < 0 || from_step > stats.steps) {
        throw std::invalid_argument("layer_rates: from_step outside the run");
    }
    std::vector<double> rates(graph.layers.size(), 0.0);
    const int steps = stats.steps - from_step;
    if (steps == 0 || stats.inferences == 0) {
        return rates;
    }
    for (std::size_t l = 0; l < graph.layers.size(); ++l) {
        const LayerSpec &spec = graph.layers[l];
        if (!spec.is_spiking()) {
            continue;
        }
        std::uint64_t spikes = 0;
        for (int t = from_step; t < stats.steps; ++t) {
            spikes += stats.layer_step_spikes[l][static_cast<std::size_t>(t)];
        }
        rates[l] = static_cast<double>(spikes) /
                   (static_cast<double>(spec.out_shape.volume()) * steps * graph.dt * stats.inferences);
    }
    return rates;
}

SpikeStats traffic_for_partition(const SpikeStats &stats, const NetworkGraph &graph, const Partition &part,
                                 const RouteTable &routes)
{
    SpikeStats out = stats;
    out.core_synops.assign(part.cores.size(), 0);
    out.intra_hops = 0;
    out.inter_hops = 0;
    for (std::size_t p = 0; p < graph.layers.size(); ++p) {
        const auto &offs = routes.offsets[p];
        if (offs.empty() || stats.neuron_spikes[p].empty()) {
            continue;
        }
        const TensorShape s = graph.layers[p].out_shape;
        std::size_t n = 0;
        for (int c = 0; c < s.channels; ++c) {
            for (int y = 0; y < s.height; ++y) {
                for (int x = 0; x < s.width; ++x, ++n) {
                    const std::uint64_t k = stats.neuron_spikes[p][n];
                    if (k == 0) {
                        continue;
                    }
                    const int src_chip = part.chip[static_cast<std::size_t>(part.core_of(static_cast<int>(p), c, y, x))];
                    for (std::uint32_t e = offs[n]; e < offs[n + 1]; ++e) {
                        const auto &[core, syn] = routes.targets[p][e];
                        out.core_synops[static_cast<std::size_t>(core)] += k * static_cast<std::uint64_t>(syn);
                        (part.chip[static_cast<std::size_t>(core)] == src_chip ? out.intra_hops : out.inter_hops) += k;
                    }
                }
            }
        }
    }
    return out;
}

Simulator::Simulator(const NetworkGraph &graph, const QuantizationResult &quant, const Partition &partition,
                     SimOptions options)
        : graph_(graph), quant_(quant), partition_(partition), options_(options)
{
    const auto problems = verify_partition(graph, partition);
    if (!problems.empty()) {
        throw std::invalid_argument("partition inconsistent with graph: " + problems.front());
    }
    const auto qproblems = check_result(graph, quant);
    if (!qproblems.empty()) {
        throw std::invalid_argument("quantization inconsistent with graph: " + qproblems.front());
    }
    routes_ = build_routes(graph, partition);
    afferents_.resize(graph.layers.size());
    for (std::size_t l = 0; l < graph.layers.size(); ++l) {
        const LayerSpec &spec = graph.layers[l];
        if (!spec.has_params() || spec.kind == LayerKind::InputEncoder) {
            continue;
        }
        for (const InputSlice &s : resolve_inputs(graph, static_cast<int>(l))) {
            afferents_[static_cast<std::size_t>(s.producer)].emplace_back(static_cast<int>(l), s);
        }
    }
    core_neurons_.resize(partition.cores.size());
    for (std::size_t k = 0; k < partition.cores.size(); ++k) {
        const CoreRegion &r = partition.cores[k];
        const TensorShape s = graph.layers[static_cast<std::size_t>(r.layer)].out_shape;
        for (int c = r.c; c < r.c + r.channels; ++c) {
            for (int y = r.y; y < r.y + r.height; ++y) {
                for (int x = r.x; x < r.x + r.width; ++x) {
                    core_neurons_[k].push_back(static_cast<std::uint32_t>((c * s.height + y) * s.width + x));
                }
            }
        }
    }
}

InferenceResult Simulator::run(const ImageSample &image, int steps) const
{
    if (steps < 0) {
        throw std::invalid_argument("run: negative step count");
    }
    if (image.height != graph_.input_shape.height || image.width != graph_.input_shape.width) {
        throw std::invalid_argument("run: image does not match the graph input");
    }
    const std::size_t nl = graph_.layers.size();
    const std::size_t nc = partition_.cores.size();
    const int out_id = graph_.output_layer();
    const int enc_id = graph_.encoder_layer();

    InferenceResult res;
    SpikeStats &st = res.stats;
    st.steps = steps;
    st.inferences = 1;
    st.layer_step_spikes.assign(nl, std::vector<std::uint64_t>(static_cast<std::size_t>(steps), 0));
    st.neuron_spikes.resize(nl);
    for (std::size_t l = 0; l < nl; ++l) {
        if (graph_.layers[l].is_spiking()) {
            st.neuron_spikes[l].assign(static_cast<std::size_t>(graph_.layers[l].out_shape.volume()), 0);
        }
    }
    st.core_synops.assign(nc, 0);
    const TensorShape os = graph_.layers[static_cast<std::size_t>(out_id)].out_shape;
    res.output.steps = steps;
    res.output.shape = os;
    const auto n_out = static_cast<std::size_t>(os.volume());
    res.output.cum.assign((static_cast<std::size_t>(steps) + 1) * n_out, 0);

    // Per-core state and parameters.
    std::vector<CoreState> cores;
    std::vector<CoreParams> params(nc);
    std::size_t compartments = 0;
    for (std::size_t k = 0; k < nc; ++k) {
        const CoreRegion &r = partition_.cores[k];
        const LayerSpec &spec = graph_.layers[static_cast<std::size_t>(r.layer)];
        const LayerQuant &lq = quant_.at(r.layer);
        CoreState cs(core_neurons_[k].size());
        const int plane = spec.out_shape.height * spec.out_shape.width;
        for (std::size_t i = 0; i < core_neurons_[k].size(); ++i) {
            cs.bias[i] = lq.bias[core_neurons_[k][i] / static_cast<std::uint32_t>(plane)];
        }
        cores.push_back(std::move(cs));
        params[k] = {quant_.delta_u, quant_.delta_v, lq.v_th, spec.is_spiking(), quant_.limits.u_max,
                     quant_.limits.v_max, options_.v_min};
        compartments += core_neurons_[k].size();
    }

    // Constant encoder current: round(m 2^a pixel) per encoder compartment.
    const LayerSpec &enc = graph_.layers[static_cast<std::size_t>(enc_id)];
    const LayerQuant &enc_q = quant_.at(enc_id);
    std::vector<std::vector<std::int64_t>> q(nl);
    std::vector<std::vector<std::int64_t>> acc(nl);
    for (std::size_t l = 0; l < nl; ++l) {
        if (graph_.layers[l].has_params()) {
            q[l].assign(static_cast<std::size_t>(graph_.layers[l].out_shape.volume()), 0);
            acc[l].assign(q[l].size(), 0);
        }
    }
    std::vector<std::int64_t> enc_current(q[static_cast<std::size_t>(enc_id)].size());
    {
        const int plane = enc.out_shape.height * enc.out_shape.width;
        for (int oc = 0; oc < enc.out_shape.channels; ++oc) {
            const double m = std::ldexp(static_cast<double>(enc_q.mantissas[static_cast<std::size_t>(oc)]), enc_q.a);
            for (int p = 0; p < plane; ++p) {
                enc_current[static_cast<std::size_t>(oc * plane + p)] = round_away(m * image.image[static_cast<std::size_t>(p)]);
            }
        }
    }

    std::vector<std::vector<std::uint32_t>> prev(nl);
    std::vector<std::vector<std::int64_t>> core_q(nc);
    std::vector<std::vector<std::int64_t>> core_drive(nc);
    for (std::size_t k = 0; k < nc; ++k) {
        core_q[k].resize(core_neurons_[k].size());
    }

    // The extra pass routes the last step's spikes so the traffic counts
    // cover every emitted spike; nothing is integrated after it.
    for (int t = 1; t <= steps + 1; ++t) {
        // Deliver the spikes emitted in the previous step.
        for (std::size_t l = 0; l < nl; ++l) {
            std::fill(acc[l].begin(), acc[l].end(), 0);
        }
        for (std::size_t p = 0; p < nl; ++p) {
            if (prev[p].empty()) {
                continue;
            }
            const TensorShape ps = graph_.layers[p].out_shape;
            const auto &offs = routes_.offsets[p];
            for (std::uint32_t n : prev[p]) {
                const int c = static_cast<int>(n) / (ps.height * ps.width);
                const int y = (static_cast<int>(n) / ps.width) % ps.height;
                const int x = static_cast<int>(n) % ps.width;
                for (const auto &[cons_id, slice] : afferents_[p]) {
                    const LayerSpec &cons = graph_.layers[static_cast<std::size_t>(cons_id)];
                    const LayerQuant &lq = quant_.at(cons_id);
                    const int yi = y - slice.crop_y;
                    const int xi = x - slice.crop_x;
                    if (yi < 0 || xi < 0 || yi >= cons.in_shape.height || xi >= cons.in_shape.width) {
                        continue;
                    }
                    const int ci = slice.channel_offset + c;
                    const int k = kernel_size(cons.kind);
                    const int s = stride(cons.kind);
                    const bool tr = is_transposed(cons.kind);
                    const int oh = cons.out_shape.height;
                    const int ow = cons.out_shape.width;
                    int y_lo;
                    int y_hi;
                    int x_lo;
                    int x_hi;
                    if (tr) {
                        y_lo = 2 * yi;
                        y_hi = std::min(oh - 1, 2 * yi + 1);
                        x_lo = 2 * xi;
                        x_hi = std::min(ow - 1, 2 * xi + 1);
                    } else {
                        y_lo = yi - k + 1 <= 0 ? 0 : (yi - k + 1 + s - 1) / s;
                        y_hi = std::min(oh - 1, yi / s);
                        x_lo = xi - k + 1 <= 0 ? 0 : (xi - k + 1 + s - 1) / s;
                        x_hi = std::min(ow - 1, xi / s);
                    }
                    auto &a = acc[static_cast<std::size_t>(cons_id)];
                    for (int oc = 0; oc < cons.out_shape.channels; ++oc) {
                        for (int oy = y_lo; oy <= y_hi; ++oy) {
                            const int ky = tr ? oy - 2 * yi : yi - oy * s;
                            for (int ox = x_lo; ox <= x_hi; ++ox) {
                                const int kx = tr ? ox - 2 * xi : xi - ox * s;
                                a[static_cast<std::size_t>((oc * oh + oy) * ow + ox)] +=
                                        lq.mantissas[cons.weight_index(oc, ci, ky, kx)];
                            }
                        }
                    }
                    if (y_hi >= y_lo && x_hi >= x_lo) {
                        st.synops += static_cast<std::uint64_t>(cons.out_shape.channels) *
                                     static_cast<std::uint64_t>(y_hi - y_lo + 1) * static_cast<std::uint64_t>(x_hi - x_lo + 1);
                    }
                }
                const int src_chip = partition_.chip[static_cast<std::size_t>(partition_.core_of(static_cast<int>(p), c, y, x))];
                for (std::uint32_t e = offs[n]; e < offs[n + 1]; ++e) {
                    const auto &[core, syn] = routes_.targets[p][e];
                    st.core_synops[static_cast<std::size_t>(core)] += static_cast<std::uint64_t>(syn);
                    (partition_.chip[static_cast<std::size_t>(core)] == src_chip ? st.intra_hops : st.inter_hops) += 1;
                }
            }
        }
        if (t > steps) {
            break;
        }
        for (std::size_t l = 0; l < nl; ++l) {
            if (static_cast<int>(l) == enc_id) {
                q[l] = enc_current;
            } else if (!q[l].empty()) {
                const int a = quant_.at(static_cast<int>(l)).a;
                for (std::size_t i = 0; i < q[l].size(); ++i) {
                    q[l][i] = apply_exponent(acc[l][i], a);
                }
            }
        }

        // Step every core; each task owns its core state.
        parallel_for(nc, options_.threads, [&](std::size_t k) {
            const CoreRegion &r = partition_.cores[k];
            const auto &src = q[static_cast<std::size_t>(r.layer)];
            for (std::size_t i = 0; i < core_neurons_[k].size(); ++i) {
                core_q[k][i] = src[core_neurons_[k][i]];
            }
            step_core(cores[k], core_q[k], params[k], params[k].spiking ? nullptr : &core_drive[k]);
        });

        // Barrier: gather spikes in core order for delivery next step.
        for (auto &v : prev) {
            v.clear();
        }
        std::int64_t *row = &res.output.cum[static_cast<std::size_t>(t) * n_out];
        std::memcpy(row, row - n_out, n_out * sizeof(std::int64_t));
        for (std::size_t k = 0; k < nc; ++k) {
            const auto layer = static_cast<std::size_t>(partition_.cores[k].layer);
            if (!params[k].spiking) {
                for (std::size_t i = 0; i < core_neurons_[k].size(); ++i) {
                    row[core_neurons_[k][i]] += core_drive[k][i];
                }
                continue;
            }
            for (std::uint32_t i : cores[k].spike_out) {
                const std::uint32_t n = core_neurons_[k][i];
                prev[layer].push_back(n);
                ++st.neuron_spikes[layer][n];
                if (options_.record_raster) {
                    res.raster.push_back({static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(k), i});
                }
            }
            st.layer_step_spikes[layer][static_cast<std::size_t>(t - 1)] += cores[k].spike_out.size();
        }
        st.neuron_updates += compartments;
    }
    for (const CoreState &cs : cores) {
        st.saturations += cs.saturations;
    }
    return res;
}

SpikeStats run_float_reference(const NetworkGraph &graph, const ImageSample &image, int steps, bool v_floor)
{
    if (steps < 0) {
        throw std::invalid_argument("run_float_reference: negative step count");
    }
    const Tensor input = image_tensor(image);
    if (input.shape != graph.input_shape) {
        throw std::invalid_argument("run_float_reference: image does not match the graph input");
    }
    const std::size_t nl = graph.layers.size();
    const double dt = graph.dt;
    const double keep = std::exp(-dt / graph.tau_s);
    // A spike of weight w adds w (1 - keep) / dt to the filtered current, so
    // the current integrates to w over the spike's lifetime.
    const double gain = (1.0 - keep) / dt;
    const std::vector<int> order = topological_order(graph);

    SpikeStats st;
    st.steps = steps;
    st.inferences = 1;
    st.layer_step_spikes.assign(nl, std::vector<std::uint64_t>(static_cast<std::size_t>(steps), 0));
    st.neuron_spikes.resize(nl);
    std::vector<Tensor> spikes(nl);  // amplitude-scaled spikes of the previous step
    std::vector<Tensor> current(nl);
    std::vector<Tensor> volt(nl);
    for (std::size_t l = 0; l < nl; ++l) {
        const LayerSpec &spec = graph.layers[l];
        spikes[l] = Tensor(spec.out_shape);
        if (spec.is_spiking()) {
            st.neuron_spikes[l].assign(static_cast<std::size_t>(spec.out_shape.volume()), 0);
            current[l] = Tensor(spec.out_shape);
            volt[l] = Tensor(spec.out_shape);
        }
    }

    Tensor drive;
    for (int t = 1; t <= steps; ++t) {
        // Concats see last step's spikes, matching one-step delivery.
        for (int id : order) {
            if (graph.layers[static_cast<std::size_t>(id)].kind == LayerKind::Concat) {
                concat_forward(graph, id, spikes, spikes[static_cast<std::size_t>(id)]);
            }
        }
        std::vector<Tensor> next(nl);
        for (std::size_t l = 0; l < nl; ++l) {
            const LayerSpec &spec = graph.layers[l];
            if (!spec.is_spiking()) {
                next[l] = Tensor(spec.out_shape);
                continue;
            }
            Tensor &cur = current[l];
            Tensor &v = volt[l];
            const int plane = spec.out_shape.height * spec.out_shape.width;
            // The encoder's pixel current enters the filter once per step,
            // like a spike train with weight W dt.
            const bool enc = spec.kind == LayerKind::InputEncoder;
            layer_forward(spec, enc ? input : spikes[static_cast<std::size_t>(graph.producers(static_cast<int>(l)).front())],
                          drive);
            const double scale = enc ? gain * dt : gain;
            for (std::size_t i = 0; i < cur.size(); ++i) {
                const double syn = drive.data[i] - spec.bias[i / static_cast<std::size_t>(plane)];
                cur.data[i] = keep * cur.data[i] + scale * syn;
            }
            next[l] = Tensor(spec.out_shape);
            std::uint64_t fired = 0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                double x = v.data[i] + dt * (cur.data[i] + spec.bias[i / static_cast<std::size_t>(plane)]);
                if (v_floor) {
                    x = std::max(x, 0.0);
                }
                if (x >= 1.0) {
                    x = 0.0;
                    next[l].data[i] = graph.amplitude;
                    ++st.neuron_spikes[l][i];
                    ++fired;
                }
                v.data[i] = x;
            }
            st.layer_step_spikes[l][static_cast<std::size_t>(t - 1)] = fired;
        }
        spikes = std::move(next);
    }
    return st;
}

InferenceResult run_inference(const NetworkGraph &graph, const QuantizationResult &quant, const Partition &partition,
                              const ImageSample &image, int steps, const SimOptions &options)
{
    const Simulator sim(graph, quant, partition, options);
    return sim.run(image, steps);
}

std::string stats_to_json(const SpikeStats &stats, const NetworkGraph &graph)
{
    using nlohmann::json;
    json doc;
    doc["format"] = "snnconv-spike-stats";
    doc["version"] = 1;
    doc["steps"] = stats.steps;
    doc["inferences"] = stats.inferences;
    doc["total_spikes"] = stats.total_spikes();
    doc["synops"] = stats.synops;
    doc["neuron_updates"] = stats.neuron_updates;
    doc["intra_hops"] = stats.intra_hops;
    doc["inter_hops"] = stats.inter_hops;
    doc["saturations"] = stats.saturations;
    const auto rates = layer_rates(stats, graph);
    json layers = json::array();
    for (std::size_t l = 0; l < graph.layers.size(); ++l) {
        if (!graph.layers[l].is_spiking()) {
            continue;
        }
        std::uint64_t spikes = 0;
        for (std::uint64_t s : stats.layer_step_spikes[l]) {
            spikes += s;
        }
        layers.push_back({{"layer", l}, {"name", graph.layers[l].name}, {"spikes", spikes}, {"mean_rate_hz", rates[l]}});
    }
    doc["layers"] = layers;
    doc["core_synops"] = stats.core_synops;
    return doc.dump(2) + "\n";
}

std::string stats_dump(const SpikeStats &stats)
{
    nlohmann::json doc;
    doc["format"] = "snnconv-spike-counts";
    doc["version"] = 1;
    doc["steps"] = stats.steps;
    doc["inferences"] = stats.inferences;
    doc["layer_step_spikes"] = stats.layer_step_spikes;
    doc["neuron_spikes"] = stats.neuron_spikes;
    doc["core_synops"] = stats.core_synops;
    doc["synops"] = stats.synops;
    doc["neuron_updates"] = stats.neuron_updates;
    doc["intra_hops"] = stats.intra_hops;
    doc["inter_hops"] = stats.inter_hops;
    doc["saturations"] = stats.saturations;
    return doc.dump() + "\n";
}

SpikeStats stats_from_json(const std::string &text)
{
    const auto doc = nlohmann::json::parse(text);
    if (doc.value("format", "") != "snnconv-spike-counts") {
        throw std::invalid_argument("not a spike-count file");
    }
    SpikeStats st;
    st.steps = doc.at("steps").get<int>();
    st.inferences = doc.at("inferences").get<int>();
    doc.at("layer_step_spikes").get_to(st.layer_step_spikes);
    doc.at("neuron_spikes").get_to(st.neuron_spikes);
    doc.at("core_synops").get_to(st.core_synops);
    st.synops = doc.at("synops").get<std::uint64_t>();
    st.neuron_updates = doc.at("neuron_updates").get<std::uint64_t>();
    st.intra_hops = doc.at("intra_hops").get<std::uint64_t>();
    st.inter_hops = doc.at("inter_hops").get<std::uint64_t>();
    st.saturations = doc.at("saturations").get<std::uint64_t>();
    return st;
}

std::string encode_raster(const std::vector<RasterEvent> &events)
{
    std::string out = "SPKR";
    auto put = [&](std::uint32_t v) {
        char b[4];
        std::memcpy(b, &v, 4);
        out.append(b, 4);
    };
    put(1);
    put(static_cast<std::uint32_t>(events.size()));
    for (const RasterEvent &e : events) {
        put(e.step);
        put(e.core);
        put(e.neuron);
    }
    return out;
}

} // namespace snnconv
