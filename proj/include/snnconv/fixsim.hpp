#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnconv/data.hpp"
#include "snnconv/netgraph.hpp"
#include "snnconv/partitioner.hpp"
#include "snnconv/quantizer.hpp"

namespace snnconv {

struct CoreParams {
    int delta_u = 0;
    int delta_v = 0;
    std::int64_t v_th = 1;
    bool spiking = true;
    std::int64_t u_max = (std::int64_t{1} << 23) - 1;
    std::int64_t v_max = (std::int64_t{1} << 23) - 1;
    std::int64_t v_min = 0;  // lower saturation bound of v
};

/// Fixed-point state of the compartments on one core.
struct CoreState {
    std::vector<std::int64_t> u;
    std::vector<std::int64_t> v;
    std::vector<std::int32_t> bias;
    std::vector<std::uint32_t> spike_out;  // local indices that fired in the last step
    std::uint64_t saturations = 0;

    explicit CoreState(std::size_t n = 0) : u(n, 0), v(n, 0), bias(n, 0) {}
};

/// One timestep: u <- ((u (4096 - delta_u)) >> 12) + q, then
/// v <- ((v (4096 - delta_v)) >> 12) + u + bias; a spiking compartment fires
/// when v reaches v_th and resets to 0. For a non-spiking compartment the
/// per-step drive u + bias is written to `drive` (if given) and v is unused.
void step_core(CoreState &state, const std::vector<std::int64_t> &q, const CoreParams &params,
               std::vector<std::int64_t> *drive = nullptr);

/// Cumulative output drive: cum[t * N + i] is the drive of output compartment
/// i summed over steps 1..t (cum row 0 is zero).
struct OutputTrace {
    int steps = 0;
    TensorShape shape;
    std::vector<std::int64_t> cum;
};

/// Argmax over the two channels of the drive summed over the last `window`
/// steps; ties go to class 0. Throws std::invalid_argument if window > steps.
Mask decode_output(const OutputTrace &trace, int window);
/// Same, for the window ending at step `end_step` (window <= end_step <= steps).
Mask decode_output(const OutputTrace &trace, int window, int end_step);

struct SpikeStats {
    int steps = 0;
    int inferences = 0;
    std::vector<std::vector<std::uint64_t>> layer_step_spikes;  // [layer][step]
    std::vector<std::vector<std::uint32_t>> neuron_spikes;      // [layer][CHW neuron]
    std::vector<std::uint64_t> core_synops;
    std::uint64_t synops = 0;
    std::uint64_t neuron_updates = 0;
    std::uint64_t intra_hops = 0;  // spike deliveries to cores on the source chip
    std::uint64_t inter_hops = 0;  // deliveries that cross chips
    std::uint64_t saturations = 0;

    [[nodiscard]] std::uint64_t total_spikes() const;
};

/// Adds `b` into `a` (same graph and partition).
void accumulate(SpikeStats &a, const SpikeStats &b);

/// Mean rate (Hz) of each layer over steps [from_step, steps), 0 for layers
/// without neurons.
std::vector<double> layer_rates(const SpikeStats &stats, const NetworkGraph &graph, int from_step = 0);

/// Recounts hops and per-core synops for another placement of the same
/// network; spike trains do not depend on placement.
SpikeStats traffic_for_partition(const SpikeStats &stats, const NetworkGraph &graph, const Partition &partition,
                                 const RouteTable &routes);

struct RasterEvent {
    std::uint32_t step;
    std::uint32_t core;
    std::uint32_t neuron;  // index within the core region (CHW)
};

struct SimOptions {
    unsigned threads = 1;
    bool record_raster = false;
    std::int64_t v_min = 0;
};

struct InferenceResult {
    OutputTrace output;
    SpikeStats stats;
    std::vector<RasterEvent> raster;
};

/// Compiled network: quantized parameters laid out per core plus routes.
class Simulator {
public:
    Simulator(const NetworkGraph &graph, const QuantizationResult &quant, const Partition &partition,
              SimOptions options = {});

    /// Runs T lockstep steps with the image applied as constant current into
    /// the encoder layer.
    [[nodiscard]] InferenceResult run(const ImageSample &image, int steps) const;

    [[nodiscard]] const RouteTable &routes() const { return routes_; }

private:
    const NetworkGraph &graph_;
    const QuantizationResult &quant_;
    const Partition &partition_;
    SimOptions options_;
    RouteTable routes_;
    std::vector<std::vector<std::pair<int, InputSlice>>> afferents_;  // per producer: (consumer, slice)
    std::vector<std::vector<std::uint32_t>> core_neurons_;  // per core: layer CHW indices
};

InferenceResult run_inference(const NetworkGraph &graph, const QuantizationResult &quant,
                              const Partition &partition, const ImageSample &image, int steps,
                              const SimOptions &options = {});

/// Unquantized spiking reference with the same dynamics and one-step spike
/// delivery: exponential synaptic current, integrate-and-fire with threshold 1
/// and reset to 0. Only the spike counts of the returned stats are filled.
SpikeStats run_float_reference(const NetworkGraph &graph, const ImageSample &image, int steps, bool v_floor = true);

std::string stats_to_json(const SpikeStats &stats, const NetworkGraph &graph);
/// Lossless form of every counter, read back by stats_from_json.
std::string stats_dump(const SpikeStats &stats);
SpikeStats stats_from_json(const std::string &text);
/// "SPKR" + u32 version + u32 event count, then (step, core, neuron) u32 triples.
std::string encode_raster(const std::vector<RasterEvent> &events);

} // namespace snnconv
