#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "snnconv/fixsim.hpp"

using namespace snnconv;

namespace {

// Integer IF neuron driven by a constant bias with no filter or leak.
long integer_if_spikes(std::int64_t bias, std::int64_t v_th, int steps)
{
    long n = 0;
    std::int64_t v = 0;
    for (int t = 0; t < steps; ++t) {
        v = std::max<std::int64_t>(v + bias, 0);
        if (v >= v_th) {
            ++n;
            v = 0;
        }
    }
    return n;
}

struct Fixture {
    NetworkGraph graph;
    QuantizationResult quant;
    Partition part;
    std::vector<ImageSample> images;

    Fixture()
    {
        UNetConfig c;
        c.input_size = 16;
        c.base_channels = 4;
        c.meta_layers = 1;
        c.amplitude = 1.0 / 200;
        c.seed = 8;
        graph = build_unet(c);
        // Positive biases keep every layer active without training.
        for (LayerSpec &l : graph.layers) {
            for (double &b : l.bias) {
                b = std::abs(b) + 40.0;
            }
        }
        quant = quantize(graph, ChipLimits{});
        part = split_graph(graph, CoreBudget{128, 1024, 1024, 1 << 14});
        part.chip = naive_split(part.core_count());
        images = synth_cells(4, 2, 16);
    }
};

} // namespace

TEST_CASE("step_core matches the IF oracle under constant drive")
{
    for (std::int64_t bias : {1, 3, 7, 100}) {
        for (std::int64_t v_th : {1, 4, 10, 1000}) {
            CoreState st(1);
            st.bias[0] = static_cast<std::int32_t>(bias);
            CoreParams p;
            p.v_th = v_th;
            long spikes = 0;
            for (int t = 0; t < 1000; ++t) {
                step_core(st, {0}, p);
                spikes += static_cast<long>(st.spike_out.size());
            }
            CHECK(spikes == integer_if_spikes(bias, v_th, 1000));
            // Same count as a float IF neuron whose drive is bias / v_th per step.
            const double drive = static_cast<double>(bias) / static_cast<double>(v_th) / 0.001;
            CHECK(std::abs(spikes - oracles::if_neuron_spikes(drive, 0.001, 1000)) <= 1);
        }
    }
}

TEST_CASE("step_core filters input current through the u decay")
{
    CoreState st(1);
    CoreParams p;
    p.delta_u = 742;
    p.v_th = std::int64_t{1} << 40;
    step_core(st, {4096}, p);
    CHECK(st.u[0] == 4096);
    CHECK(st.v[0] == 4096);
    step_core(st, {0}, p);
    CHECK(st.u[0] == (4096 * (4096 - 742)) >> 12);
    CHECK(st.v[0] == 4096 + st.u[0]);
}

TEST_CASE("saturation is counted for u and the v ceiling but not the v floor")
{
    CoreParams p;
    p.u_max = 100;
    p.v_max = 150;
    p.v_th = 1000;
    CoreState st(2);
    step_core(st, {500, -20}, p);
    CHECK(st.u[0] == 100);
    CHECK(st.v[1] == 0);
    CHECK(st.saturations == 1);
    step_core(st, {0, 0}, p);
    CHECK(st.v[0] == 150);
    CHECK(st.saturations == 2);
}

TEST_CASE("non-spiking compartments report their drive")
{
    CoreParams p;
    p.spiking = false;
    CoreState st(1);
    st.bias[0] = -3;
    std::vector<std::int64_t> drive;
    step_core(st, {10}, p, &drive);
    CHECK(drive[0] == 7);
    CHECK(st.spike_out.empty());
}

TEST_CASE("decode_output sums the window and breaks ties to background")
{
    OutputTrace tr;
    tr.steps = 3;
    tr.shape = {1, 2, 2};
    // rows: step 0..3, columns: [c0 p0, c0 p1, c1 p0, c1 p1]
    tr.cum = {0, 0, 0, 0, 5, 0, 0, 0, 5, 1, 3, 1, 5, 2, 6, 2};
    CHECK(decode_output(tr, 3) == Mask{1, 0});
    CHECK(decode_output(tr, 2) == Mask{1, 0});
    CHECK(decode_output(tr, 1, 1) == Mask{0, 0});
    CHECK_THROWS_AS(decode_output(tr, 4), std::invalid_argument);
}

TEST_CASE("spikes advance one layer per step")
{
    Fixture f;
    const InferenceResult r = run_inference(f.graph, f.quant, f.part, f.images[0], 60);
    const auto order = topological_order(f.graph);
    std::vector<int> first(f.graph.layers.size(), -1);
    for (int id : order) {
        const auto &counts = r.stats.layer_step_spikes[static_cast<std::size_t>(id)];
        for (std::size_t t = 0; t < counts.size(); ++t) {
            if (counts[t] > 0) {
                first[static_cast<std::size_t>(id)] = static_cast<int>(t);
                break;
            }
        }
    }
    for (const Edge &e : f.graph.edges) {
        const int a = first[static_cast<std::size_t>(e.from)];
        const int b = first[static_cast<std::size_t>(e.to)];
        if (a < 0 || b < 0 || f.graph.layers[static_cast<std::size_t>(e.to)].kind == LayerKind::Concat) {
            continue;
        }
        CHECK(b >= a + 1);
    }
    CHECK(r.stats.total_spikes() > 0);
    CHECK(r.stats.saturations == 0);
}

TEST_CASE("simulation is independent of the thread count")
{
    Fixture f;
    SimOptions one;
    one.threads = 1;
    SimOptions four;
    four.threads = 4;
    four.record_raster = true;
    one.record_raster = true;
    const InferenceResult a = run_inference(f.graph, f.quant, f.part, f.images[1], 40, one);
    const InferenceResult b = run_inference(f.graph, f.quant, f.part, f.images[1], 40, four);
    CHECK(stats_dump(a.stats) == stats_dump(b.stats));
    CHECK(a.output.cum == b.output.cum);
    CHECK(encode_raster(a.raster) == encode_raster(b.raster));
}

TEST_CASE("spike stats survive a dump round trip")
{
    Fixture f;
    SpikeStats s = run_inference(f.graph, f.quant, f.part, f.images[0], 30).stats;
    accumulate(s, run_inference(f.graph, f.quant, f.part, f.images[1], 30).stats);
    CHECK(s.inferences == 2);
    const SpikeStats r = stats_from_json(stats_dump(s));
    CHECK(stats_dump(r) == stats_dump(s));
    CHECK(r.inter_hops == s.inter_hops);
    CHECK(r.neuron_spikes == s.neuron_spikes);
}

TEST_CASE("traffic recount for the same placement is unchanged")
{
    Fixture f;
    const InferenceResult r = run_inference(f.graph, f.quant, f.part, f.images[0], 30);
    const RouteTable routes = build_routes(f.graph, f.part);
    const SpikeStats same = traffic_for_partition(r.stats, f.graph, f.part, routes);
    CHECK(same.inter_hops == r.stats.inter_hops);
    CHECK(same.intra_hops == r.stats.intra_hops);
    CHECK(same.core_synops == r.stats.core_synops);
    Partition one_chip = f.part;
    one_chip.chip.assign(one_chip.chip.size(), 0);
    const SpikeStats local = traffic_for_partition(r.stats, f.graph, one_chip, routes);
    CHECK(local.inter_hops == 0);
    CHECK(local.intra_hops == r.stats.intra_hops + r.stats.inter_hops);
}

TEST_CASE("fixed-point rates track the float spiking reference")
{
    Fixture f;
    const int steps = 300;
    const InferenceResult r = run_inference(f.graph, f.quant, f.part, f.images[0], steps);
    const SpikeStats ref = run_float_reference(f.graph, f.images[0], steps);
    const auto fx = layer_rates(r.stats, f.graph, 50);
    const auto fl = layer_rates(ref, f.graph, 50);
    for (std::size_t l = 0; l < fx.size(); ++l) {
        if (!f.graph.layers[l].is_spiking()) {
            continue;
        }
        CAPTURE(f.graph.layers[l].name);
        CHECK(fl[l] > 1.0);
        CHECK(oracles::rel_err(fx[l], fl[l]) < 0.05);
    }
}
