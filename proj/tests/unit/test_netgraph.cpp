#include <doctest.h>

#include <filesystem>
#include <map>

#include "snnconv/blob.hpp"
#include "snnconv/graph_io.hpp"
#include "snnconv/netgraph.hpp"

using namespace snnconv;

namespace {

UNetConfig desk()
{
    UNetConfig c;
    c.input_size = 32;
    c.base_channels = 4;
    c.meta_layers = 2;
    c.seed = 1;
    return c;
}

} // namespace

TEST_CASE("desk U-Net layer shapes")
{
    const NetworkGraph g = build_unet(desk());
    const std::map<std::string, TensorShape> expected{
            {"encoder", {32, 32, 1}},     {"pre0_conv0", {30, 30, 4}},   {"pre0_conv1", {28, 28, 4}},
            {"pre1_down", {13, 13, 8}},   {"pre1_conv0", {11, 11, 8}},   {"pre1_conv1", {9, 9, 8}},
            {"post0_up", {18, 18, 4}},    {"post0_concat", {18, 18, 8}}, {"post0_conv0", {16, 16, 4}},
            {"post0_conv1", {14, 14, 4}}, {"output", {14, 14, 2}},
    };
    REQUIRE(g.layers.size() == expected.size());
    long neurons = 0;
    for (const LayerSpec &l : g.layers) {
        INFO(l.name);
        REQUIRE(expected.count(l.name) == 1);
        CHECK(l.out_shape == expected.at(l.name));
        if (l.is_spiking()) {
            neurons += l.out_shape.volume();
        }
    }
    CHECK(neuron_count(g) == neurons);
    CHECK(neurons == 13832);
    CHECK(compartment_count(g) == neurons + 14 * 14 * 2);
    CHECK(validate(g).empty());
    CHECK(g.layers[static_cast<std::size_t>(g.output_layer())].activation == Activation::None);
    CHECK(g.layers[static_cast<std::size_t>(g.encoder_layer())].kind == LayerKind::InputEncoder);
}

TEST_CASE("parameter counts follow the kernel shapes")
{
    const NetworkGraph g = build_unet(desk());
    long params = 0;
    for (const LayerSpec &l : g.layers) {
        if (!l.has_params()) {
            CHECK(l.weights.empty());
            continue;
        }
        const int k = kernel_size(l.kind);
        CHECK(l.weights.size() == static_cast<std::size_t>(l.out_shape.channels) * l.in_shape.channels * k * k);
        CHECK(l.bias.size() == static_cast<std::size_t>(l.out_shape.channels));
        params += static_cast<long>(l.weights.size() + l.bias.size());
    }
    CHECK(param_count(g) == params);
}

TEST_CASE("build_unet is seeded")
{
    const NetworkGraph a = build_unet(desk());
    const NetworkGraph b = build_unet(desk());
    UNetConfig other = desk();
    other.seed = 2;
    const NetworkGraph c = build_unet(other);
    CHECK(a.layers[3].weights == b.layers[3].weights);
    CHECK(a.layers[3].weights != c.layers[3].weights);
}

TEST_CASE("spatial underflow names the layer")
{
    UNetConfig c = desk();
    c.input_size = 16;
    c.meta_layers = 3;
    try {
        (void)build_unet(c);
        FAIL("expected an exception");
    } catch (const std::invalid_argument &e) {
        CHECK(std::string(e.what()).find("pre") != std::string::npos);
    }
}

TEST_CASE("topological order respects every edge")
{
    const NetworkGraph g = build_unet(desk());
    const auto order = topological_order(g);
    std::vector<int> pos(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        pos[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    }
    for (const Edge &e : g.edges) {
        CHECK(pos[static_cast<std::size_t>(e.from)] < pos[static_cast<std::size_t>(e.to)]);
    }
    NetworkGraph cyc = g;
    cyc.edges.push_back({9, 2});
    CHECK_THROWS_AS(topological_order(cyc), std::invalid_argument);
}

TEST_CASE("validate reports concat mismatches by edge")
{
    NetworkGraph g = build_unet(desk());
    for (LayerSpec &l : g.layers) {
        if (l.kind == LayerKind::Concat) {
            l.out_shape.channels += 1;
            l.in_shape.channels += 1;
        }
    }
    const auto problems = validate(g);
    REQUIRE_FALSE(problems.empty());
    bool named = false;
    for (const auto &p : problems) {
        named = named || p.find("->") != std::string::npos || p.find("post0_concat") != std::string::npos;
    }
    CHECK(named);
}

TEST_CASE("resolve_inputs looks through the concat")
{
    const NetworkGraph g = build_unet(desk());
    int conv0 = -1;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        if (g.layers[i].name == "post0_conv0") {
            conv0 = static_cast<int>(i);
        }
    }
    const auto slices = resolve_inputs(g, conv0);
    REQUIRE(slices.size() == 2);
    CHECK(g.layers[static_cast<std::size_t>(slices[0].producer)].name == "pre0_conv1");
    CHECK(slices[0].channel_offset == 0);
    CHECK(slices[0].crop_y == 5);  // (28 - 18) / 2
    CHECK(g.layers[static_cast<std::size_t>(slices[1].producer)].name == "post0_up");
    CHECK(slices[1].channel_offset == 4);
    CHECK(slices[1].crop_y == 0);
}

TEST_CASE("with_amplitude keeps the normalised parameters")
{
    const NetworkGraph g = build_unet(desk());
    const NetworkGraph h = with_amplitude(g, 0.002);
    CHECK(h.amplitude == 0.002);
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        const LayerSpec &a = g.layers[l];
        const LayerSpec &b = h.layers[l];
        for (std::size_t i = 0; i < a.weights.size(); ++i) {
            if (a.is_spiking()) {
                CHECK(b.weights[i] * 0.002 == doctest::Approx(a.weights[i] * 0.01));
            }
        }
    }
}

TEST_CASE("graph save and load round trip")
{
    const NetworkGraph g = build_unet(desk());
    const auto dir = std::filesystem::temp_directory_path() / "snnconv_test_graph";
    std::filesystem::remove_all(dir);
    save_graph(g, dir / "g.json");
    CHECK(std::filesystem::exists(dir / "g.spkf"));
    const NetworkGraph h = load_graph(dir / "g.json");
    REQUIRE(h.layers.size() == g.layers.size());
    CHECK(h.edges == g.edges);
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        CHECK(h.layers[l].name == g.layers[l].name);
        CHECK(h.layers[l].out_shape == g.layers[l].out_shape);
        REQUIRE(h.layers[l].weights.size() == g.layers[l].weights.size());
        for (std::size_t i = 0; i < g.layers[l].weights.size(); ++i) {
            // Stored as f32.
            CHECK(h.layers[l].weights[i] == doctest::Approx(g.layers[l].weights[i]).epsilon(1e-6));
        }
    }
    // A second save of the loaded graph is byte-identical.
    save_graph(h, dir / "h.json");
    CHECK(read_file(dir / "g.spkf") == read_file(dir / "h.spkf"));
}

TEST_CASE("blob format")
{
    const std::vector<BlobTensor> ts{make_f32("a", {2, 2}, {1.0, -2.5, 3.0, 0.125}), make_i32("b", {3}, {7, -8, 9})};
    const std::string bytes = encode_blob(ts);
    CHECK(bytes.substr(0, 4) == "SPKF");
    const auto back = decode_blob(bytes);
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "a");
    CHECK(back[1].dims == std::vector<std::uint32_t>{3});
    CHECK(encode_blob(back) == bytes);
    CHECK(&find_tensor(back, "b") == &back[1]);
    CHECK_THROWS(decode_blob(bytes.substr(0, bytes.size() - 3)));
    CHECK_THROWS(decode_blob("XXXX" + bytes.substr(4)));
}
