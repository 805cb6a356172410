#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "snnconv/errors.hpp"
#include "snnconv/quantizer.hpp"

using namespace snnconv;

TEST_CASE("decay constant at the desk filter settings")
{
    CHECK(decay_constant(0.005, 0.001) == 742);
    CHECK(decay_constant(0.001, 0.001) == static_cast<int>(std::floor(4095 * (1 - std::exp(-1.0)))));
}

TEST_CASE("exact decay integral matches the recurrence oracle")
{
    for (std::int64_t u0 : {1LL, 2LL, 17LL, 4095LL, 4096LL, 65536LL, 1000003LL, 8388607LL}) {
        for (int delta : {1, 100, 742, 2048, 4095}) {
            CHECK(decay_integral_exact(u0, delta) == doctest::Approx(oracles::decay_recurrence_sum(u0, delta)));
        }
    }
}

TEST_CASE("closed form tracks the exact integral for large u0")
{
    for (std::int64_t u0 : {1LL << 16, 1LL << 18, 1LL << 20, (1LL << 23) - 1}) {
        for (int delta : {100, 742, 2048}) {
            const double exact = oracles::decay_recurrence_sum(u0, delta);
            CHECK(oracles::rel_err(decay_integral_approx(static_cast<double>(u0), delta), exact) < 0.01);
        }
    }
}

TEST_CASE("q = 0.494 fits better than the naive 0.5 over large u0")
{
    double err_fit = 0.0;
    double err_half = 0.0;
    for (std::int64_t u0 = 1 << 16; u0 <= (1 << 23); u0 *= 2) {
        const double exact = oracles::decay_recurrence_sum(u0, 742);
        err_fit += std::abs(decay_integral_approx(static_cast<double>(u0), 742, 0.494) - exact);
        err_half += std::abs(decay_integral_approx(static_cast<double>(u0), 742, 0.5) - exact);
    }
    CHECK(err_fit < err_half);
}

TEST_CASE("round_away and weight_scale")
{
    CHECK(round_away(2.5) == 3);
    CHECK(round_away(-2.5) == -3);
    CHECK(round_away(2.49) == 2);
    CHECK(weight_scale({0.5, -2.0, 1.0}) == doctest::Approx(127.5));
    CHECK_THROWS_AS(weight_scale({0.0, 0.0}), std::invalid_argument);
}

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

} // namespace

TEST_CASE("quantized layers respect every hardware limit")
{
    const NetworkGraph g = small_graph();
    const ChipLimits lim;
    const QuantizationResult q = quantize(g, lim);
    CHECK(check_result(g, q).empty());
    CHECK(q.delta_u == 742);
    CHECK(q.y_hat == doctest::Approx(5.52).epsilon(0.01));
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        if (g.layers[l].kind == LayerKind::Concat) {
            CHECK(q.layers[l].layer == -1);
            continue;
        }
        const LayerQuant &lq = q.layers[l];
        CHECK(lq.exponent_trace.front() == lim.a_start);
        CHECK(lq.exponent_trace.back() == lq.a);
        int peak = 0;
        for (std::int32_t m : lq.mantissas) {
            CHECK(std::abs(m) <= lim.mantissa_max);
            peak = std::max(peak, std::abs(m));
        }
        CHECK(peak == lim.mantissa_max);
        for (std::int32_t b : lq.bias) {
            CHECK(std::abs(b) <= lim.b_max);
        }
        if (lq.spiking) {
            CHECK(lq.v_th > 0);
            CHECK(lq.v_th <= lim.v_max);
            const double expected = q.v_th_float * std::ldexp(1.0, lq.a) * lq.c * q.y_hat;
            CHECK(std::abs(static_cast<double>(lq.v_th) - expected) <= 0.5 + 1e-9);
        }
    }
}

TEST_CASE("the exponent search drops until the threshold fits")
{
    const NetworkGraph g = small_graph();
    ChipLimits tight;
    tight.v_max = 1 << 14;
    const QuantizationResult q = quantize(g, tight);
    bool dropped = false;
    for (const LayerQuant &lq : q.layers) {
        if (lq.layer < 0) {
            continue;
        }
        dropped = dropped || lq.a < tight.a_start;
        for (std::size_t i = 1; i < lq.exponent_trace.size(); ++i) {
            CHECK(lq.exponent_trace[i] == lq.exponent_trace[i - 1] - 1);
        }
        if (lq.spiking) {
            CHECK(lq.v_th <= tight.v_max);
        }
    }
    CHECK(dropped);
}

TEST_CASE("impossible limits raise QuantizationError carrying the trace")
{
    const NetworkGraph g = small_graph();
    ChipLimits lim;
    lim.v_max = 1;
    lim.a_min = 4;
    try {
        quantize(g, lim);
        FAIL("expected QuantizationError");
    } catch (const QuantizationError &e) {
        CHECK(std::string(e.what()).find("no exponent") != std::string::npos);
    }
}

TEST_CASE("quantization result round trips through json and blob")
{
    const NetworkGraph g = small_graph();
    const QuantizationResult q = quantize(g, ChipLimits{});
    const auto dir = std::filesystem::temp_directory_path() / "snnconv_quant_rt";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "quant.json").string();
    save_quant(q, path);
    const QuantizationResult r = load_quant(path);
    REQUIRE(r.layers.size() == q.layers.size());
    CHECK(r.delta_u == q.delta_u);
    CHECK(r.delta_v == q.delta_v);
    CHECK(r.y_hat == q.y_hat);
    for (std::size_t l = 0; l < q.layers.size(); ++l) {
        CHECK(r.layers[l].layer == q.layers[l].layer);
        CHECK(r.layers[l].mantissas == q.layers[l].mantissas);
        CHECK(r.layers[l].bias == q.layers[l].bias);
        CHECK(r.layers[l].v_th == q.layers[l].v_th);
        CHECK(r.layers[l].a == q.layers[l].a);
        CHECK(r.layers[l].exponent_trace == q.layers[l].exponent_trace);
    }
    std::filesystem::remove_all(dir);
}
