#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "snnconv/kernels.hpp"
#include "snnconv/rng.hpp"

using namespace snnconv;

namespace {

LayerSpec random_layer(LayerKind kind, TensorShape in, int out_channels, Rng &rng)
{
    LayerSpec l;
    l.name = "t";
    l.kind = kind;
    l.in_shape = in;
    const int k = kernel_size(kind);
    const int s = stride(kind);
    if (is_transposed(kind)) {
        l.out_shape = {in.height * s, in.width * s, out_channels};
    } else {
        l.out_shape = {(in.height - k) / s + 1, (in.width - k) / s + 1, out_channels};
    }
    l.weights.resize(l.weight_count());
    for (double &w : l.weights) {
        w = rng.uniform(-1.0, 1.0);
    }
    l.bias.resize(static_cast<std::size_t>(out_channels));
    for (double &b : l.bias) {
        b = rng.uniform(-1.0, 1.0);
    }
    return l;
}

Tensor random_tensor(TensorShape s, Rng &rng)
{
    Tensor t(s);
    for (double &v : t.data) {
        v = rng.uniform(-1.0, 1.0);
    }
    return t;
}

} // namespace

TEST_CASE("layer_forward matches the direct convolution oracle")
{
    Rng rng(17);
    const struct {
        LayerKind kind;
        TensorShape in;
        int oc;
    } cases[] = {
            {LayerKind::InputEncoder, {7, 6, 1}, 3},     {LayerKind::Conv3x3, {9, 8, 3}, 4},
            {LayerKind::Conv3x3Stride2, {11, 10, 2}, 3}, {LayerKind::Conv3x3Stride2, {12, 12, 2}, 2},
            {LayerKind::Deconv2x2Stride2, {4, 5, 3}, 2}, {LayerKind::Output1x1, {5, 5, 4}, 2},
    };
    for (const auto &c : cases) {
        const LayerSpec l = random_layer(c.kind, c.in, c.oc, rng);
        const Tensor in = random_tensor(c.in, rng);
        Tensor out;
        layer_forward(l, in, out);
        const Tensor ref = oracles::conv_reference(in, l.weights, l.bias, c.oc, kernel_size(c.kind), stride(c.kind),
                                                   is_transposed(c.kind));
        REQUIRE(out.shape == ref.shape);
        double worst = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            worst = std::max(worst, std::abs(out.data[i] - ref.data[i]));
        }
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("layer_backward matches finite differences")
{
    Rng rng(23);
    for (LayerKind kind : {LayerKind::Conv3x3, LayerKind::Conv3x3Stride2, LayerKind::Deconv2x2Stride2}) {
        const LayerSpec base = random_layer(kind, {7, 7, 2}, 2, rng);
        const Tensor in = random_tensor(base.in_shape, rng);
        Tensor probe;
        layer_forward(base, in, probe);
        const Tensor g_out = random_tensor(probe.shape, rng);
        // Scalar objective: <g_out, forward(in)>.
        auto objective = [&](const LayerSpec &l, const Tensor &x) {
            Tensor o;
            layer_forward(l, x, o);
            double s = 0.0;
            for (std::size_t i = 0; i < o.size(); ++i) {
                s += o.data[i] * g_out.data[i];
            }
            return s;
        };
        std::vector<double> gw(base.weights.size(), 0.0);
        std::vector<double> gb(base.bias.size(), 0.0);
        Tensor g_in;
        layer_backward(base, in, g_out, &g_in, gw, gb);
        const double h = 1e-6;
        for (std::size_t i = 0; i < base.weights.size(); ++i) {
            LayerSpec p = base;
            LayerSpec m = base;
            p.weights[i] += h;
            m.weights[i] -= h;
            CHECK(oracles::rel_err(gw[i], (objective(p, in) - objective(m, in)) / (2 * h), 1e-6) < 1e-6);
        }
        for (std::size_t i = 0; i < base.bias.size(); ++i) {
            LayerSpec p = base;
            LayerSpec m = base;
            p.bias[i] += h;
            m.bias[i] -= h;
            CHECK(oracles::rel_err(gb[i], (objective(p, in) - objective(m, in)) / (2 * h), 1e-6) < 1e-6);
        }
        for (std::size_t i = 0; i < in.size(); ++i) {
            Tensor p = in;
            Tensor m = in;
            p.data[i] += h;
            m.data[i] -= h;
            CHECK(oracles::rel_err(g_in.data[i], (objective(base, p) - objective(base, m)) / (2 * h), 1e-6) < 1e-6);
        }
    }
}
