#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "snnconv/data.hpp"
#include "snnconv/errors.hpp"
#include "snnconv/trainer.hpp"

using namespace snnconv;

namespace {

NetworkGraph tiny_graph(std::uint64_t seed = 5)
{
    UNetConfig c;
    c.input_size = 12;
    c.base_channels = 2;
    c.meta_layers = 1;
    c.seed = seed;
    return build_unet(c);
}

std::vector<ImageSample> tiny_data(std::size_t n, int size)
{
    return synth_cells(9, n, size);
}

// Total surrogate-mode loss of a batch for the current parameters.
double surrogate_loss(const NetworkGraph &g, const std::vector<const ImageSample *> &batch,
                      const RegularizerParams &reg)
{
    const BatchForward fwd = forward_batch(g, batch, ForwardMode::Surrogate, 0, 1);
    return compute_loss(g, fwd, reg).total();
}

} // namespace

TEST_CASE("backward_pass matches finite differences of the surrogate loss on a tiny network")
{
    NetworkGraph g = tiny_graph();
    REQUIRE(param_count(g) <= 500);
    const auto data = tiny_data(2, 12);
    const std::vector<const ImageSample *> batch{&data[0], &data[1]};
    RegularizerParams reg;
    reg.weight = 1e-4;

    const BatchForward fwd = forward_batch(g, batch, ForwardMode::Surrogate, 0, 1);
    const Gradients grads = backward_pass(g, fwd, compute_loss(g, fwd, reg), 1);

    int checked = 0;
    double worst = 0.0;
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        for (std::size_t k = 0; k < g.layers[l].weights.size(); ++k) {
            const double w0 = g.layers[l].weights[k];
            const double h = std::max(1e-6, 1e-5 * std::abs(w0));
            g.layers[l].weights[k] = w0 + h;
            const double lp = surrogate_loss(g, batch, reg);
            g.layers[l].weights[k] = w0 - h;
            const double lm = surrogate_loss(g, batch, reg);
            g.layers[l].weights[k] = w0;
            const double fd = (lp - lm) / (2 * h);
            worst = std::max(worst, std::abs(fd - grads.weight[l][k]) / std::max(std::abs(fd), 1e-6));
            ++checked;
        }
        for (std::size_t k = 0; k < g.layers[l].bias.size(); ++k) {
            const double b0 = g.layers[l].bias[k];
            const double h = std::max(1e-3, 1e-5 * std::abs(b0));
            g.layers[l].bias[k] = b0 + h;
            const double lp = surrogate_loss(g, batch, reg);
            g.layers[l].bias[k] = b0 - h;
            const double lm = surrogate_loss(g, batch, reg);
            g.layers[l].bias[k] = b0;
            const double fd = (lp - lm) / (2 * h);
            worst = std::max(worst, std::abs(fd - grads.bias[l][k]) / std::max(std::abs(fd), 1e-6));
            ++checked;
        }
    }
    CHECK(checked == param_count(g));
    CHECK(worst < 1e-3);
}

TEST_CASE("training is independent of the thread count")
{
    const NetworkGraph g = tiny_graph();
    const auto data = tiny_data(6, 12);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 3;
    cfg.seed = 4;
    cfg.threads = 1;
    const TrainResult a = train(g, data, cfg);
    cfg.threads = 4;
    const TrainResult b = train(g, data, cfg);
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        CHECK(a.graph.layers[l].weights == b.graph.layers[l].weights);
        CHECK(a.graph.layers[l].bias == b.graph.layers[l].bias);
    }
    CHECK(history_jsonl(a.history) == history_jsonl(b.history));
}

TEST_CASE("training lowers the task loss")
{
    const NetworkGraph g = tiny_graph();
    const auto data = tiny_data(20, 12);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 5;
    cfg.seed = 1;
    cfg.threads = 1;
    const TrainResult r = train(g, data, cfg);
    REQUIRE(r.history.size() == 8);
    CHECK(r.history.back().task_loss < r.history.front().task_loss);
}

TEST_CASE("predict_mask breaks ties toward the background class")
{
    Tensor logits({1, 3, 2});
    logits.at(0, 0, 0) = 1.0;
    logits.at(1, 0, 0) = 2.0;
    logits.at(0, 0, 1) = 0.5;
    logits.at(1, 0, 1) = 0.5;
    logits.at(0, 0, 2) = 3.0;
    logits.at(1, 0, 2) = -1.0;
    CHECK(predict_mask(logits) == Mask{1, 0, 0});
}

TEST_CASE("train rejects bad configs and empty data")
{
    const NetworkGraph g = tiny_graph();
    const auto data = tiny_data(2, 12);
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(g, data, cfg), std::invalid_argument);
    cfg = TrainConfig{};
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(train(g, data, cfg), std::invalid_argument);
    CHECK_THROWS_AS(train(g, {}, TrainConfig{}), std::invalid_argument);
}

TEST_CASE("a non-finite loss raises NumericalError")
{
    NetworkGraph g = tiny_graph();
    g.layers[static_cast<std::size_t>(g.output_layer())].bias[0] = std::nan("");
    const auto data = tiny_data(4, 12);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 2;
    cfg.threads = 1;
    CHECK_THROWS_AS(train(g, data, cfg), NumericalError);
}

TEST_CASE("evaluate reports per-layer p99 rates of every spiking layer")
{
    const NetworkGraph g = tiny_graph();
    const auto data = tiny_data(3, 12);
    const EvalResult r = evaluate(g, data, RegularizerParams{}, 1);
    int spiking = 0;
    for (const LayerSpec &l : g.layers) {
        spiking += l.is_spiking() ? 1 : 0;
    }
    CHECK(static_cast<int>(r.layers.size()) == spiking);
    CHECK(r.layer_p99.size() == r.layers.size());
    for (std::size_t i = 0; i < r.layers.size(); ++i) {
        CHECK(r.layer_p99[i] >= r.layer_mean[i] - 1e-9);
        CHECK(r.layer_p99[i] <= 1.0 / g.dt + 1e-9);
    }
    CHECK(r.pixel_accuracy >= 0.0);
    CHECK(r.pixel_accuracy <= 1.0);
}
