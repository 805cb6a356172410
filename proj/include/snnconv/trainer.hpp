#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnconv/data.hpp"
#include "snnconv/netgraph.hpp"
#include "snnconv/ratemodel.hpp"
#include "snnconv/rng.hpp"
#include "snnconv/tensor.hpp"

namespace snnconv {

enum class ForwardMode {
    TrainNoisy,  // period-rounded rate with sampled filter noise
    EvalRate,    // period-rounded rate
    Surrogate,   // the smooth backward nonlinearity; for gradient checks
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 10;
    double learning_rate = 0.05;
    double momentum = 0.9;
    double grad_clip = 0.0;  // global-norm clip on normalized parameters, 0 = off
    std::uint64_t seed = 0;
    RegularizerParams reg;
    bool noise_enabled = true;
    unsigned threads = 0;
};

void check(const TrainConfig &config);

RateNeuronParams rate_params(const NetworkGraph &graph);

/// Per-layer tensors of one forward evaluation.
struct ForwardState {
    std::vector<Tensor> drive;  // pre-activation drive x (Hz); empty for concat
    std::vector<Tensor> out;    // amplitude * rate, logits for the head, joined input for concat
    std::vector<Tensor> rate;   // Hz; spiking layers only
};

Tensor image_tensor(const ImageSample &sample);

/// `noise` must be non-null in TrainNoisy mode; one uniform is drawn per
/// spiking neuron in layer order.
ForwardState forward_pass(const NetworkGraph &graph, const Tensor &image, ForwardMode mode,
                          Rng *noise = nullptr);

struct BatchForward {
    std::vector<Tensor> inputs;
    std::vector<ForwardState> states;
    std::vector<Mask> labels;  // center-cropped to the output extent
};

BatchForward forward_batch(const NetworkGraph &graph, const std::vector<const ImageSample *> &batch,
                           ForwardMode mode, std::uint64_t noise_seed, unsigned threads);

struct LossTerms {
    double task = 0.0;  // mean per-pixel cross-entropy
    double reg = 0.0;   // weight * sum over spiking layers of the percentile penalty
    [[nodiscard]] double total() const { return task + reg; }
    std::vector<Tensor> dlogits;                  // per sample
    std::vector<std::vector<Tensor>> drate;       // per sample, per layer (Hz^-1), may be empty tensors
};

LossTerms compute_loss(const NetworkGraph &graph, const BatchForward &fwd, const RegularizerParams &reg);

/// Gradients w.r.t. the physical (Hz-unit) weights and biases, per layer.
struct Gradients {
    std::vector<std::vector<double>> weight;
    std::vector<std::vector<double>> bias;
};

/// Backpropagates with backward_rate_grad as the activation derivative
/// regardless of the forward mode.
Gradients backward_pass(const NetworkGraph &graph, const BatchForward &fwd, const LossTerms &loss,
                        unsigned threads);

struct EpochRecord {
    int epoch = 0;
    double task_loss = 0.0;
    double reg_loss = 0.0;
    double train_accuracy = 0.0;
};

struct TrainResult {
    NetworkGraph graph;
    std::vector<EpochRecord> history;
};

/// Minibatch SGD with momentum over the amplitude-normalised parameters.
/// Throws NumericalError on a non-finite loss.
TrainResult train(const NetworkGraph &graph, const std::vector<ImageSample> &dataset,
                  const TrainConfig &config);

struct EvalResult {
    double pixel_accuracy = 0.0;
    double mean_iou = 0.0;
    std::vector<int> layers;          // spiking layer ids
    std::vector<double> layer_p99;    // 99th percentile of all rates in the layer, Hz
    std::vector<double> layer_mean;   // mean rate, Hz
    double outside_band = 0.0;        // fraction of neurons whose own p99 is outside [f_min, f_max]
    std::vector<Mask> predictions;
};

EvalResult evaluate(const NetworkGraph &graph, const std::vector<ImageSample> &dataset,
                    const RegularizerParams &reg, unsigned threads);

/// Per-pixel argmax over the two head channels (ties go to class 0).
Mask predict_mask(const Tensor &logits);

std::string history_jsonl(const std::vector<EpochRecord> &history);

} // namespace snnconv
