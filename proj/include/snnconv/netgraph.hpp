#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnconv/tensor.hpp"

namespace snnconv {

enum class LayerKind {
    InputEncoder,    // trainable 1x1 conv turning the image into spikes
    Conv3x3,         // non-padded, stride 1
    Conv3x3Stride2,  // non-padded, stride 2 (stands in for max pooling)
    Deconv2x2Stride2,
    Concat,          // copy-and-crop join, pure routing
    Output1x1,       // 2-class head, read out as accumulated drive
};

enum class Activation { SpikingRelu, None };

const char *to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string &name);

/// Square kernel side for weight-bearing layers, 0 for concat.
int kernel_size(LayerKind kind);
/// Convolution stride (or upsampling factor for the transposed conv).
int stride(LayerKind kind);
bool is_transposed(LayerKind kind);

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Conv3x3;
    TensorShape in_shape;
    TensorShape out_shape;
    // Weights are stored [out_channel][in_channel][ky][kx] in physical units:
    // drive in Hz per unit of the producer's (amplitude-scaled) output.
    std::vector<double> weights;
    std::vector<double> bias;  // Hz
    Activation activation = Activation::SpikingRelu;

    [[nodiscard]] bool has_params() const { return kind != LayerKind::Concat; }
    [[nodiscard]] bool is_spiking() const { return activation == Activation::SpikingRelu; }
    [[nodiscard]] std::size_t weight_count() const;
    /// Flat index into `weights`.
    [[nodiscard]] std::size_t weight_index(int oc, int ic, int ky, int kx) const;
};

/// Producer -> consumer edge. Edges into a concat are center-cropped to the
/// concat's spatial extent.
struct Edge {
    int from = 0;
    int to = 0;
    friend bool operator==(const Edge &, const Edge &) = default;
};

struct NetworkGraph {
    std::vector<LayerSpec> layers;
    std::vector<Edge> edges;
    TensorShape input_shape;  // the grayscale image fed to the encoder
    double dt = 0.001;        // s
    double tau_s = 0.005;     // s, synaptic filter time constant
    double amplitude = 0.01;  // neuron output scale folded into efferent weights

    [[nodiscard]] std::vector<int> producers(int layer) const;
    [[nodiscard]] std::vector<int> consumers(int layer) const;
    [[nodiscard]] int output_layer() const;
    [[nodiscard]] int encoder_layer() const;
};

/// One afferent of a weight-bearing layer after looking through concats.
struct InputSlice {
    int producer = 0;
    int channel_offset = 0;  // where the producer's channels land in the consumer input
    int crop_y = 0;          // producer row = consumer-input row + crop_y
    int crop_x = 0;
};

/// Afferent producers of `layer` with their channel/crop placement.
std::vector<InputSlice> resolve_inputs(const NetworkGraph &graph, int layer);

struct UNetConfig {
    int input_size = 16;
    int base_channels = 2;
    int meta_layers = 1;
    double dt = 0.001;
    double tau_s = 0.005;
    double amplitude = 0.01;
    int encoder_channels = 0;  // 0: max(1, base_channels / 4)
    std::uint64_t seed = 0;
};

/// Builds the scaled-down U-Net: 1x1 input encoder, contractive meta-layers
/// (two 3x3 convs each, stride-2 conv between scales), expansive meta-layers
/// (2x2 transposed conv, copy-and-crop concat, two 3x3 convs) and a 1x1
/// two-class head. Throws std::invalid_argument naming the first layer whose
/// spatial extent would drop below one pixel.
NetworkGraph build_unet(const UNetConfig &config);

/// Empty iff every layer/graph invariant holds.
std::vector<std::string> validate(const NetworkGraph &graph);

/// Layers in dependency order; throws std::invalid_argument on a cycle.
std::vector<int> topological_order(const NetworkGraph &graph);

/// Spiking neurons only (concat and the non-spiking head contribute 0).
long neuron_count(const NetworkGraph &graph);
/// Every simulated compartment, including the output head.
long compartment_count(const NetworkGraph &graph);
long param_count(const NetworkGraph &graph);

/// Rescales spiking layers so the amplitude-normalised parameters stay fixed,
/// which changes firing rates by old/new while preserving the rate-mode
/// function in the dt -> 0 limit.
NetworkGraph with_amplitude(const NetworkGraph &graph, double amplitude);

} // namespace snnconv
