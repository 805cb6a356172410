#pragma once

#include <vector>

#include "snnconv/netgraph.hpp"
#include "snnconv/tensor.hpp"

namespace snnconv {

/// Pre-activation drive of a weight-bearing layer: out = W * in + b.
/// `in` must have the layer's in_shape; `out` is resized to out_shape.
void layer_forward(const LayerSpec &layer, const Tensor &in, Tensor &out);

/// Backward pass of layer_forward. Accumulates into grad_w / grad_b (sized
/// weight_count() / out channels) and, if grad_in is non-null, overwrites it
/// with d loss / d in.
void layer_backward(const LayerSpec &layer, const Tensor &in, const Tensor &grad_out, Tensor *grad_in,
                    std::vector<double> &grad_w, std::vector<double> &grad_b);

/// Copies each producer of a concat (center-cropped) into its channel range.
void concat_forward(const NetworkGraph &graph, int layer, const std::vector<Tensor> &outs, Tensor &joined);

} // namespace snnconv
