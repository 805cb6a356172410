#include "snnconv/kernels.hpp"

#include <stdexcept>

namespace snnconv {

namespace {

void check_shapes(const LayerSpec &layer, const Tensor &in)
{
    if (!layer.has_params()) {
        throw std::invalid_argument("layer '" + layer.name + "' has no parameters");
    }
    if (in.shape != layer.in_shape) {
        throw std::invalid_argument("layer '" + layer.name + "' expects input " +
                                    layer.in_shape.str() + ", got " + in.shape.str());
    }
}

} // namespace

void layer_forward(const LayerSpec &layer, const Tensor &in, Tensor &out)
{
    check_shapes(layer, in);
    const int k = kernel_size(layer.kind);
    const int s = stride(layer.kind);
    const TensorShape os = layer.out_shape;
    const int ic_n = layer.in_shape.channels;
    out = Tensor(os);
    for (int oc = 0; oc < os.channels; ++oc) {
        double *o = &out.at(oc, 0, 0);
        const double b = layer.bias[static_cast<std::size_t>(oc)];
        for (int i = 0; i < os.height * os.width; ++i) {
            o[i] = b;
        }
    }
    if (is_transposed(layer.kind)) {
        const TensorShape is = layer.in_shape;
        for (int oc = 0; oc < os.channels; ++oc) {
            for (int ic = 0; ic < ic_n; ++ic) {
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const double w = layer.weights[layer.weight_index(oc, ic, ky, kx)];
                        for (int y = 0; y < is.height; ++y) {
                            const double *src = &in.at(ic, y, 0);
                            double *dst = &out.at(oc, y * s + ky, kx);
                            for (int x = 0; x < is.width; ++x) {
                                dst[x * s] += w * src[x];
                            }
                        }
                    }
                }
            }
        }
        return;
    }
    for (int oc = 0; oc < os.channels; ++oc) {
        for (int ic = 0; ic < ic_n; ++ic) {
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double w = layer.weights[layer.weight_index(oc, ic, ky, kx)];
                    for (int y = 0; y < os.height; ++y) {
                        const double *src = &in.at(ic, y * s + ky, kx);
                        double *dst = &out.at(oc, y, 0);
                        for (int x = 0; x < os.width; ++x) {
                            dst[x] += w * src[x * s];
                        }
                    }
                }
            }
        }
    }
}

void layer_backward(const LayerSpec &layer, const Tensor &in, const Tensor &grad_out, Tensor *grad_in,
                    std::vector<double> &grad_w, std::vector<double> &grad_b)
{
    check_shapes(layer, in);
    if (grad_out.shape != layer.out_shape) {
        throw std::invalid_argument("layer '" + layer.name + "' gradient shape mismatch");
    }
    const int k = kernel_size(layer.kind);
    const int s = stride(layer.kind);
    const TensorShape os = layer.out_shape;
    const TensorShape is = layer.in_shape;
    if (grad_in != nullptr) {
        *grad_in = Tensor(is);
    }
    for (int oc = 0; oc < os.channels; ++oc) {
        const double *g = &grad_out.at(oc, 0, 0);
        double sum = 0.0;
        for (int i = 0; i < os.height * os.width; ++i) {
            sum += g[i];
        }
        grad_b[static_cast<std::size_t>(oc)] += sum;
    }
    const bool transposed = is_transposed(layer.kind);
    // Iterate over the input-side grid for transposed layers and the
    // output-side grid otherwise, so each (y, x) pairs one input and one
    // output pixel per kernel tap.
    const int gh = transposed ? is.height : os.height;
    const int gw = transposed ? is.width : os.width;
    for (int oc = 0; oc < os.channels; ++oc) {
        for (int ic = 0; ic < is.channels; ++ic) {
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const std::size_t wi = layer.weight_index(oc, ic, ky, kx);
                    const double w = layer.weights[wi];
                    double acc = 0.0;
                    for (int y = 0; y < gh; ++y) {
                        const double *src;
                        const double *g;
                        double *gi = nullptr;
                        if (transposed) {
                            src = &in.at(ic, y, 0);
                            g = &grad_out.at(oc, y * s + ky, kx);
                            if (grad_in != nullptr) {
                                gi = &grad_in->at(ic, y, 0);
                            }
                            for (int x = 0; x < gw; ++x) {
                                acc += g[x * s] * src[x];
                                if (gi != nullptr) {
                                    gi[x] += w * g[x * s];
                                }
                            }
                        } else {
                            src = &in.at(ic, y * s + ky, kx);
                            g = &grad_out.at(oc, y, 0);
                            if (grad_in != nullptr) {
                                gi = &grad_in->at(ic, y * s + ky, kx);
                            }
                            for (int x = 0; x < gw; ++x) {
                                acc += g[x] * src[x * s];
                                if (gi != nullptr) {
                                    gi[x * s] += w * g[x];
                                }
                            }
                        }
                    }
                    grad_w[wi] += acc;
                }
            }
        }
    }
}

void concat_forward(const NetworkGraph &graph, int layer, const std::vector<Tensor> &outs, Tensor &joined)
{
    const LayerSpec &spec = graph.layers[static_cast<std::size_t>(layer)];
    joined = Tensor(spec.out_shape);
    int channel = 0;
    for (int p : graph.producers(layer)) {
        const Tensor &src = outs[static_cast<std::size_t>(p)];
        const int oy = (src.shape.height - spec.out_shape.height) / 2;
        const int ox = (src.shape.width - spec.out_shape.width) / 2;
        for (int c = 0; c < src.shape.channels; ++c) {
            for (int y = 0; y < spec.out_shape.height; ++y) {
                for (int x = 0; x < spec.out_shape.width; ++x) {
                    joined.at(channel + c, y, x) = src.at(c, y + oy, x + ox);
                }
            }
        }
        channel += src.shape.channels;
    }
}

} // namespace snnconv
