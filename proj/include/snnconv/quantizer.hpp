#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snnconv/blob.hpp"
#include "snnconv/netgraph.hpp"

namespace snnconv {

struct ChipLimits {
    int mantissa_max = 255;
    std::int64_t u_max = (std::int64_t{1} << 23) - 1;
    std::int64_t v_max = (std::int64_t{1} << 23) - 1;
    std::int64_t b_max = (1 << 12) - 1;
    int decay_bits = 12;
    int a_start = 6;
    int a_min = -8;
};

void check(const ChipLimits &limits);

/// floor((2^12 - 1) * (1 - exp(-dt / tau_s))).
int decay_constant(double tau_s, double dt);

/// Sum over t of u[t] / u0 for u[t] = floor(u[t-1] (4096 - delta) / 4096),
/// iterated until u reaches 0.
double decay_integral_exact(std::int64_t u0, int delta_u);

/// Closed-form estimate of decay_integral_exact treating the floor as a
/// constant loss of q per step.
double decay_integral_approx(double u0, int delta_u, double q = 0.494);

/// 255 / max|w|; throws std::invalid_argument if every weight is zero.
double weight_scale(const std::vector<double> &weights, int mantissa_max = 255);

/// Round half away from zero.
std::int64_t round_away(double x);

struct LayerQuant {
    int layer = -1;
    std::string name;
    bool spiking = true;
    double input_scale = 0.0;  // amplitude for spike inputs, dt for the encoder's pixel current
    double c = 0.0;            // mantissa scale on the effective weights
    int a = 0;                 // shared weight exponent
    std::vector<int> exponent_trace;  // exponents tried, starting at a_start
    std::vector<std::int32_t> mantissas;  // same layout as LayerSpec::weights
    std::int64_t v_th = 0;
    std::vector<std::int32_t> bias;
};

struct QuantizationResult {
    int delta_u = 0;
    int delta_v = 0;
    double y_hat = 0.0;
    double q = 0.494;
    double v_th_float = 1.0;
    ChipLimits limits;
    std::vector<LayerQuant> layers;  // indexed by layer id; concat entries have layer = -1

    [[nodiscard]] const LayerQuant &at(int layer) const;
};

/// Per-layer c and exponent search. Each layer's incoming effective weights
/// share c = 255 / max|w_eff|; the exponent starts at a_start and drops until
/// the threshold and every bias fit. Throws QuantizationError (with the trace)
/// if a_min is passed.
QuantizationResult quantize(const NetworkGraph &graph, const ChipLimits &limits, double v_th = 1.0,
                            double q = 0.494);

/// Empty iff every result invariant holds for `graph`.
std::vector<std::string> check_result(const NetworkGraph &graph, const QuantizationResult &result);

std::vector<BlobTensor> quant_tensors(const QuantizationResult &result);
std::string quant_to_json(const QuantizationResult &result, const std::string &blob_name);
void save_quant(const QuantizationResult &result, const std::string &json_path);
QuantizationResult load_quant(const std::string &json_path);

} // namespace snnconv
