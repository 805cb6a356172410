#include "snnconv/quantizer.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "snnconv/errors.hpp"

namespace snnconv {

void check(const ChipLimits &limits)
{
    if (limits.mantissa_max < 1 || limits.u_max < 1 || limits.v_max < 1 || limits.b_max < 1 ||
        limits.decay_bits != 12) {
        throw std::invalid_argument("chip limits must be positive (and decay_bits = 12)");
    }
    if (limits.a_min > limits.a_start) {
        throw std::invalid_argument("chip limits: a_min must be <= a_start");
    }
}

int decay_constant(double tau_s, double dt)
{
    if (!(tau_s > 0.0) || !(dt > 0.0)) {
        throw std::invalid_argument("decay_constant needs tau_s > 0 and dt > 0");
    }
    const double d = std::floor(4095.0 * -std::expm1(-dt / tau_s));
    return static_cast<int>(std::clamp(d, 0.0, 4095.0));
}

double decay_integral_exact(std::int64_t u0, int delta_u)
{
    if (u0 < 1) {
        throw std::invalid_argument("decay_integral_exact needs u0 >= 1");
    }
    if (delta_u < 0 || delta_u > 4095) {
        throw std::invalid_argument("delta_u must be in [0, 4095]");
    }
    if (delta_u == 0) {
        throw std::invalid_argument("delta_u = 0 never decays");
    }
    const std::int64_t keep = 4096 - delta_u;
    std::int64_t u = u0;
    std::int64_t sum = 0;
    while (u > 0) {
        sum += u;
        u = (u * keep) >> 12;
    }
    return static_cast<double>(sum) / static_cast<double>(u0);
}

double decay_integral_approx(double u0, int delta_u, double q)
{
    if (!(u0 >= 1.0)) {
        throw std::invalid_argument("decay_integral_approx needs u0 >= 1");
    }
    if (delta_u <= 0 || delta_u > 4095) {
        throw std::invalid_argument("decay_integral_approx needs 0 < delta_u <= 4095");
    }
    if (!(q > 0.0)) {
        throw std::invalid_argument("decay_integral_approx needs q > 0");
    }
    const double r = (4096.0 - delta_u) / 4096.0;
    const double arg = (1.0 - r) * u0 / q;
    if (arg <= 1.0) {
        return 1.0;
    }
    // Steps until the geometric decay falls to the per-step rounding loss q.
    const double n = std::log(arg) / -std::log(r);
    const double geo = (1.0 - std::pow(r, n + 1.0)) / (1.0 - r);
    return geo - q * (n + 1.0 - geo) / ((1.0 - r) * u0);
}

double weight_scale(const std::vector<double> &weights, int mantissa_max)
{
    double m = 0.0;
    for (double w : weights) {
        m = std::max(m, std::fabs(w));
    }
    if (m == 0.0) {
        throw std::invalid_argument("weight_scale: all weights are zero");
    }
    return mantissa_max / m;
}

std::int64_t round_away(double x)
{
    return static_cast<std::int64_t>(x < 0.0 ? -std::floor(-x + 0.5) : std::floor(x + 0.5));
}

const LayerQuant &QuantizationResult::at(int layer) const
{
    const LayerQuant &lq = layers.at(static_cast<std::size_t>(layer));
    if (lq.layer != layer) {
        throw std::out_of_range("layer " + std::to_string(layer) + " has no quantized parameters");
    }
    return lq;
}

QuantizationResult quantize(const NetworkGraph &graph, const ChipLimits &limits, double v_th, double q)
{
    check(limits);
    if (!(v_th > 0.0)) {
        throw std::invalid_argument("quantize: v_th must be > 0");
    }
    QuantizationResult res;
    res.limits = limits;
    res.q = q;
    res.v_th_float = v_th;
    res.delta_u = decay_constant(graph.tau_s, graph.dt);
    res.delta_v = 0;
    res.y_hat = decay_integral_approx(std::ldexp(1.0, 23), res.delta_u, q);
    res.layers.resize(graph.layers.size());

    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const LayerSpec &spec = graph.layers[i];
        if (!spec.has_params()) {
            continue;
        }
        LayerQuant &lq = res.layers[i];
        lq.layer = static_cast<int>(i);
        lq.name = spec.name;
        lq.spiking = spec.is_spiking();
        lq.input_scale = spec.kind == LayerKind::InputEncoder ? graph.dt : graph.amplitude;
        std::vector<double> eff(spec.weights.size());
        for (std::size_t k = 0; k < eff.size(); ++k) {
            eff[k] = spec.weights[k] * lq.input_scale;
        }
        try {
            lq.c = weight_scale(eff, limits.mantissa_max);
        } catch (const std::invalid_argument &) {
            throw QuantizationError("layer '" + spec.name + "': all weights are zero");
        }
        lq.mantissas.resize(eff.size());
        for (std::size_t k = 0; k < eff.size(); ++k) {
            const std::int64_t m = round_away(eff[k] * lq.c);
            lq.mantissas[k] = static_cast<std::int32_t>(std::clamp<std::int64_t>(m, -limits.mantissa_max, limits.mantissa_max));
        }
        bool found = false;
        for (int a = limits.a_start; a >= limits.a_min; --a) {
            lq.exponent_trace.push_back(a);
            // One unit of float voltage corresponds to 2^a c y_hat integer
            // voltage units: a spike of weight w lands as m 2^a in u, which
            // integrates to m 2^a y_hat in v.
            const double unit = std::ldexp(lq.c * res.y_hat, a);
            const std::int64_t vth = round_away(v_th * unit);
            bool ok = !lq.spiking || (vth >= 1 && vth < limits.v_max);
            std::vector<std::int32_t> bias(spec.bias.size());
            for (std::size_t k = 0; k < bias.size() && ok; ++k) {
                const std::int64_t b = round_away(spec.bias[k] * graph.dt * unit);
                if (std::llabs(b) >= limits.b_max) {
                    ok = false;
                }
                bias[k] = static_cast<std::int32_t>(b);
            }
            if (ok) {
                lq.a = a;
                lq.v_th = lq.spiking ? vth : 0;
                lq.bias = std::move(bias);
                found = true;
                break;
            }
        }
        if (!found) {
            std::ostringstream os;
            os << "layer '" << spec.name << "': no exponent in [" << limits.a_min << ", "
               << limits.a_start << "] fits v_max=" << limits.v_max << " and b_max=" << limits.b_max
               << " (c=" << lq.c << ", y_hat=" << res.y_hat << ")";
            throw QuantizationError(os.str());
        }
    }
    const auto problems = check_result(graph, res);
    if (!problems.empty()) {
        throw QuantizationError("quantization invariant violated: " + problems.front());
    }
    return res;
}

std::vector<std::string> check_result(const NetworkGraph &graph, const QuantizationResult &res)
{
    std::vector<std::string> out;
    const ChipLimits &lim = res.limits;
    if (res.delta_u < 0 || res.delta_u > 4095 || res.delta_v < 0 || res.delta_v > 4095) {
        out.push_back("decay constants outside [0, 4095]");
    }
    if (res.delta_v != 0) {
        out.push_back("delta_v must be 0 for this neuron type");
    }
    if (res.layers.size() != graph.layers.size()) {
        out.push_back("layer count mismatch");
        return out;
    }
    for (std::size_t i = 0; i < graph.layers.size(); ++i) {
        const LayerSpec &spec = graph.layers[i];
        const LayerQuant &lq = res.layers[i];
        const std::string tag = "layer '" + spec.name + "': ";
        if (!spec.has_params()) {
            if (lq.layer != -1) {
                out.push_back(tag + "concat must not carry parameters");
            }
            continue;
        }
        if (lq.layer != static_cast<int>(i)) {
            out.push_back(tag + "missing quantized parameters");
            continue;
        }
        if (lq.mantissas.size() != spec.weights.size() || lq.bias.size() != spec.bias.size()) {
            out.push_back(tag + "tensor sizes differ from the graph");
            continue;
        }
        for (std::int32_t m : lq.mantissas) {
            if (std::abs(m) > lim.mantissa_max) {
                out.push_back(tag + "mantissa " + std::to_string(m) + " out of range");
                break;
            }
        }
        for (std::int32_t b : lq.bias) {
            if (std::abs(static_cast<std::int64_t>(b)) > lim.b_max) {
                out.push_back(tag + "bias " + std::to_string(b) + " exceeds b_max");
                break;
            }
        }
        if (lq.spiking && (lq.v_th < 1 || lq.v_th > lim.v_max)) {
            out.push_back(tag + "threshold " + std::to_string(lq.v_th) + " not in [1, v_max]");
        }
        if (lq.a < lim.a_min || lq.a > lim.a_start) {
            out.push_back(tag + "exponent outside the search range");
        }
        if (lq.exponent_trace.empty() || lq.exponent_trace.front() != lim.a_start ||
            lq.exponent_trace.back() != lq.a) {
            out.push_back(tag + "exponent trace inconsistent");
        }
    }
    return out;
}

std::vector<BlobTensor> quant_tensors(const QuantizationResult &res)
{
    std::vector<BlobTensor> tensors;
    for (const LayerQuant &lq : res.layers) {
        if (lq.layer < 0) {
            continue;
        }
        tensors.push_back(make_i32(lq.name + ".mantissa", {static_cast<std::uint32_t>(lq.mantissas.size())},
                                   lq.mantissas));
        tensors.push_back(make_i32(lq.name + ".bias", {static_cast<std::uint32_t>(lq.bias.size())}, lq.bias));
    }
    return tensors;
}

std::string quant_to_json(const QuantizationResult &res, const std::string &blob_name)
{
    using nlohmann::json;
    const auto tensors = quant_tensors(res);
    const auto offsets = blob_offsets(tensors);
    json doc;
    doc["format"] = "snnconv-quant";
    doc["version"] = 1;
    doc["blob"] = blob_name;
    doc["delta_u"] = res.delta_u;
    doc["delta_v"] = res.delta_v;
    doc["y_hat"] = res.y_hat;
    doc["q"] = res.q;
    doc["v_th_float"] = res.v_th_float;
    doc["limits"] = {{"mantissa_max", res.limits.mantissa_max}, {"u_max", res.limits.u_max},
                     {"v_max", res.limits.v_max},           {"b_max", res.limits.b_max},
                     {"decay_bits", res.limits.decay_bits},  {"a_start", res.limits.a_start},
                     {"a_min", res.limits.a_min}};
    json layers = json::array();
    std::size_t t = 0;
    for (const LayerQuant &lq : res.layers) {
        if (lq.layer < 0) {
            layers.push_back(nullptr);
            continue;
        }
        layers.push_back({{"layer", lq.layer},
                          {"name", lq.name},
                          {"spiking", lq.spiking},
                          {"input_scale", lq.input_scale},
                          {"c", lq.c},
                          {"a", lq.a},
                          {"exponent_trace", lq.exponent_trace},
                          {"v_th", lq.v_th},
                          {"mantissa", {{"tensor", tensors[t].name}, {"offset", offsets[t]}}},
                          {"bias", {{"tensor", tensors[t + 1].name}, {"offset", offsets[t + 1]}}}});
        t += 2;
    }
    doc["layers"] = layers;
    return doc.dump(2) + "\n";
}

void save_quant(const QuantizationResult &res, const std::string &json_path)
{
    std::filesystem::path blob = json_path;
    blob.replace_extension(".spkf");
    write_blob(blob, quant_tensors(res));
    write_file(json_path, quant_to_json(res, blob.filename().string()));
}

QuantizationResult load_quant(const std::string &json_path)
{
    using nlohmann::json;
    const std::filesystem::path path = json_path;
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception &e) {
        throw std::runtime_error(json_path + ": " + e.what());
    }
    if (doc.value("format", "") != "snnconv-quant") {
        throw std::runtime_error(json_path + ": not a quantization document");
    }
    const auto tensors = read_blob(path.parent_path() / doc.at("blob").get<std::string>());
    QuantizationResult res;
    res.delta_u = doc.at("delta_u").get<int>();
    res.delta_v = doc.at("delta_v").get<int>();
    res.y_hat = doc.at("y_hat").get<double>();
    res.q = doc.at("q").get<double>();
    res.v_th_float = doc.at("v_th_float").get<double>();
    const json &lim = doc.at("limits");
    res.limits.mantissa_max = lim.at("mantissa_max").get<int>();
    res.limits.u_max = lim.at("u_max").get<std::int64_t>();
    res.limits.v_max = lim.at("v_max").get<std::int64_t>();
    res.limits.b_max = lim.at("b_max").get<std::int64_t>();
    res.limits.decay_bits = lim.at("decay_bits").get<int>();
    res.limits.a_start = lim.at("a_start").get<int>();
    res.limits.a_min = lim.at("a_min").get<int>();
    for (const json &jl : doc.at("layers")) {
        LayerQuant lq;
        if (!jl.is_null()) {
            lq.layer = jl.at("layer").get<int>();
            lq.name = jl.at("name").get<std::string>();
            lq.spiking = jl.at("spiking").get<bool>();
            lq.input_scale = jl.at("input_scale").get<double>();
            lq.c = jl.at("c").get<double>();
            lq.a = jl.at("a").get<int>();
            lq.exponent_trace = jl.at("exponent_trace").get<std::vector<int>>();
            lq.v_th = jl.at("v_th").get<std::int64_t>();
            lq.mantissas = find_tensor(tensors, jl["mantissa"].at("tensor").get<std::string>()).i32;
            lq.bias = find_tensor(tensors, jl["bias"].at("tensor").get<std::string>()).i32;
        }
        res.layers.push_back(std::move(lq));
    }
    return res;
}

} // namespace snnconv
