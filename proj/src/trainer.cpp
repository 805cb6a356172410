#include "snnconv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "snnconv/errors.hpp"
#include "snnconv/kernels.hpp"
#include "snnconv/parallel.hpp"

namespace snnconv {

void check(const TrainConfig &config)
{
    if (config.epochs < 0 || config.batch_size < 1) {
        throw std::invalid_argument("train: epochs must be >= 0 and batch_size >= 1");
    }
    if (!(config.learning_rate > 0.0) || !(config.momentum >= 0.0) || !(config.momentum < 1.0) ||
        !(config.grad_clip >= 0.0)) {
        throw std::invalid_argument("train: need learning_rate > 0, 0 <= momentum < 1, grad_clip >= 0");
    }
    check(config.reg);
}

RateNeuronParams rate_params(const NetworkGraph &graph)
{
    return {graph.dt, graph.tau_s, graph.amplitude};
}

Tensor image_tensor(const ImageSample &sample)
{
    Tensor t({sample.height, sample.width, 1});
    t.data = sample.image;
    return t;
}

namespace {

void split(const NetworkGraph &graph, int layer, const Tensor &grad, std::vector<Tensor> &grads)
{
    const LayerSpec &spec = graph.layers[static_cast<std::size_t>(layer)];
    int channel = 0;
    for (int p : graph.producers(layer)) {
        Tensor &dst = grads[static_cast<std::size_t>(p)];
        const int oy = (dst.shape.height - spec.out_shape.height) / 2;
        const int ox = (dst.shape.width - spec.out_shape.width) / 2;
        for (int c = 0; c < dst.shape.channels; ++c) {
            for (int y = 0; y < spec.out_shape.height; ++y) {
                for (int x = 0; x < spec.out_shape.width; ++x) {
                    dst.at(c, y + oy, x + ox) += grad.at(channel + c, y, x);
                }
            }
        }
        channel += dst.shape.channels;
    }
}

const Tensor &layer_input(const NetworkGraph &graph, int layer, const Tensor &image,
                          const std::vector<Tensor> &outs)
{
    const LayerSpec &spec = graph.layers[static_cast<std::size_t>(layer)];
    if (spec.kind == LayerKind::InputEncoder) {
        return image;
    }
    return outs[static_cast<std::size_t>(graph.producers(layer).front())];
}

} // namespace

ForwardState forward_pass(const NetworkGraph &graph, const Tensor &image, ForwardMode mode, Rng *noise)
{
    if (image.shape != graph.input_shape) {
        throw std::invalid_argument("input " + image.shape.str() + " does not match graph input " +
                                    graph.input_shape.str());
    }
    if (mode == ForwardMode::TrainNoisy && noise == nullptr) {
        throw std::invalid_argument("train-noisy forward pass needs a noise generator");
    }
    const RateNeuronParams params = rate_params(graph);
    const std::size_t n = graph.layers.size();
    ForwardState st;
    st.drive.resize(n);
    st.out.resize(n);
    st.rate.resize(n);
    for (int id : topological_order(graph)) {
        const LayerSpec &spec = graph.layers[static_cast<std::size_t>(id)];
        const auto i = static_cast<std::size_t>(id);
        if (spec.kind == LayerKind::Concat) {
            concat_forward(graph, id, st.out, st.out[i]);
            continue;
        }
        layer_forward(spec, layer_input(graph, id, image, st.out), st.drive[i]);
        if (!spec.is_spiking()) {
            st.out[i] = st.drive[i];
            continue;
        }
        Tensor &rate = st.rate[i];
        rate = Tensor(spec.out_shape);
        for (std::size_t k = 0; k < rate.size(); ++k) {
            const double x = st.drive[i].data[k];
            switch (mode) {
            case ForwardMode::TrainNoisy: rate.data[k] = forward_rate_noisy(x, params, noise->uniform()); break;
            case ForwardMode::EvalRate: rate.data[k] = forward_rate(x, params); break;
            case ForwardMode::Surrogate: rate.data[k] = backward_rate(x, params); break;
            }
        }
        st.out[i] = rate;
        for (double &v : st.out[i].data) {
            v *= params.amplitude;
        }
    }
    return st;
}

BatchForward forward_batch(const NetworkGraph &graph, const std::vector<const ImageSample *> &batch,
                           ForwardMode mode, std::uint64_t noise_seed, unsigned threads)
{
    BatchForward fwd;
    fwd.inputs.resize(batch.size());
    fwd.states.resize(batch.size());
    fwd.labels.resize(batch.size());
    const TensorShape os = graph.layers[static_cast<std::size_t>(graph.output_layer())].out_shape;
    parallel_for(batch.size(), threads, [&](std::size_t b) {
        const ImageSample &s = *batch[b];
        check(s);
        Rng rng(mix_seed(noise_seed, b));
        fwd.inputs[b] = image_tensor(s);
        fwd.states[b] = forward_pass(graph, fwd.inputs[b], mode, &rng);
        fwd.labels[b] = center_crop(s.label, s.height, s.width, os.height, os.width);
    });
    return fwd;
}

LossTerms compute_loss(const NetworkGraph &graph, const BatchForward &fwd, const RegularizerParams &reg)
{
    const std::size_t batch = fwd.states.size();
    if (batch == 0) {
        throw std::invalid_argument("compute_loss: empty batch");
    }
    const int out_id = graph.output_layer();
    const TensorShape os = graph.layers[static_cast<std::size_t>(out_id)].out_shape;
    const std::size_t pixels = static_cast<std::size_t>(os.height) * os.width;
    const double norm = 1.0 / (static_cast<double>(batch) * static_cast<double>(pixels));
    LossTerms terms;
    terms.dlogits.resize(batch);
    terms.drate.assign(batch, std::vector<Tensor>(graph.layers.size()));
    for (std::size_t b = 0; b < batch; ++b) {
        const Tensor &logits = fwd.states[b].out[static_cast<std::size_t>(out_id)];
        Tensor &d = terms.dlogits[b];
        d = Tensor(os);
        for (std::size_t p = 0; p < pixels; ++p) {
            const double z0 = logits.data[p];
            const double z1 = logits.data[pixels + p];
            const double m = std::max(z0, z1);
            const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
            const double p1 = std::exp(z1 - lse);
            const int y = fwd.labels[b][p] ? 1 : 0;
            terms.task += (lse - (y ? z1 : z0)) * norm;
            d.data[p] = ((1.0 - p1) - (y == 0 ? 1.0 : 0.0)) * norm;
            d.data[pixels + p] = (p1 - (y == 1 ? 1.0 : 0.0)) * norm;
        }
    }
    if (reg.weight == 0.0) {
        return terms;
    }
    for (std::size_t l = 0; l < graph.layers.size(); ++l) {
        const LayerSpec &spec = graph.layers[l];
        if (!spec.is_spiking()) {
            continue;
        }
        const auto neurons = static_cast<std::size_t>(spec.out_shape.volume());
        std::vector<double> rates(batch * neurons);
        for (std::size_t b = 0; b < batch; ++b) {
            std::copy(fwd.states[b].rate[l].data.begin(), fwd.states[b].rate[l].data.end(),
                      rates.begin() + static_cast<long>(b * neurons));
        }
        const RegLoss r = fr_reg_loss(rates, static_cast<int>(batch), static_cast<int>(neurons), reg);
        terms.reg += reg.weight * r.loss;
        for (std::size_t b = 0; b < batch; ++b) {
            Tensor &dr = terms.drate[b][l];
            dr = Tensor(spec.out_shape);
            for (std::size_t k = 0; k < neurons; ++k) {
                dr.data[k] = reg.weight * r.grad[b * neurons + k];
            }
        }
    }
    return terms;
}

Gradients backward_pass(const NetworkGraph &graph, const BatchForward &fwd, const LossTerms &loss,
                        unsigned threads)
{
    const std::size_t n = graph.layers.size();
    const std::size_t batch = fwd.states.size();
    if (loss.dlogits.size() != batch || fwd.inputs.size() != batch) {
        throw std::invalid_argument("backward_pass: loss terms do not match the forward batch");
    }
    const RateNeuronParams params = rate_params(graph);
    std::vector<int> order = topological_order(graph);
    std::reverse(order.begin(), order.end());
    const int out_id = graph.output_layer();

    auto zero_grads = [&]() {
        Gradients g;
        g.weight.resize(n);
        g.bias.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            g.weight[i].assign(graph.layers[i].weight_count(), 0.0);
            g.bias[i].assign(graph.layers[i].has_params() ? graph.layers[i].bias.size() : 0, 0.0);
        }
        return g;
    };

    std::vector<Gradients> per_sample(batch);
    parallel_for(batch, threads, [&](std::size_t b) {
        const ForwardState &st = fwd.states[b];
        Gradients g = zero_grads();
        std::vector<Tensor> grad_out(n);
        for (std::size_t i = 0; i < n; ++i) {
            grad_out[i] = Tensor(graph.layers[i].out_shape);
        }
        grad_out[static_cast<std::size_t>(out_id)] = loss.dlogits[b];
        Tensor grad_in;
        Tensor grad_x;
        for (int id : order) {
            const auto i = static_cast<std::size_t>(id);
            const LayerSpec &spec = graph.layers[i];
            if (spec.kind == LayerKind::Concat) {
                split(graph, id, grad_out[i], grad_out);
                continue;
            }
            grad_x = grad_out[i];
            if (spec.is_spiking()) {
                const bool has_reg = i < loss.drate[b].size() && loss.drate[b][i].size() == grad_x.size();
                for (std::size_t k = 0; k < grad_x.size(); ++k) {
                    double dr = params.amplitude * grad_x.data[k];
                    if (has_reg) {
                        dr += loss.drate[b][i].data[k];
                    }
                    grad_x.data[k] = dr * backward_rate_grad(st.drive[i].data[k], params);
                }
            }
            const bool is_encoder = spec.kind == LayerKind::InputEncoder;
            layer_backward(spec, layer_input(graph, id, fwd.inputs[b], st.out), grad_x,
                           is_encoder ? nullptr : &grad_in, g.weight[i], g.bias[i]);
            if (!is_encoder) {
                Tensor &dst = grad_out[static_cast<std::size_t>(graph.producers(id).front())];
                for (std::size_t k = 0; k < dst.size(); ++k) {
                    dst.data[k] += grad_in.data[k];
                }
            }
        }
        per_sample[b] = std::move(g);
    });

    Gradients total = zero_grads();
    for (const Gradients &g : per_sample) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < g.weight[i].size(); ++k) {
                total.weight[i][k] += g.weight[i][k];
            }
            for (std::size_t k = 0; k < g.bias[i].size(); ++k) {
                total.bias[i][k] += g.bias[i][k];
            }
        }
    }
    return total;
}

Mask predict_mask(const Tensor &logits)
{
    const std::size_t pixels = static_cast<std::size_t>(logits.shape.height) * logits.shape.width;
    Mask m(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
        m[p] = logits.data[pixels + p] > logits.data[p] ? 1 : 0;
    }
    return m;
}

namespace {

// Spiking layers train amplitude * W and amplitude * b, which are O(1); the
// head's input is already amplitude-scaled so it trains W and b directly.
double param_scale(const NetworkGraph &graph, const LayerSpec &spec)
{
    return spec.is_spiking() ? graph.amplitude : 1.0;
}

} // namespace

TrainResult train(const NetworkGraph &graph, const std::vector<ImageSample> &dataset, const TrainConfig &config)
{
    check(config);
    if (dataset.empty()) {
        throw std::invalid_argument("train: empty dataset");
    }
    const auto violations = validate(graph);
    if (!violations.empty()) {
        throw std::invalid_argument("train: invalid graph: " + violations.front());
    }
    TrainResult result;
    result.graph = graph;
    NetworkGraph &g = result.graph;
    const std::size_t n = g.layers.size();

    std::vector<std::vector<double>> vel_w(n);
    std::vector<std::vector<double>> vel_b(n);
    for (std::size_t i = 0; i < n; ++i) {
        vel_w[i].assign(g.layers[i].weights.size(), 0.0);
        vel_b[i].assign(g.layers[i].bias.size(), 0.0);
    }

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    const ForwardMode mode = config.noise_enabled ? ForwardMode::TrainNoisy : ForwardMode::EvalRate;
    const auto batch_size = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffler(mix_seed(config.seed, 2 * static_cast<std::uint64_t>(epoch)));
        shuffler.shuffle(order);
        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t correct_px = 0;
        std::size_t total_px = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            std::vector<const ImageSample *> batch;
            for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
                batch.push_back(&dataset[order[k]]);
            }
            const std::uint64_t noise_seed =
                    mix_seed(mix_seed(config.seed, 2 * static_cast<std::uint64_t>(epoch) + 1), start);
            const BatchForward fwd = forward_batch(g, batch, mode, noise_seed, config.threads);
            const LossTerms loss = compute_loss(g, fwd, config.reg);
            if (!std::isfinite(loss.total())) {
                std::ostringstream os;
                os << "training diverged at epoch " << epoch << ", batch " << batches
                   << ": task loss " << loss.task << ", reg loss " << loss.reg;
                throw NumericalError(os.str());
            }
            rec.task_loss += loss.task;
            rec.reg_loss += loss.reg;
            ++batches;
            for (std::size_t b = 0; b < fwd.states.size(); ++b) {
                const Mask pred = predict_mask(fwd.states[b].out[static_cast<std::size_t>(g.output_layer())]);
                for (std::size_t p = 0; p < pred.size(); ++p) {
                    correct_px += pred[p] == fwd.labels[b][p] ? 1 : 0;
                }
                total_px += pred.size();
            }

            Gradients grads = backward_pass(g, fwd, loss, config.threads);
            // Convert physical-unit gradients to the normalised parameters.
            double sq = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double s = param_scale(g, g.layers[i]);
                for (double &v : grads.weight[i]) {
                    v /= s;
                    sq += v * v;
                }
                for (double &v : grads.bias[i]) {
                    v /= s;
                    sq += v * v;
                }
            }
            double clip = 1.0;
            if (config.grad_clip > 0.0 && std::sqrt(sq) > config.grad_clip) {
                clip = config.grad_clip / std::sqrt(sq);
            }
            for (std::size_t i = 0; i < n; ++i) {
                LayerSpec &spec = g.layers[i];
                const double s = param_scale(g, spec);
                for (std::size_t k = 0; k < spec.weights.size(); ++k) {
                    vel_w[i][k] = config.momentum * vel_w[i][k] + clip * grads.weight[i][k];
                    spec.weights[k] = (spec.weights[k] * s - config.learning_rate * vel_w[i][k]) / s;
                }
                for (std::size_t k = 0; k < spec.bias.size(); ++k) {
                    vel_b[i][k] = config.momentum * vel_b[i][k] + clip * grads.bias[i][k];
                    spec.bias[k] = (spec.bias[k] * s - config.learning_rate * vel_b[i][k]) / s;
                }
            }
        }
        rec.task_loss /= static_cast<double>(batches);
        rec.reg_loss /= static_cast<double>(batches);
        rec.train_accuracy = static_cast<double>(correct_px) / static_cast<double>(total_px);
        result.history.push_back(rec);
    }
    return result;
}

EvalResult evaluate(const NetworkGraph &graph, const std::vector<ImageSample> &dataset,
                    const RegularizerParams &reg, unsigned threads)
{
    if (dataset.empty()) {
        throw std::invalid_argument("evaluate: empty dataset");
    }
    std::vector<const ImageSample *> batch;
    for (const ImageSample &s : dataset) {
        batch.push_back(&s);
    }
    const BatchForward fwd = forward_batch(graph, batch, ForwardMode::EvalRate, 0, threads);
    EvalResult res;
    const auto out_id = static_cast<std::size_t>(graph.output_layer());
    for (const ForwardState &st : fwd.states) {
        res.predictions.push_back(predict_mask(st.out[out_id]));
    }
    double correct = 0.0;
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        correct += pixel_accuracy(res.predictions[b], fwd.labels[b]) * static_cast<double>(fwd.labels[b].size());
        total += static_cast<double>(fwd.labels[b].size());
    }
    res.pixel_accuracy = correct / total;
    res.mean_iou = mean_iou(res.predictions, fwd.labels);

    std::size_t outside = 0;
    std::size_t neurons_total = 0;
    std::vector<double> column(batch.size());
    for (std::size_t l = 0; l < graph.layers.size(); ++l) {
        const LayerSpec &spec = graph.layers[l];
        if (!spec.is_spiking()) {
            continue;
        }
        const auto neurons = static_cast<std::size_t>(spec.out_shape.volume());
        std::vector<double> all;
        all.reserve(neurons * batch.size());
        for (const ForwardState &st : fwd.states) {
            all.insert(all.end(), st.rate[l].data.begin(), st.rate[l].data.end());
        }
        for (std::size_t k = 0; k < neurons; ++k) {
            for (std::size_t b = 0; b < batch.size(); ++b) {
                column[b] = fwd.states[b].rate[l].data[k];
            }
            const double r = percentile(column, reg.percentile);
            outside += (r < reg.f_min || r > reg.f_max) ? 1 : 0;
        }
        neurons_total += neurons;
        res.layers.push_back(static_cast<int>(l));
        res.layer_mean.push_back(std::accumulate(all.begin(), all.end(), 0.0) / static_cast<double>(all.size()));
        res.layer_p99.push_back(percentile(all, 0.99));
    }
    res.outside_band = neurons_total ? static_cast<double>(outside) / static_cast<double>(neurons_total) : 0.0;
    return res;
}

std::string history_jsonl(const std::vector<EpochRecord> &history)
{
    std::string out;
    for (const EpochRecord &r : history) {
        nlohmann::json j;
        j["epoch"] = r.epoch;
        j["task_loss"] = r.task_loss;
        j["reg_loss"] = r.reg_loss;
        j["train_accuracy"] = r.train_accuracy;
        out += j.dump() + "\n";
    }
    return out;
}

} // namespace snnconv
