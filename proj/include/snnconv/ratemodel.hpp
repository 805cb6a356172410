#pragma once

#include <vector>

namespace snnconv {

struct RateNeuronParams {
    double dt = 0.001;        // s
    double tau = 0.005;       // s, lowpass filter on the spike train
    double amplitude = 0.01;  // output scale, applied by callers after the rate
};

struct RegularizerParams {
    double f_min = 50.0;   // Hz
    double f_max = 200.0;  // Hz
    double percentile = 0.99;
    double weight = 1e-4;
};

void check(const RateNeuronParams &params);
void check(const RegularizerParams &reg);

/// Inter-spike interval of a hard-reset IF neuron with unit threshold and
/// constant drive x: dt * ceil(1 / (x dt)). Throws for x <= 0.
double spike_period(double x, const RateNeuronParams &params);

/// 1 / spike_period(x), or 0 for x <= 0.
double forward_rate(double x, const RateNeuronParams &params);

/// Zero-mean noise of the filtered spike train sampled at phase u in [0, 1]
/// of one period p: 1/2 + tau/p - exp(-u p/tau) / (1 - exp(-p/tau)) - u.
double noise_eta(double period, double tau, double u);

/// (1 + eta) / p for x > 0, 0 otherwise.
double forward_rate_noisy(double x, const RateNeuronParams &params, double u);

/// Smooth stand-in used for gradients: 1 / (dt/2 + 1/x) for x > 0.
double backward_rate(double x, const RateNeuronParams &params);
/// d backward_rate / dx = 1 / (x dt / 2 + 1)^2 for x > 0, 0 otherwise.
double backward_rate_grad(double x, const RateNeuronParams &params);

/// Linear-interpolation percentile of `values` (numpy "linear").
/// `weights` receives d(percentile)/d(values[i]); samples tied with an order
/// statistic share its weight equally.
double percentile(const std::vector<double> &values, double p, std::vector<double> *weights = nullptr);

struct RegLoss {
    double loss = 0.0;                   // Hz^2, before RegularizerParams::weight
    std::vector<double> grad;            // d loss / d rates, same layout as rates
    std::vector<double> percentile_rate; // per neuron
};

/// Percentile firing-rate penalty for one layer.
///
/// `rates` is batch-major: rates[b * neurons + i]. The percentile is taken per
/// neuron across the batch, and the loss is the mean over neurons of the
/// squared distance of that percentile from [f_min, f_max].
RegLoss fr_reg_loss(const std::vector<double> &rates, int batch, int neurons, const RegularizerParams &reg);

} // namespace snnconv
