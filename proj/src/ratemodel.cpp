#include "snnconv/ratemodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace snnconv {

void check(const RateNeuronParams &params)
{
    if (!(params.dt > 0.0) || !(params.tau > 0.0) || !(params.amplitude > 0.0)) {
        throw std::invalid_argument("rate neuron params: dt, tau and amplitude must be > 0");
    }
}

void check(const RegularizerParams &reg)
{
    if (!(reg.f_min > 0.0) || !(reg.f_min < reg.f_max)) {
        throw std::invalid_argument("regularizer: need 0 < f_min < f_max");
    }
    if (!(reg.percentile > 0.0) || reg.percentile > 1.0) {
        throw std::invalid_argument("regularizer: percentile must be in (0, 1]");
    }
    if (!(reg.weight >= 0.0)) {
        throw std::invalid_argument("regularizer: weight must be >= 0");
    }
}

double spike_period(double x, const RateNeuronParams &params)
{
    if (!(x > 0.0)) {
        throw std::domain_error("spike_period needs positive drive");
    }
    // The small slack keeps exact multiples such as x dt = 1/3 from rounding
    // up to the next step through representation error.
    const double steps = std::max(1.0, std::ceil(1.0 / (x * params.dt) - 1e-9));
    return params.dt * steps;
}

double forward_rate(double x, const RateNeuronParams &params)
{
    return x > 0.0 ? 1.0 / spike_period(x, params) : 0.0;
}

double noise_eta(double period, double tau, double u)
{
    const double eps = period / tau;
    if (eps < 1e-6) {
        // Second-order expansion in eps; the closed form cancels two ~1/eps
        // terms here.
        return -eps * (1.0 / 12.0 - u / 2.0 + u * u / 2.0) -
               eps * eps * (-u / 12.0 + u * u / 4.0 - u * u * u / 6.0);
    }
    const double one_minus_r = -std::expm1(-eps);
    return 0.5 + 1.0 / eps - std::exp(-u * eps) / one_minus_r - u;
}

double forward_rate_noisy(double x, const RateNeuronParams &params, double u)
{
    if (!(x > 0.0)) {
        return 0.0;
    }
    const double p = spike_period(x, params);
    return (1.0 + noise_eta(p, params.tau, u)) / p;
}

double backward_rate(double x, const RateNeuronParams &params)
{
    return x > 0.0 ? x / (x * params.dt / 2.0 + 1.0) : 0.0;
}

double backward_rate_grad(double x, const RateNeuronParams &params)
{
    if (!(x > 0.0)) {
        return 0.0;
    }
    const double d = x * params.dt / 2.0 + 1.0;
    return 1.0 / (d * d);
}

double percentile(const std::vector<double> &values, double p, std::vector<double> *weights)
{
    const std::size_t n = values.size();
    if (n == 0) {
        throw std::invalid_argument("percentile of an empty set");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const double h = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = h - static_cast<double>(lo);
    const double vlo = values[order[lo]];
    const double vhi = values[order[hi]];
    if (weights != nullptr) {
        weights->assign(n, 0.0);
        auto spread = [&](double value, double w) {
            if (w == 0.0) {
                return;
            }
            std::size_t ties = 0;
            for (double v : values) {
                ties += v == value ? 1 : 0;
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (values[i] == value) {
                    (*weights)[i] += w / static_cast<double>(ties);
                }
            }
        };
        spread(vlo, 1.0 - frac);
        spread(vhi, frac);
    }
    return vlo + frac * (vhi - vlo);
}

RegLoss fr_reg_loss(const std::vector<double> &rates, int batch, int neurons, const RegularizerParams &reg)
{
    if (batch < 1 || neurons < 1) {
        throw std::invalid_argument("fr_reg_loss: empty batch or layer");
    }
    if (rates.size() != static_cast<std::size_t>(batch) * neurons) {
        throw std::invalid_argument("fr_reg_loss: rates size does not match batch x neurons");
    }
    RegLoss out;
    out.grad.assign(rates.size(), 0.0);
    out.percentile_rate.resize(static_cast<std::size_t>(neurons));
    std::vector<double> column(static_cast<std::size_t>(batch));
    std::vector<double> weights;
    const double inv_n = 1.0 / neurons;
    for (int i = 0; i < neurons; ++i) {
        for (int b = 0; b < batch; ++b) {
            column[static_cast<std::size_t>(b)] = rates[static_cast<std::size_t>(b) * neurons + i];
        }
        const double r = percentile(column, reg.percentile, &weights);
        out.percentile_rate[static_cast<std::size_t>(i)] = r;
        double excess = 0.0;
        if (r < reg.f_min) {
            excess = r - reg.f_min;
        } else if (r > reg.f_max) {
            excess = r - reg.f_max;
        }
        if (excess == 0.0) {
            continue;
        }
        out.loss += excess * excess * inv_n;
        const double d = 2.0 * excess * inv_n;
        for (int b = 0; b < batch; ++b) {
            out.grad[static_cast<std::size_t>(b) * neurons + i] = d * weights[static_cast<std::size_t>(b)];
        }
    }
    return out;
}

} // namespace snnconv
