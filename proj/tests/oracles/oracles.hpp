#pragma once

// Brute-force references for the tests. Deliberately naive; never linked into
// the library or the CLI.

#include <cstdint>
#include <functional>
#include <vector>

#include "snnconv/partitioner.hpp"
#include "snnconv/tensor.hpp"

namespace oracles {

/// Float hard-reset IF neuron with unit threshold and zero refractory period,
/// driven by a constant x for `steps` steps of dt. Returns the spike count.
long if_neuron_spikes(double drive, double dt, int steps);
/// Spike count / (steps dt).
double if_neuron_rate(double drive, double dt, int steps);

struct Cut {
    std::int64_t cut = 0;
    std::vector<int> side;
};

/// Minimum edge cut over every 2-way split with |n0 - n1| <= max_imbalance,
/// node 0 pinned to side 0. At most 20 nodes.
Cut exhaustive_bipartition(const snnconv::CoreGraph &graph, std::int64_t max_imbalance);

/// Cut of `side` summed over an edge list; independent of CoreGraph::weight.
std::int64_t cut_of(const snnconv::CoreGraph &graph, const std::vector<int> &side);

/// Fewest cores over every region extent (q, r, s) whose origin-anchored
/// tiling of `shape` fits the budget; -1 if none does.
int min_cores_exhaustive(const snnconv::TensorShape &shape, const snnconv::CoreBudget &budget,
                         const snnconv::LayerConnectivity &conn);

/// Direct convolution. weights are [oc][ic][k][k]. Ordinary convolution is
/// valid (unpadded) with the given stride; transposed places each input pixel's
/// k x k footprint at (stride y, stride x).
snnconv::Tensor conv_reference(const snnconv::Tensor &input, const std::vector<double> &weights,
                               const std::vector<double> &bias, int out_channels, int k, int stride, bool transposed);

/// Sum_t u[t] / u0 for u[t] = floor(u[t-1] (4096 - delta) / 4096), u[0] = u0,
/// iterated until u hits 0.
double decay_recurrence_sum(std::int64_t u0, int delta);

/// Central difference (f(x + h) - f(x - h)) / 2h of f with respect to x[i].
double central_difference(const std::function<double(const std::vector<double> &)> &f, std::vector<double> x,
                          std::size_t i, double h);

/// |a - b| / max(|a|, |b|, floor).
double rel_err(double a, double b, double floor = 1e-12);

} // namespace oracles
