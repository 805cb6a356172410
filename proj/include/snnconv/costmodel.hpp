#pragma once

#include <array>
#include <string>
#include <vector>

#include "snnconv/fixsim.hpp"
#include "snnconv/partitioner.hpp"

namespace snnconv {

struct EnergyParams {
    double e_synop = 0.0;            // J per synaptic event
    double e_neuron_update = 0.0;    // J per compartment per step
    double e_spike_hop_intra = 0.0;  // J per spike delivery within a chip
    double e_spike_hop_inter = 0.0;  // J per spike delivery across chips
    double t_step_base = 0.0;        // s per step
    double t_synop = 0.0;            // s per synaptic event on one core
    double t_inter_hop = 0.0;        // s per cross-chip packet
};

void check(const EnergyParams &params);

/// Per-event cost ratios before fitting; the starting point for calibrate().
EnergyParams prior_energy_params();
/// Committed defaults: prior_energy_params() scaled by `snnconv calibrate`
/// on the desk configuration (see README).
EnergyParams default_energy_params();

struct CostReport {
    int steps = 0;
    double energy_per_inference = 0.0;  // J, dynamic only
    double inferences_per_second = 0.0;
    double step_time = 0.0;             // s
    double dynamic_power = 0.0;         // W
    // Per-inference totals.
    double synops = 0.0;
    double neuron_updates = 0.0;
    double intra_hops = 0.0;
    double inter_hops = 0.0;
    double total_spikes = 0.0;
    double mean_rate = 0.0;  // Hz over spiking compartments
    // Energy split.
    double e_synop_term = 0.0;
    double e_neuron_term = 0.0;
    double e_intra_term = 0.0;
    double e_inter_term = 0.0;
    std::array<double, 2> chip_synops{};
    std::array<double, 2> chip_neuron_updates{};
    std::array<double, 2> chip_energy{};  // synop + neuron terms of cores on each chip
};

/// Dynamic energy and throughput from spike statistics of `steps`-step runs
/// (averaged over stats.inferences).
CostReport estimate(const SpikeStats &stats, const Partition &partition, const NetworkGraph &graph,
                    const EnergyParams &params);

struct CostComparison {
    double energy_ratio = 1.0;      // baseline energy / candidate energy
    double throughput_ratio = 1.0;  // candidate throughput / baseline throughput
    double inter_hop_ratio = 1.0;   // baseline inter hops / candidate inter hops
    std::string summary;
};

CostComparison compare(const CostReport &baseline, const CostReport &candidate,
                       const std::string &baseline_label = "baseline",
                       const std::string &candidate_label = "candidate");

/// Published hardware row used only as a calibration anchor.
struct HardwareReference {
    double energy_per_inference = 0.34 / 23.79;  // J (dynamic power / throughput)
    double inferences_per_second = 23.79;
    double dynamic_power = 0.34;  // W
    const char *label = "hardware reference, not validated";
};

/// Scales the energy and time constants of `prior` so that `report_at_prior`
/// matches the reference exactly; relative magnitudes are kept.
EnergyParams calibrate(const EnergyParams &prior, const CostReport &report_at_prior, const HardwareReference &ref = {});

std::string cost_to_json(const CostReport &report, const HardwareReference *ref = nullptr);
std::string cost_to_csv(const std::vector<std::pair<std::string, CostReport>> &rows);

} // namespace snnconv
