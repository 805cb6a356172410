#include "snnconv/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace snnconv {

void check(const EnergyParams &p)
{
    for (double v : {p.e_synop, p.e_neuron_update, p.e_spike_hop_intra, p.e_spike_hop_inter, p.t_step_base,
                     p.t_synop, p.t_inter_hop}) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("energy parameters must be finite and non-negative");
        }
    }
    if (!(p.t_step_base > 0.0)) {
        throw std::invalid_argument("t_step_base must be > 0 so throughput stays finite");
    }
}

EnergyParams prior_energy_params()
{
    // Ratios follow published neuromorphic-core figures: synop ~24 pJ,
    // compartment update ~52 pJ, on-chip hop ~4 pJ, off-chip hop ~10x more.
    EnergyParams p;
    p.e_synop = 23.6e-12;
    p.e_neuron_update = 52.0e-12;
    p.e_spike_hop_intra = 3.5e-12;
    p.e_spike_hop_inter = 35.0e-12;
    p.t_step_base = 10.0e-6;
    p.t_synop = 3.5e-9;
    p.t_inter_hop = 100.0e-9;
    return p;
}

EnergyParams default_energy_params()
{
    // `snnconv calibrate -c configs/desk.json`: prior ratios scaled so the
    // desk network hits the hardware reference row. A curve fit, not a
    // measurement.
    EnergyParams p;
    p.e_synop = 1.4271946440963869e-09;
    p.e_neuron_update = 3.1446661649581408e-09;
    p.e_spike_hop_intra = 2.116602226414133e-10;
    p.e_spike_hop_inter = 2.1166022264141333e-09;
    p.t_step_base = 5.1837173313033289e-05;
    p.t_synop = 1.8143010659561649e-08;
    p.t_inter_hop = 5.1837173313033279e-07;
    return p;
}

CostReport estimate(const SpikeStats &stats, const Partition &part, const NetworkGraph &graph, const EnergyParams &params)
{
    check(params);
    CostReport r;
    r.steps = stats.steps;
    if (stats.core_synops.size() != part.cores.size()) {
        throw std::invalid_argument("estimate: stats and partition disagree on the core count");
    }
    const double inf = std::max(1, stats.inferences);
    const double steps = std::max(1, stats.steps);
    r.synops = static_cast<double>(stats.synops) / inf;
    r.neuron_updates = static_cast<double>(stats.neuron_updates) / inf;
    r.intra_hops = static_cast<double>(stats.intra_hops) / inf;
    r.inter_hops = static_cast<double>(stats.inter_hops) / inf;
    r.total_spikes = static_cast<double>(stats.total_spikes()) / inf;
    const double spiking = static_cast<double>(neuron_count(graph));
    r.mean_rate = spiking > 0 ? r.total_spikes / (spiking * steps * graph.dt) : 0.0;

    r.e_synop_term = params.e_synop * r.synops;
    r.e_neuron_term = params.e_neuron_update * r.neuron_updates;
    r.e_intra_term = params.e_spike_hop_intra * r.intra_hops;
    r.e_inter_term = params.e_spike_hop_inter * r.inter_hops;
    r.energy_per_inference = r.e_synop_term + r.e_neuron_term + r.e_intra_term + r.e_inter_term;

    double busiest = 0.0;
    for (std::size_t k = 0; k < part.cores.size(); ++k) {
        const double syn = static_cast<double>(stats.core_synops[k]) / inf;
        busiest = std::max(busiest, syn);
        const int chip = part.chip.at(k);
        const double updates = static_cast<double>(part.cores[k].volume()) * stats.steps;
        r.chip_synops.at(static_cast<std::size_t>(chip)) += syn;
        r.chip_neuron_updates.at(static_cast<std::size_t>(chip)) += updates;
        r.chip_energy.at(static_cast<std::size_t>(chip)) += params.e_synop * syn + params.e_neuron_update * updates;
    }
    r.step_time = params.t_step_base + params.t_synop * busiest / steps + params.t_inter_hop * r.inter_hops / steps;
    r.inferences_per_second = 1.0 / (steps * r.step_time);
    r.dynamic_power = r.energy_per_inference * r.inferences_per_second;
    return r;
}

CostComparison compare(const CostReport &a, const CostReport &b, const std::string &la, const std::string &lb)
{
    CostComparison c;
    c.energy_ratio = b.energy_per_inference > 0 ? a.energy_per_inference / b.energy_per_inference : 1.0;
    c.throughput_ratio = a.inferences_per_second > 0 ? b.inferences_per_second / a.inferences_per_second : 1.0;
    c.inter_hop_ratio = b.inter_hops > 0 ? a.inter_hops / b.inter_hops : (a.inter_hops > 0 ? INFINITY : 1.0);
    std::ostringstream os;
    os << lb << " vs " << la << ": " << c.energy_ratio << "x less energy per inference, " << c.throughput_ratio
       << "x the inferences per second";
    c.summary = os.str();
    return c;
}

EnergyParams calibrate(const EnergyParams &prior, const CostReport &at_prior, const HardwareReference &ref)
{
    if (!(at_prior.energy_per_inference > 0.0) || !(at_prior.inferences_per_second > 0.0)) {
        throw std::invalid_argument("calibrate: report has no energy or throughput");
    }
    // Energy is linear in the e_* constants and step time in the t_*
    // constants, so one scale each reproduces both anchors exactly.
    const double es = ref.energy_per_inference / at_prior.energy_per_inference;
    const double ts = at_prior.inferences_per_second / ref.inferences_per_second;
    EnergyParams p = prior;
    p.e_synop *= es;
    p.e_neuron_update *= es;
    p.e_spike_hop_intra *= es;
    p.e_spike_hop_inter *= es;
    p.t_step_base *= ts;
    p.t_synop *= ts;
    p.t_inter_hop *= ts;
    return p;
}

std::string cost_to_json(const CostReport &r, const HardwareReference *ref)
{
    using nlohmann::json;
    json doc;
    doc["format"] = "snnconv-cost";
    doc["version"] = 1;
    doc["steps"] = r.steps;
    doc["energy_per_inference_j"] = r.energy_per_inference;
    doc["inferences_per_second"] = r.inferences_per_second;
    doc["step_time_s"] = r.step_time;
    doc["dynamic_power_w"] = r.dynamic_power;
    doc["per_inference"] = {{"synops", r.synops},         {"neuron_updates", r.neuron_updates},
                            {"intra_hops", r.intra_hops}, {"inter_hops", r.inter_hops},
                            {"spikes", r.total_spikes},   {"mean_rate_hz", r.mean_rate}};
    doc["energy_terms_j"] = {{"synop", r.e_synop_term},
                             {"neuron_update", r.e_neuron_term},
                             {"intra_hop", r.e_intra_term},
                             {"inter_hop", r.e_inter_term}};
    json chips = json::array();
    for (std::size_t c = 0; c < 2; ++c) {
        chips.push_back({{"chip", c},
                         {"synops", r.chip_synops[c]},
                         {"neuron_updates", r.chip_neuron_updates[c]},
                         {"energy_j", r.chip_energy[c]}});
    }
    doc["chips"] = chips;
    if (ref != nullptr) {
        doc["reference"] = {{"label", ref->label},
                            {"energy_per_inference_j", ref->energy_per_inference},
                            {"inferences_per_second", ref->inferences_per_second},
                            {"dynamic_power_w", ref->dynamic_power}};
    }
    return doc.dump(2) + "\n";
}

std::string cost_to_csv(const std::vector<std::pair<std::string, CostReport>> &rows)
{
    std::ostringstream os;
    os.precision(10);
    os << "label,steps,energy_per_inference_j,inferences_per_second,dynamic_power_w,synops,neuron_updates,intra_hops,"
          "inter_hops,mean_rate_hz\n";
    for (const auto &[label, r] : rows) {
        os << label << ',' << r.steps << ',' << r.energy_per_inference << ',' << r.inferences_per_second << ','
           << r.dynamic_power << ',' << r.synops << ',' << r.neuron_updates << ',' << r.intra_hops << ','
           << r.inter_hops << ',' << r.mean_rate << '\n';
    }
    return os.str();
}

} // namespace snnconv
