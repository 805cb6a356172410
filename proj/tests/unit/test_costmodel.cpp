#include <doctest.h>

#include "snnconv/costmodel.hpp"
#include "snnconv/fixsim.hpp"

using namespace snnconv;

namespace {

struct Setup {
    NetworkGraph graph;
    Partition part;
    SpikeStats stats;

    Setup()
    {
        UNetConfig c;
        c.input_size = 16;
        c.base_channels = 2;
        c.meta_layers = 1;
        graph = build_unet(c);
        part = split_graph(graph, CoreBudget{128, 1024, 1024, 1 << 14});
        part.chip = naive_split(part.core_count());
        stats.steps = 100;
        stats.inferences = 1;
        stats.core_synops.assign(static_cast<std::size_t>(part.core_count()), 0);
        for (std::size_t k = 0; k < stats.core_synops.size(); ++k) {
            stats.core_synops[k] = 100 * (k + 1);
            stats.synops += stats.core_synops[k];
        }
        stats.neuron_updates = static_cast<std::uint64_t>(compartment_count(graph)) * 100;
        stats.intra_hops = 5000;
        stats.inter_hops = 700;
        stats.layer_step_spikes.assign(graph.layers.size(), std::vector<std::uint64_t>(100, 0));
        stats.layer_step_spikes[1][10] = 5700;
    }
};

} // namespace

TEST_CASE("energy is the dot product of counts and per-event costs")
{
    Setup s;
    const EnergyParams p = prior_energy_params();
    const CostReport r = estimate(s.stats, s.part, s.graph, p);
    const double expected = p.e_synop * static_cast<double>(s.stats.synops) +
                            p.e_neuron_update * static_cast<double>(s.stats.neuron_updates) +
                            p.e_spike_hop_intra * 5000 + p.e_spike_hop_inter * 700;
    CHECK(r.energy_per_inference == doctest::Approx(expected).epsilon(1e-12));
    CHECK(r.dynamic_power == doctest::Approx(r.energy_per_inference * r.inferences_per_second));
    CHECK(r.chip_energy[0] + r.chip_energy[1] ==
          doctest::Approx(r.e_synop_term + r.e_neuron_term).epsilon(1e-12));
}

TEST_CASE("zero spikes cost only neuron updates")
{
    Setup s;
    s.stats.synops = 0;
    s.stats.intra_hops = 0;
    s.stats.inter_hops = 0;
    std::fill(s.stats.core_synops.begin(), s.stats.core_synops.end(), 0);
    const EnergyParams p = prior_energy_params();
    const CostReport r = estimate(s.stats, s.part, s.graph, p);
    CHECK(r.energy_per_inference == doctest::Approx(r.e_neuron_term));
    CHECK(r.step_time == doctest::Approx(p.t_step_base));
}

TEST_CASE("moving one hop across chips costs exactly the hop price difference")
{
    Setup s;
    const EnergyParams p = prior_energy_params();
    const CostReport a = estimate(s.stats, s.part, s.graph, p);
    s.stats.intra_hops -= 1;
    s.stats.inter_hops += 1;
    const CostReport b = estimate(s.stats, s.part, s.graph, p);
    CHECK(b.energy_per_inference - a.energy_per_inference ==
          doctest::Approx(p.e_spike_hop_inter - p.e_spike_hop_intra).epsilon(1e-6));
    CHECK(b.inferences_per_second < a.inferences_per_second);
}

TEST_CASE("costs scale linearly with inferences and grow with traffic")
{
    Setup s;
    const EnergyParams p = default_energy_params();
    const CostReport one = estimate(s.stats, s.part, s.graph, p);
    SpikeStats twice = s.stats;
    accumulate(twice, s.stats);
    const CostReport two = estimate(twice, s.part, s.graph, p);
    CHECK(two.energy_per_inference == doctest::Approx(one.energy_per_inference));
    SpikeStats busier = s.stats;
    busier.synops *= 2;
    for (auto &c : busier.core_synops) {
        c *= 2;
    }
    const CostReport more = estimate(busier, s.part, s.graph, p);
    CHECK(more.energy_per_inference > one.energy_per_inference);
    CHECK(more.inferences_per_second < one.inferences_per_second);
}

TEST_CASE("compare of identical reports is neutral")
{
    Setup s;
    const CostReport r = estimate(s.stats, s.part, s.graph, default_energy_params());
    const CostComparison c = compare(r, r);
    CHECK(c.energy_ratio == 1.0);
    CHECK(c.throughput_ratio == 1.0);
    CHECK(c.inter_hop_ratio == 1.0);
}

TEST_CASE("calibration reproduces the reference and keeps the ratios")
{
    Setup s;
    const EnergyParams prior = prior_energy_params();
    const HardwareReference ref;
    const EnergyParams fit = calibrate(prior, estimate(s.stats, s.part, s.graph, prior), ref);
    const CostReport r = estimate(s.stats, s.part, s.graph, fit);
    CHECK(r.energy_per_inference == doctest::Approx(ref.energy_per_inference).epsilon(1e-12));
    CHECK(r.inferences_per_second == doctest::Approx(ref.inferences_per_second).epsilon(1e-12));
    CHECK(r.dynamic_power == doctest::Approx(ref.dynamic_power).epsilon(1e-9));
    CHECK(fit.e_spike_hop_inter / fit.e_spike_hop_intra == doctest::Approx(10.0));
    CHECK(fit.t_inter_hop / fit.t_step_base == doctest::Approx(prior.t_inter_hop / prior.t_step_base));
}

TEST_CASE("negative parameters are rejected")
{
    Setup s;
    EnergyParams p = prior_energy_params();
    p.e_synop = -1.0;
    CHECK_THROWS_AS(estimate(s.stats, s.part, s.graph, p), std::invalid_argument);
}
