#include <doctest.h>

#include "oracles.hpp"

using namespace oracles;

TEST_CASE("if neuron oracle: drive 600 fires every other step")
{
    CHECK(if_neuron_rate(600.0, 0.001, 1000) == doctest::Approx(500.0));
    CHECK(if_neuron_rate(0.0, 0.001, 1000) == 0.0);
    CHECK(if_neuron_rate(1e6, 0.001, 1000) == doctest::Approx(1000.0));
    CHECK(if_neuron_rate(-50.0, 0.001, 1000) == 0.0);
}

TEST_CASE("exhaustive bipartition on small graphs")
{
    snnconv::CoreGraph ring;
    ring.nodes = 4;
    ring.adj.resize(4);
    for (int i = 0; i < 4; ++i) {
        ring.add_edge(i, (i + 1) % 4, 1);
    }
    CHECK(exhaustive_bipartition(ring, 0).cut == 2);

    snnconv::CoreGraph k4;
    k4.nodes = 4;
    k4.adj.resize(4);
    for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) {
            k4.add_edge(i, j, 1);
        }
    }
    CHECK(exhaustive_bipartition(k4, 0).cut == 4);
}

TEST_CASE("conv oracle: identity and shift kernels")
{
    snnconv::Tensor in({3, 4, 1});
    for (std::size_t i = 0; i < in.size(); ++i) {
        in.data[i] = static_cast<double>(i);
    }
    const auto id = conv_reference(in, {1.0}, {0.0}, 1, 1, 1, false);
    CHECK(id.data == in.data);
    // 3x3 delta at (2, 2) picks the bottom-right neighbour of each window origin.
    std::vector<double> delta(9, 0.0);
    delta[8] = 1.0;
    const auto shifted = conv_reference(in, delta, {0.0}, 1, 3, 1, false);
    CHECK(shifted.shape.height == 1);
    CHECK(shifted.shape.width == 2);
    CHECK(shifted.at(0, 0, 0) == in.at(0, 2, 2));
    CHECK(shifted.at(0, 0, 1) == in.at(0, 2, 3));
}

TEST_CASE("decay recurrence oracle small cases")
{
    // delta 2048 halves: 8 + 4 + 2 + 1 = 15.
    CHECK(decay_recurrence_sum(8, 2048) == doctest::Approx(15.0 / 8.0));
    CHECK(decay_recurrence_sum(1, 4095) == doctest::Approx(1.0));
}
