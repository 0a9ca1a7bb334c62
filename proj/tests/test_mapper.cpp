#include <doctest.h>

#include <set>

#include "emstdp/mapper.hpp"

using namespace emstdp;

namespace {

Network small_net(const std::string &structure, FeedbackMode mode)
{
    return Network::build(make_network_spec(structure, mode), 42, EngineParams{});
}

} // namespace

TEST_CASE("dense adjacency has one entry per synapse with uniform sums")
{
    Network net = small_net("10x10x1-100d-10d", FeedbackMode::DFA);
    const NetworkGraph g = make_graph(net);
    // edge 1 is the dense 100 -> 10 connection
    const Adjacency a = build_adjacency(g, 1);
    CHECK(a.src_size == 100);
    CHECK(a.dst_size == 10);
    CHECK(a.total == 1000);
    for (const std::int32_t f : a.fanout) {
        CHECK(f == 10);
    }
    for (const std::int32_t f : a.fanin) {
        CHECK(f == 100);
    }
}

TEST_CASE("conv adjacency fan-in follows the kernel")
{
    Network net = small_net("28x28x1-5x5k16c2s-10d", FeedbackMode::DFA);
    const NetworkGraph g = make_graph(net);
    const Adjacency a = build_adjacency(g, 0);
    CHECK(a.dst_size == 12 * 12 * 16);
    for (const std::int32_t f : a.fanin) {
        CHECK(f == 25);
    }
}

TEST_CASE("neurons_per_core respects synapse and compartment caps")
{
    Network net = small_net("28x28x1-100d-10d", FeedbackMode::DFA);
    const NetworkGraph g = make_graph(net);
    CoreConstraints k;

    // forward layer 1 (pop index 1): fan-in 784 plus the DFA broadcast taps
    const std::int64_t lm = neurons_per_core(g, 1, k, 1'000'000);
    CHECK(lm <= k.max_compartments_per_core);
    CHECK(lm >= 1);

    // requested cap wins when below the constraint-derived maximum
    CHECK(neurons_per_core(g, 1, k, 10) == 10);

    CoreConstraints tight = k;
    tight.max_synapses_per_core = 784 + 2 * 10; // one neuron's worth
    CHECK(neurons_per_core(g, 1, tight, 1'000'000) == 1);

    tight.max_synapses_per_core = 700; // below a single neuron's fan-in
    CHECK_THROWS_AS(neurons_per_core(g, 1, tight, 64), std::runtime_error);
}

TEST_CASE("map_network assigns every compartment exactly once within bounds")
{
    Network net = small_net("16x16x1-40d-10d", FeedbackMode::FA);
    const NetworkGraph g = make_graph(net);
    CoreConstraints k;
    std::vector<std::int64_t> policy(3, 10);
    const CoreMap map = map_network(g, k, policy);

    CHECK(static_cast<std::int64_t>(map.core_of.size()) == g.total_compartments());
    std::set<std::int32_t> seen;
    for (const std::int32_t c : map.core_of) {
        CHECK(c >= 0);
        CHECK(c < map.cores_used());
        seen.insert(c);
    }
    CHECK(static_cast<std::int64_t>(seen.size()) == map.cores_used());
    std::int64_t total = 0;
    for (const CoreTally &t : map.cores) {
        total += t.compartments;
        CHECK(t.compartments <= k.max_compartments_per_core);
        CHECK(t.in_synapses <= k.max_synapses_per_core);
        CHECK(t.fanin_sources <= k.max_fanin_per_core);
        CHECK(t.fanout_targets <= k.max_fanout_per_core);
    }
    CHECK(total == g.total_compartments());

    // determinism
    const CoreMap map2 = map_network(g, k, policy);
    CHECK(map.core_of == map2.core_of);
}

TEST_CASE("l_m = 1 uses one core per compartment")
{
    Network net = small_net("4x4x1-8d-3d", FeedbackMode::DFA);
    const NetworkGraph g = make_graph(net);
    const CoreMap map = map_network(g, CoreConstraints{}, {1, 1, 1});
    CHECK(map.cores_used() == g.total_compartments());
}

TEST_CASE("error-path compartments follow the paired layer policy")
{
    Network net = small_net("8x8x1-20d-5d", FeedbackMode::FA);
    const NetworkGraph g = make_graph(net);
    // pops: fwd0, fwd1, fwd2, loss+, loss-, err1+, err1-
    REQUIRE(g.pops.size() == 7);
    CHECK(g.pops[5].paired_layer == 1);
    const CoreMap map = map_network(g, CoreConstraints{}, {64, 4, 5});
    CHECK(map.l_m_used[5] == 4); // err pair packed with layer 1's policy
}

TEST_CASE("sweep: cores weakly decrease, serialization weakly increases with l_m")
{
    Network net = small_net("16x16x1-60d-10d", FeedbackMode::DFA);
    const NetworkGraph g = make_graph(net);
    const std::vector<std::int64_t> lms = {1, 2, 5, 10, 20, 50};
    const auto rows = sweep_neurons_per_core(g, CoreConstraints{}, lms, 64, "DFA");
    REQUIRE(rows.size() == 6);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        REQUIRE(rows[i].feasible);
        CHECK(rows[i].cores_used <= rows[i - 1].cores_used);
        CHECK(rows[i].steps_per_sample >= rows[i - 1].steps_per_sample);
    }
    const std::string csv = sweep_csv(rows);
    CHECK(csv.find("l_m,cores_used,steps_per_sample,energy_proxy,mode,status") == 0);
}

TEST_CASE("an oversized l_m is marked infeasible in the sweep")
{
    Network net = small_net("8x8x1-20d-5d", FeedbackMode::DFA);
    const NetworkGraph g = make_graph(net);
    const auto rows = sweep_neurons_per_core(g, CoreConstraints{}, {4096}, 64, "DFA");
    REQUIRE(rows.size() == 1);
    CHECK_FALSE(rows[0].feasible);
    CHECK(sweep_csv(rows).find("infeasible") != std::string::npos);
}

TEST_CASE("DFA uses no more cores than FA at equal packing")
{
    for (const std::int64_t lm : {1, 5, 10}) {
        Network fa = small_net("16x16x1-60d-10d", FeedbackMode::FA);
        Network dfa = small_net("16x16x1-60d-10d", FeedbackMode::DFA);
        const NetworkGraph gfa = make_graph(fa);
        const NetworkGraph gdfa = make_graph(dfa);
        std::vector<std::int64_t> policy(3, lm);
        const CoreMap mfa = map_network(gfa, CoreConstraints{}, policy);
        const CoreMap mdfa = map_network(gdfa, CoreConstraints{}, policy);
        CHECK(mdfa.cores_used() <= mfa.cores_used());
    }
}

TEST_CASE("the 784-100-10 packing counts forward and error cores")
{
    Network net = small_net("28x28x1-100d-10d", FeedbackMode::DFA);
    const NetworkGraph g = make_graph(net);
    const CoreMap map = map_network(g, CoreConstraints{}, {10, 10, 10});
    // forward: ceil(784/10) + ceil(100/10) + ceil(10/10); loss pair: 2 * ceil(10/10)
    CHECK(map.cores_used() == 79 + 10 + 1 + 2);
}
