#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emstdp/network.hpp"

namespace emstdp {

struct CoreConstraints {
    std::int64_t max_compartments_per_core = 1024;
    std::int64_t max_synapses_per_core = 1'000'000;
    std::int64_t max_fanin_per_core = 4096;  // distinct presynaptic sources
    std::int64_t max_fanout_per_core = 4096; // distinct postsynaptic targets

    void validate() const;
};

// Population/connection view of a built network, the unit the mapper works
// on. Compartments get global ids in population order.
struct PopulationNode {
    std::string name;
    std::int64_t size = 0;
    std::size_t paired_layer = 0; // forward layer whose l_m policy applies
    std::int64_t base = 0;        // first global compartment id
};

struct ConnectionEdge {
    std::int32_t src_pop = 0;
    std::int32_t dst_pop = 0;
    std::vector<std::pair<std::int32_t, std::int32_t>> entries; // (src, dst) per synapse
};

struct NetworkGraph {
    std::vector<PopulationNode> pops;
    std::vector<ConnectionEdge> edges;

    std::int64_t total_compartments() const
    {
        return pops.empty() ? 0 : pops.back().base + pops.back().size;
    }
};

// Includes the error path: loss pair, FA chain pairs, cross-connections,
// injection synapses and DFA broadcast fan-out.
NetworkGraph make_graph(const Network &net);

// Sparse adjacency for one connection edge; row/column sums give per-neuron
// fan-out/fan-in.
struct Adjacency {
    std::int64_t src_size = 0;
    std::int64_t dst_size = 0;
    std::vector<std::int32_t> fanout; // per source neuron
    std::vector<std::int32_t> fanin;  // per destination neuron
    std::int64_t total = 0;
    std::vector<std::pair<std::int32_t, std::int32_t>> entries;
};

Adjacency build_adjacency(const NetworkGraph &graph, std::size_t edge_index);

// Largest packing l_m for one population such that every core built from
// consecutive index chunks of l_m compartments respects all four bounds,
// capped by requested_max. Throws if even a single compartment violates.
std::int64_t neurons_per_core(const NetworkGraph &graph, std::size_t pop_index,
        const CoreConstraints &constraints, std::int64_t requested_max);

struct CoreTally {
    std::int64_t compartments = 0;
    std::int64_t in_synapses = 0;
    std::int64_t fanin_sources = 0;
    std::int64_t fanout_targets = 0;
};

struct CoreMap {
    std::vector<std::int32_t> core_of; // per global compartment id
    std::vector<CoreTally> cores;
    std::vector<std::int64_t> l_m_used; // per population

    std::int64_t cores_used() const { return static_cast<std::int64_t>(cores.size()); }
};

// Deterministic layer-at-a-time placement: populations in order, neurons in
// index order, ceil(size / l_m) cores per population, no cross-population
// sharing. Tallies are verified against the constraints after placement.
CoreMap map_network(const NetworkGraph &graph, const CoreConstraints &constraints,
        const std::vector<std::int64_t> &per_layer_l_m);

struct CostProxy {
    std::int64_t l_m = 0;
    std::int64_t cores_used = 0;
    std::int64_t steps_per_sample = 0;
    std::int64_t energy_proxy = 0;
    bool feasible = true;
    std::string mode;
};

// Cost model for the packing sweep: per-core time multiplexing serializes
// execution as ceil(max compartments on a core / k0) with k0 = 8, so
// steps_per_sample = 2T * serialization and energy = cores * steps.
struct SweepOptions {
    std::int64_t k0 = 8;
};

std::vector<CostProxy> sweep_neurons_per_core(const NetworkGraph &graph,
        const CoreConstraints &constraints, const std::vector<std::int64_t> &l_m_list,
        std::int32_t phase_len, const std::string &mode_label, const SweepOptions &opt = {});

std::string sweep_csv(const std::vector<CostProxy> &rows);
std::string coremap_csv(const NetworkGraph &graph, const CoreMap &map);

} // namespace emstdp
