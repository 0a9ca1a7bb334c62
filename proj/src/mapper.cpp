#include "emstdp/mapper.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace emstdp {

void CoreConstraints::validate() const
{
    if (max_compartments_per_core <= 0 || max_synapses_per_core <= 0 || max_fanin_per_core <= 0
            || max_fanout_per_core <= 0) {
        throw std::invalid_argument("core constraints must all be positive");
    }
}

NetworkGraph make_graph(const Network &net)
{
    const NetworkSpec &spec = net.spec();
    NetworkGraph g;
    auto add_pop = [&](std::string name, std::int64_t size, std::size_t paired) {
        PopulationNode p;
        p.name = std::move(name);
        p.size = size;
        p.paired_layer = paired;
        p.base = g.total_compartments();
        g.pops.push_back(std::move(p));
        return static_cast<std::int32_t>(g.pops.size() - 1);
    };

    std::vector<std::int32_t> fwd_pop(spec.num_layers());
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        fwd_pop[l] = add_pop("fwd" + std::to_string(l), spec.layers[l].size(), l);
    }
    const std::size_t out_layer = spec.num_layers() - 1;
    const std::int32_t loss_pos = add_pop("loss+", spec.num_classes(), out_layer);
    const std::int32_t loss_neg = add_pop("loss-", spec.num_classes(), out_layer);
    std::vector<std::int32_t> err_pos(net.fa_pairs().size());
    std::vector<std::int32_t> err_neg(net.fa_pairs().size());
    for (std::size_t i = 0; i < net.fa_pairs().size(); ++i) {
        const std::size_t layer = static_cast<std::size_t>(net.fa_pairs()[i].layer);
        err_pos[i] = add_pop("err" + std::to_string(layer) + "+",
                spec.layers[layer].size(), layer);
        err_neg[i] = add_pop("err" + std::to_string(layer) + "-",
                spec.layers[layer].size(), layer);
    }

    auto dense_edge = [&](std::int32_t src_pop, std::int32_t dst_pop, std::int64_t rows,
                              std::int64_t cols) {
        ConnectionEdge e;
        e.src_pop = src_pop;
        e.dst_pop = dst_pop;
        e.entries.reserve(static_cast<std::size_t>(rows * cols));
        for (std::int32_t i = 0; i < rows; ++i) {
            for (std::int32_t j = 0; j < cols; ++j) {
                e.entries.emplace_back(i, j);
            }
        }
        g.edges.push_back(std::move(e));
    };
    auto identity_edge = [&](std::int32_t src_pop, std::int32_t dst_pop, std::int64_t n) {
        ConnectionEdge e;
        e.src_pop = src_pop;
        e.dst_pop = dst_pop;
        e.entries.reserve(static_cast<std::size_t>(n));
        for (std::int32_t i = 0; i < n; ++i) {
            e.entries.emplace_back(i, i);
        }
        g.edges.push_back(std::move(e));
    };

    // Forward connections.
    {
        std::size_t di = 0;
        std::size_t ci = 0;
        for (std::size_t l = 1; l < spec.num_layers(); ++l) {
            if (spec.layers[l].kind == LayerKind::dense) {
                const DenseConn &c = net.dense_conns()[di++];
                dense_edge(fwd_pop[l - 1], fwd_pop[l], c.rows, c.cols);
            } else {
                const ConvConn &c = net.conv_conns()[ci++];
                ConnectionEdge e;
                e.src_pop = fwd_pop[l - 1];
                e.dst_pop = fwd_pop[l];
                e.entries.reserve(c.col.size());
                const std::int32_t rows = static_cast<std::int32_t>(spec.layers[l - 1].size());
                for (std::int32_t i = 0; i < rows; ++i) {
                    for (std::int32_t s = c.row_start[i]; s < c.row_start[i + 1]; ++s) {
                        e.entries.emplace_back(i, c.col[s]);
                    }
                }
                g.edges.push_back(std::move(e));
            }
        }
    }

    // Loss wiring: predicted output spikes into both channels, and the
    // loss pair's injection back into the output layer.
    const std::int64_t classes = spec.num_classes();
    identity_edge(fwd_pop[out_layer], loss_pos, classes);
    identity_edge(fwd_pop[out_layer], loss_neg, classes);
    identity_edge(loss_pos, fwd_pop[out_layer], classes);
    identity_edge(loss_neg, fwd_pop[out_layer], classes);

    // FA chain: four cross blocks per B matrix, plus gating taps from the
    // paired forward layer and the +-g injections back into it.
    for (std::size_t i = 0; i < net.fa_pairs().size(); ++i) {
        const DenseConn &b = net.fa_b()[i];
        const std::size_t layer = static_cast<std::size_t>(net.fa_pairs()[i].layer);
        const std::int32_t up_pos = (i + 1 == net.fa_pairs().size()) ? loss_pos : err_pos[i + 1];
        const std::int32_t up_neg = (i + 1 == net.fa_pairs().size()) ? loss_neg : err_neg[i + 1];
        dense_edge(up_pos, err_pos[i], b.rows, b.cols);
        dense_edge(up_pos, err_neg[i], b.rows, b.cols);
        dense_edge(up_neg, err_pos[i], b.rows, b.cols);
        dense_edge(up_neg, err_neg[i], b.rows, b.cols);
        identity_edge(fwd_pop[layer], err_pos[i], spec.layers[layer].size());
        identity_edge(fwd_pop[layer], err_neg[i], spec.layers[layer].size());
        identity_edge(err_pos[i], fwd_pop[layer], spec.layers[layer].size());
        identity_edge(err_neg[i], fwd_pop[layer], spec.layers[layer].size());
    }

    // DFA broadcast from the loss pair straight into hidden trainable layers.
    for (const DenseConn &b : net.dfa_b()) {
        dense_edge(loss_pos, fwd_pop[b.dst_layer], b.rows, b.cols);
        dense_edge(loss_neg, fwd_pop[b.dst_layer], b.rows, b.cols);
    }
    return g;
}

Adjacency build_adjacency(const NetworkGraph &graph, std::size_t edge_index)
{
    if (edge_index >= graph.edges.size()) {
        throw std::invalid_argument("adjacency: edge index out of range");
    }
    const ConnectionEdge &e = graph.edges[edge_index];
    Adjacency a;
    a.src_size = graph.pops[e.src_pop].size;
    a.dst_size = graph.pops[e.dst_pop].size;
    a.fanout.assign(static_cast<std::size_t>(a.src_size), 0);
    a.fanin.assign(static_cast<std::size_t>(a.dst_size), 0);
    a.entries = e.entries;
    a.total = static_cast<std::int64_t>(e.entries.size());
    for (const auto &[s, d] : e.entries) {
        ++a.fanout[s];
        ++a.fanin[d];
    }
    return a;
}

namespace {

// Incoming (src global id, dst local id) and outgoing (dst global id,
// src local id) synapse views of one population.
struct PopIncidence {
    std::vector<std::pair<std::int64_t, std::int32_t>> in;  // (global src, local dst)
    std::vector<std::pair<std::int64_t, std::int32_t>> out; // (global dst, local src)
};

PopIncidence pop_incidence(const NetworkGraph &graph, std::size_t pop_index)
{
    PopIncidence inc;
    const std::int32_t p = static_cast<std::int32_t>(pop_index);
    for (const ConnectionEdge &e : graph.edges) {
        if (e.dst_pop == p) {
            const std::int64_t src_base = graph.pops[e.src_pop].base;
            for (const auto &[s, d] : e.entries) {
                inc.in.emplace_back(src_base + s, d);
            }
        }
        if (e.src_pop == p) {
            const std::int64_t dst_base = graph.pops[e.dst_pop].base;
            for (const auto &[s, d] : e.entries) {
                inc.out.emplace_back(dst_base + d, s);
            }
        }
    }
    return inc;
}

struct ChunkStats {
    std::int64_t in_synapses = 0;
    std::int64_t fanin_sources = 0;
    std::int64_t fanout_targets = 0;
};

// Exact per-chunk tallies for packing l_m consecutive compartments per core.
std::vector<ChunkStats> chunk_stats(const PopIncidence &inc, std::int64_t pop_size,
        std::int64_t l_m, std::int64_t id_space)
{
    const std::size_t n_chunks = static_cast<std::size_t>((pop_size + l_m - 1) / l_m);
    std::vector<ChunkStats> stats(n_chunks);
    std::vector<std::int32_t> stamp(static_cast<std::size_t>(id_space), -1);
    for (const auto &[src, dst] : inc.in) {
        const std::int32_t c = static_cast<std::int32_t>(dst / l_m);
        ++stats[c].in_synapses;
        if (stamp[src] != c) {
            stamp[src] = c;
            ++stats[c].fanin_sources;
        }
    }
    std::fill(stamp.begin(), stamp.end(), -1);
    for (const auto &[dst, src] : inc.out) {
        const std::int32_t c = static_cast<std::int32_t>(src / l_m);
        if (stamp[dst] != c) {
            stamp[dst] = c;
            ++stats[c].fanout_targets;
        }
    }
    return stats;
}

bool chunks_fit(const std::vector<ChunkStats> &stats, const CoreConstraints &k)
{
    for (const ChunkStats &s : stats) {
        if (s.in_synapses > k.max_synapses_per_core || s.fanin_sources > k.max_fanin_per_core
                || s.fanout_targets > k.max_fanout_per_core) {
            return false;
        }
    }
    return true;
}

std::int64_t fit_l_m(const NetworkGraph &graph, std::size_t pop_index,
        const CoreConstraints &constraints, std::int64_t requested_max,
        const PopIncidence &inc)
{
    const std::int64_t pop_size = graph.pops[pop_index].size;
    const std::int64_t id_space = graph.total_compartments();

    // Single-compartment feasibility first: fan-in of one neuron already
    // breaking a bound makes the population unmappable.
    {
        const auto stats = chunk_stats(inc, pop_size, 1, id_space);
        if (!chunks_fit(stats, constraints)) {
            throw std::runtime_error("population " + graph.pops[pop_index].name
                    + " is unmappable: a single compartment violates the core constraints");
        }
    }

    std::int64_t worst_in = 0;
    {
        std::vector<std::int64_t> per_neuron(static_cast<std::size_t>(pop_size), 0);
        for (const auto &[src, dst] : inc.in) {
            (void)src;
            ++per_neuron[dst];
        }
        for (const std::int64_t v : per_neuron) {
            worst_in = std::max(worst_in, v);
        }
    }
    std::int64_t cand = std::min(requested_max, constraints.max_compartments_per_core);
    if (worst_in > 0) {
        cand = std::min(cand, constraints.max_synapses_per_core / worst_in);
    }
    cand = std::min(cand, pop_size);
    cand = std::max<std::int64_t>(cand, 1);
    while (cand > 1) {
        const auto stats = chunk_stats(inc, pop_size, cand, id_space);
        if (chunks_fit(stats, constraints)) {
            return cand;
        }
        --cand;
    }
    return 1;
}

} // namespace

std::int64_t neurons_per_core(const NetworkGraph &graph, std::size_t pop_index,
        const CoreConstraints &constraints, std::int64_t requested_max)
{
    constraints.validate();
    if (pop_index >= graph.pops.size()) {
        throw std::invalid_argument("population index out of range");
    }
    if (requested_max < 1) {
        throw std::invalid_argument("requested l_m must be at least 1");
    }
    const PopIncidence inc = pop_incidence(graph, pop_index);
    return fit_l_m(graph, pop_index, constraints, requested_max, inc);
}

CoreMap map_network(const NetworkGraph &graph, const CoreConstraints &constraints,
        const std::vector<std::int64_t> &per_layer_l_m)
{
    constraints.validate();
    CoreMap map;
    map.core_of.assign(static_cast<std::size_t>(graph.total_compartments()), -1);
    map.l_m_used.resize(graph.pops.size());

    for (std::size_t p = 0; p < graph.pops.size(); ++p) {
        const PopulationNode &pop = graph.pops[p];
        const std::int64_t requested = (pop.paired_layer < per_layer_l_m.size())
                ? per_layer_l_m[pop.paired_layer]
                : constraints.max_compartments_per_core;
        if (requested < 1) {
            throw std::invalid_argument("per-layer l_m must be at least 1");
        }
        const PopIncidence inc = pop_incidence(graph, p);
        const std::int64_t l_m = fit_l_m(graph, p, constraints, requested, inc);
        map.l_m_used[p] = l_m;

        const std::int32_t first_core = static_cast<std::int32_t>(map.cores.size());
        const std::int64_t n_chunks = (pop.size + l_m - 1) / l_m;
        for (std::int64_t c = 0; c < n_chunks; ++c) {
            CoreTally t;
            t.compartments = std::min(l_m, pop.size - c * l_m);
            map.cores.push_back(t);
        }
        for (std::int64_t i = 0; i < pop.size; ++i) {
            map.core_of[static_cast<std::size_t>(pop.base + i)] =
                    first_core + static_cast<std::int32_t>(i / l_m);
        }
        const auto stats = chunk_stats(inc, pop.size, l_m, graph.total_compartments());
        for (std::size_t c = 0; c < stats.size(); ++c) {
            CoreTally &t = map.cores[static_cast<std::size_t>(first_core) + c];
            t.in_synapses = stats[c].in_synapses;
            t.fanin_sources = stats[c].fanin_sources;
            t.fanout_targets = stats[c].fanout_targets;
        }
    }

    // Verified, not assumed.
    for (const CoreTally &t : map.cores) {
        if (t.compartments > constraints.max_compartments_per_core
                || t.in_synapses > constraints.max_synapses_per_core
                || t.fanin_sources > constraints.max_fanin_per_core
                || t.fanout_targets > constraints.max_fanout_per_core) {
            throw std::runtime_error("core map violates constraints after placement");
        }
    }
    for (const std::int32_t c : map.core_of) {
        if (c < 0) {
            throw std::runtime_error("unassigned compartment after placement");
        }
    }
    return map;
}

std::vector<CostProxy> sweep_neurons_per_core(const NetworkGraph &graph,
        const CoreConstraints &constraints, const std::vector<std::int64_t> &l_m_list,
        std::int32_t phase_len, const std::string &mode_label, const SweepOptions &opt)
{
    std::vector<CostProxy> rows;
    rows.reserve(l_m_list.size());
    for (const std::int64_t l_m : l_m_list) {
        CostProxy row;
        row.l_m = l_m;
        row.mode = mode_label;
        if (l_m < 1 || l_m > constraints.max_compartments_per_core) {
            row.feasible = false;
            rows.push_back(row);
            continue;
        }
        std::vector<std::int64_t> policy(graph.pops.size(), l_m);
        // policy is indexed by forward layer; give every layer the same l_m
        std::size_t max_layer = 0;
        for (const PopulationNode &p : graph.pops) {
            max_layer = std::max(max_layer, p.paired_layer);
        }
        policy.assign(max_layer + 1, l_m);
        try {
            const CoreMap map = map_network(graph, constraints, policy);
            row.cores_used = map.cores_used();
            std::int64_t max_load = 0;
            for (const CoreTally &t : map.cores) {
                max_load = std::max(max_load, t.compartments);
            }
            const std::int64_t serialization = (max_load + opt.k0 - 1) / opt.k0;
            row.steps_per_sample = 2LL * phase_len * std::max<std::int64_t>(1, serialization);
            row.energy_proxy = row.cores_used * row.steps_per_sample;
        } catch (const std::exception &) {
            row.feasible = false;
        }
        rows.push_back(row);
    }
    return rows;
}

std::string sweep_csv(const std::vector<CostProxy> &rows)
{
    std::ostringstream os;
    os << "l_m,cores_used,steps_per_sample,energy_proxy,mode,status\n";
    for (const CostProxy &r : rows) {
        if (r.feasible) {
            os << r.l_m << "," << r.cores_used << "," << r.steps_per_sample << ","
               << r.energy_proxy << "," << r.mode << ",ok\n";
        } else {
            os << r.l_m << ",,,," << r.mode << ",infeasible\n";
        }
    }
    return os.str();
}

std::string coremap_csv(const NetworkGraph &graph, const CoreMap &map)
{
    std::ostringstream os;
    os << "population,l_m,first_compartment,size,cores\n";
    for (std::size_t p = 0; p < graph.pops.size(); ++p) {
        const PopulationNode &pop = graph.pops[p];
        std::int64_t n_cores = (pop.size + map.l_m_used[p] - 1) / map.l_m_used[p];
        os << pop.name << "," << map.l_m_used[p] << "," << pop.base << "," << pop.size << ","
           << n_cores << "\n";
    }
    os << "core,compartments,in_synapses,fanin_sources,fanout_targets\n";
    for (std::size_t c = 0; c < map.cores.size(); ++c) {
        const CoreTally &t = map.cores[c];
        os << c << "," << t.compartments << "," << t.in_synapses << "," << t.fanin_sources << ","
           << t.fanout_targets << "\n";
    }
    return os.str();
}

} // namespace emstdp
