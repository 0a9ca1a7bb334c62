// Acceptance suite: runs every gate criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exit code 0 iff all pass.
//
// The learning criteria run on MNIST IDX files when EMSTDP_DATA_DIR points
// at them (train-images-idx3-ubyte etc.); otherwise they fall back to the
// bundled procedural digit set, and say so on the line.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "emstdp/checkpoint.hpp"
#include "emstdp/harness.hpp"
#include "emstdp/mapper.hpp"
#include "emstdp/oracle.hpp"
#include "emstdp/plasticity.hpp"
#include "emstdp/rng.hpp"

using namespace emstdp;

namespace {

int g_failures = 0;

void report(const std::string &name, bool ok, const std::string &detail)
{
    std::printf("[%s] %s — %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) {
        ++g_failures;
    }
}

double now_s()
{
    return std::chrono::duration<double>(
            std::chrono::steady_clock::now().time_since_epoch())
            .count();
}

// ---------------------------------------------------------------------
// C1: exhaustive equivalence of the tag-form update with eta*(hhat-h)*pre

void c1_algebraic_equivalence()
{
    const double t0 = now_s();
    LearningParams params;
    params.eta_num = 1;
    params.eta_shift = 3;
    bool ok = true;
    for (std::int32_t h_hat = 0; h_hat <= 64 && ok; ++h_hat) {
        for (std::int32_t h = 0; h <= 64 && ok; ++h) {
            for (std::int32_t pre = 0; pre <= 64; ++pre) {
                PhaseTraces t;
                t.h = h;
                t.h_hat = h_hat;
                t.z = h + h_hat;
                const Dyadic d = emstdp_weight_delta(t, pre, params);
                if (d.num != static_cast<std::int64_t>(h_hat - h) * pre || d.shift != 3) {
                    ok = false;
                    break;
                }
            }
        }
    }
    const double dt = now_s() - t0;
    char buf[128];
    std::snprintf(buf, sizeof buf, "65^3 combinations, %.2fs", dt);
    report("algebraic-rule-equivalence", ok && dt < 1.0, buf);
}

// ---------------------------------------------------------------------
// C2: bias-encoded input neuron emits exactly i spikes for every i in [0,64]

void c2_spike_rate_linearity()
{
    Network net = Network::build(make_network_spec("1x65x1-5d", FeedbackMode::DFA), 1);
    SamplePresentation s;
    s.input.resize(65);
    for (int i = 0; i <= 64; ++i) {
        s.input[i] = i;
    }
    const TraceSnapshot t = net.run_phase1_with(s);
    bool ok = true;
    for (int i = 0; i <= 64; ++i) {
        if (t.h[0][i] != i) {
            ok = false;
        }
    }
    report("spike-rate-linearity", ok, "h_in == i for every i in [0,64], T = theta = 64");
}

// ---------------------------------------------------------------------
// C3: gating soundness over randomized networks

void c3_gating_soundness()
{
    bool ok = true;
    std::int64_t silent_checked = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        const FeedbackMode mode = (trial % 2 == 0) ? FeedbackMode::DFA : FeedbackMode::FA;
        const char *structures[] = {"3x3x1-10d-4d", "4x4x1-12d-5d", "2x5x1-8d-3d"};
        Network net = Network::build(
                make_network_spec(structures[trial % 3], mode), 1000 + trial);
        const std::size_t n_in = static_cast<std::size_t>(net.spec().layers[0].size());
        SamplePresentation s;
        s.input.resize(n_in);
        for (std::size_t i = 0; i < n_in; ++i) {
            s.input[i] = static_cast<std::int32_t>(
                    rng::uniform_int(trial, rng::Stream::misc, i, 0, 64));
        }
        s.label = static_cast<std::int32_t>(trial % net.spec().num_classes());
        net.set_sample(s);
        const TraceSnapshot p1 = net.run_phase1();
        net.run_phase2();
        for (std::size_t l = 1; l < net.num_forward_layers(); ++l) {
            if (!net.spec().trainable[l]) {
                continue;
            }
            const auto &events = net.injection_events(l);
            for (std::size_t j = 0; j < events.size(); ++j) {
                if (p1.h[l][j] == 0) {
                    ++silent_checked;
                    if (events[j] != 0) {
                        ok = false;
                    }
                }
            }
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "100 seeded trials, %lld silent units, zero injections",
            static_cast<long long>(silent_checked));
    report("gating-soundness", ok && silent_checked > 0, buf);
}

// ---------------------------------------------------------------------
// C4: oracle EMSTDP (DFA) deltas vs exact backprop on random 20-10-5 nets

void c4_gradient_direction()
{
    // Feedback alignment is an emergent training property: after the
    // forward weights adapt to the fixed random B on a teacher-labeled
    // task, EMSTDP-DFA deltas point along the true gradient descent
    // direction. Degenerate probes (either delta identically zero) are
    // skipped; nets without usable probes contribute zero to the mean.
    double cosine_sum = 0.0;
    double sign_sum = 0.0;
    int sign_nets = 0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        OracleParams p;
        p.mode = ActivationMode::relaxed;
        FpNetwork net = build_fp_network(
                make_network_spec("1x20x1-10d-5d", FeedbackMode::DFA), 300 + trial, p);

        std::vector<double> teacher(5 * 20);
        for (std::size_t i = 0; i < teacher.size(); ++i) {
            teacher[i] = rng::uniform_sym(trial * 31 + 9, rng::Stream::misc, 7000 + i, 1.0);
        }
        std::vector<double> x(20);
        auto make_sample = [&](std::uint64_t salt, std::uint64_t k, std::int32_t &label) {
            // sparse rate vectors, like quantized image data
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double u = rng::u01(trial + salt, rng::Stream::misc, k * 64 + i);
                x[i] = u < 0.75 ? 0.0 : (u - 0.75) * 4.0 * 64.0;
            }
            double best = -1e18;
            label = 0;
            for (int c = 0; c < 5; ++c) {
                double acc = 0.0;
                for (int i = 0; i < 20; ++i) {
                    acc += teacher[c * 20 + i] * x[i];
                }
                if (acc > best) {
                    best = acc;
                    label = c;
                }
            }
        };
        for (int step = 0; step < 2500; ++step) {
            std::int32_t label = 0;
            make_sample(1, static_cast<std::uint64_t>(step), label);
            fp_apply_deltas(net, fp_emstdp_step(net, x, label, 0.125, FeedbackMode::DFA));
        }

        double net_cos = 0.0;
        double net_sign = 0.0;
        int counted = 0;
        for (int probe = 0; probe < 60; ++probe) {
            std::int32_t label = 0;
            make_sample(555, static_cast<std::uint64_t>(probe), label);
            const LayerDeltas em = fp_emstdp_step(net, x, label, 0.125, FeedbackMode::DFA);
            LayerDeltas bp = bp_gradient(net, x, label);
            for (Mat &m : bp.dw) {
                for (double &v : m.a) {
                    v = -v;
                }
            }
            double n_em = 0.0;
            double n_bp = 0.0;
            for (const double v : em.dw[0].a) {
                n_em += v * v;
            }
            for (const double v : bp.dw[0].a) {
                n_bp += v * v;
            }
            const Agreement ag = agreement_metric(em, bp);
            if (ag.cosine.size() == 2 && n_em > 0.0 && n_bp > 0.0) {
                net_cos += ag.cosine[0];
                net_sign += ag.sign_match[1];
                ++counted;
            }
        }
        if (counted >= 3) {
            cosine_sum += net_cos / counted;
            sign_sum += net_sign / counted;
            ++sign_nets;
        }
    }
    const double mean_cos = cosine_sum / 20.0; // degenerate nets count as zero
    const double mean_sign = sign_nets > 0 ? sign_sum / sign_nets : 0.0;
    char buf[160];
    std::snprintf(buf, sizeof buf,
            "20 nets (%d with live probes): mean hidden cosine %.3f (> 0), output sign-match %.3f (> 0.9)",
            sign_nets, mean_cos, mean_sign);
    report("gradient-direction-sanity", mean_cos > 0.0 && mean_sign > 0.9 && sign_nets >= 10, buf);
}

// ---------------------------------------------------------------------
// desk-scale data plumbing

struct DeskData {
    std::string train_images, train_labels, test_images, test_labels;
    bool real_mnist = false;
    std::string tag;
};

DeskData desk_data()
{
    DeskData d;
    const char *env = std::getenv("EMSTDP_DATA_DIR");
    if (env != nullptr) {
        namespace fs = std::filesystem;
        const fs::path dir(env);
        const fs::path ti = dir / "train-images-idx3-ubyte";
        const fs::path tl = dir / "train-labels-idx1-ubyte";
        const fs::path vi = dir / "t10k-images-idx3-ubyte";
        const fs::path vl = dir / "t10k-labels-idx1-ubyte";
        if (fs::exists(ti) && fs::exists(tl) && fs::exists(vi) && fs::exists(vl)) {
            d.train_images = ti.string();
            d.train_labels = tl.string();
            d.test_images = vi.string();
            d.test_labels = vl.string();
            d.real_mnist = true;
            d.tag = "MNIST(" + std::string(env) + ")";
            return d;
        }
        std::printf("note: EMSTDP_DATA_DIR=%s lacks the IDX files, using the synthetic stand-in\n",
                env);
    }
    d.tag = "synthetic-digits stand-in";
    return d;
}

RunConfig desk_config(const DeskData &d, const std::string &out_tag)
{
    RunConfig c;
    c.structure = "28x28x1-100d-10d";
    c.phase_len = 64;
    c.theta = 64;
    c.eta_num = 1;
    c.eta_shift = 3;
    c.epochs = 3;
    c.seed = 42;
    c.limit_train = 5000;
    c.limit_test = 1000;
    c.out_dir = (std::filesystem::temp_directory_path() / ("emstdp_accept_" + out_tag)).string();
    if (d.real_mnist) {
        c.train_images = d.train_images;
        c.train_labels = d.train_labels;
        c.test_images = d.test_images;
        c.test_labels = d.test_labels;
    } else {
        c.synth_train = 6000;
        c.synth_test = 1200;
    }
    return c;
}

// C5 + C6 + C10 share the desk-scale runs.

void c5_c6_c10_desk_scale(const DeskData &data)
{
    // quantized engine, DFA (the paper's preferred wiring)
    RunConfig cq = desk_config(data, "dfa");
    cq.feedback = "DFA";
    const double t0 = now_s();
    const TrainResult dfa = run_train(cq);

    // FP oracle on identical data/structure
    RunConfig co = desk_config(data, "oracle");
    co.feedback = "DFA";
    const TrainResult oracle = run_oracle_train(co);

    // FA engine for the parity criterion
    RunConfig cf = desk_config(data, "fa");
    cf.feedback = "FA";
    const TrainResult fa = run_train(cf);
    const double dt = now_s() - t0;

    const double q_acc = dfa.final_accuracy();
    const double o_acc = oracle.final_accuracy();
    const double fa_acc = fa.final_accuracy();
    {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                "%s: quantized %.1f%% (>= 88), oracle %.1f%% (>= 93), gap %.1f (<= 8), %.0fs",
                data.tag.c_str(), 100 * q_acc, 100 * o_acc, 100 * (o_acc - q_acc), dt);
        report("desk-scale-learning",
                q_acc >= 0.88 && o_acc >= 0.93 && (o_acc - q_acc) <= 0.08 && dt <= 1800.0, buf);
    }
    {
        char buf[160];
        std::snprintf(buf, sizeof buf, "DFA %.1f%% vs FA %.1f%% (DFA >= FA - 1 point)",
                100 * q_acc, 100 * fa_acc);
        report("dfa-vs-fa-parity", q_acc >= fa_acc - 0.01, buf);
    }

    // C10: identical config + seed runs byte-identically
    RunConfig cr = desk_config(data, "dfa_repeat");
    cr.feedback = "DFA";
    const TrainResult repeat = run_train(cr);
    auto bytes = [](const std::string &p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };
    const bool identical = bytes(dfa.checkpoint_path) == bytes(repeat.checkpoint_path)
            && !bytes(dfa.checkpoint_path).empty();
    report("determinism", identical, "two desk-scale runs, byte-identical checkpoints");
}

// ---------------------------------------------------------------------
// C7: mapper validity on random specs + packing monotonicity

void c7_mapper_validity()
{
    bool ok = true;
    std::string detail = "50 random specs mapped within bounds";
    for (std::uint64_t trial = 0; trial < 50 && ok; ++trial) {
        const std::int64_t in_side = rng::uniform_int(trial, rng::Stream::misc, 1, 3, 12);
        const std::int64_t hidden = rng::uniform_int(trial, rng::Stream::misc, 2, 4, 120);
        const std::int64_t classes = rng::uniform_int(trial, rng::Stream::misc, 3, 2, 12);
        const std::int64_t lm = rng::uniform_int(trial, rng::Stream::misc, 4, 1, 64);
        char structure[64];
        std::snprintf(structure, sizeof structure, "%lldx%lldx1-%lldd-%lldd",
                static_cast<long long>(in_side), static_cast<long long>(in_side),
                static_cast<long long>(hidden), static_cast<long long>(classes));
        Network net = Network::build(make_network_spec(structure,
                                             trial % 2 ? FeedbackMode::FA : FeedbackMode::DFA),
                trial);
        const NetworkGraph g = make_graph(net);
        CoreConstraints k;
        std::vector<std::int64_t> policy(3, lm);
        const CoreMap map = map_network(g, k, policy);
        std::int64_t total = 0;
        for (const CoreTally &t : map.cores) {
            total += t.compartments;
            if (t.compartments > k.max_compartments_per_core
                    || t.in_synapses > k.max_synapses_per_core
                    || t.fanin_sources > k.max_fanin_per_core
                    || t.fanout_targets > k.max_fanout_per_core) {
                ok = false;
            }
        }
        if (total != g.total_compartments()) {
            ok = false;
        }
        for (const std::int32_t c : map.core_of) {
            if (c < 0 || c >= map.cores_used()) {
                ok = false;
            }
        }
    }

    // the paper's network: packing 10 per core must use strictly fewer
    // cores than 1 per core, and cores_used is weakly decreasing in l_m
    Network net = Network::build(
            make_network_spec("28x28x1-5x5k16c2s-3x3k8c2s-100d-10d", FeedbackMode::DFA), 5);
    const NetworkGraph g = make_graph(net);
    const auto rows = sweep_neurons_per_core(g, CoreConstraints{}, {1, 2, 5, 10, 20, 50}, 64,
            "DFA");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (!rows[i].feasible || rows[i].cores_used > rows[i - 1].cores_used) {
            ok = false;
            detail = "sweep monotonicity violated";
        }
    }
    if (rows[3].cores_used >= rows[0].cores_used) { // l_m 10 vs 1
        ok = false;
        detail = "l_m=10 did not reduce cores vs l_m=1";
    }
    report("mapper-validity", ok, detail);
}

// ---------------------------------------------------------------------
// C8: DFA structural saving, exact error-path compartment counts

void c8_dfa_structural_saving()
{
    const char *structure = "28x28x1-5x5k16c2s-3x3k8c2s-100d-10d";
    Network dfa = Network::build(make_network_spec(structure, FeedbackMode::DFA), 9);
    Network fa = Network::build(make_network_spec(structure, FeedbackMode::FA), 9);
    const bool ok = dfa.error_path_compartments() == 2 * 10
            && fa.error_path_compartments() == 2 * (100 + 10);
    char buf[128];
    std::snprintf(buf, sizeof buf, "DFA %lld == 20, FA %lld == 220",
            static_cast<long long>(dfa.error_path_compartments()),
            static_cast<long long>(fa.error_path_compartments()));
    report("dfa-structural-saving", ok, buf);
}

// ---------------------------------------------------------------------
// C9: incremental learning shape (drop, recovery, joint-baseline gap)

void c9_incremental(const DeskData &data)
{
    // desk scale: 500 samples/class/chunk over 5 chunks = 2500 per class
    RunConfig base;
    base.structure = "28x28x1-100d-10d";
    base.epochs = 1;
    base.seed = 42;
    base.out_dir =
            (std::filesystem::temp_directory_path() / "emstdp_accept_incr").string();
    if (data.real_mnist) {
        base.train_images = data.train_images;
        base.train_labels = data.train_labels;
        base.test_images = data.test_images;
        base.test_labels = data.test_labels;
    } else {
        base.synth_train = 26000;
        base.synth_test = 1500;
    }
    base.limit_test = 1500;

    // pretrain on the 4 initial classes
    RunConfig pre = base;
    pre.train_classes = "0,1,2,3";
    pre.limit_train = 10000;
    pre.checkpoint_out = base.out_dir + "/pretrain.emstdp";
    const TrainResult pretrain = run_train(pre);

    RunConfig inc = base;
    inc.checkpoint_in = pretrain.checkpoint_path;
    inc.initial_classes = "0,1,2,3";
    inc.increments = "4,5;6,7;8,9";
    inc.chunks_per_class = 5;
    inc.chunk_size = 500;
    const IncrementalResult res = run_incremental(inc);

    // joint baseline on the pooled data, same engine and scale
    RunConfig joint = base;
    joint.epochs = 2;
    joint.limit_train = 25000;
    joint.out_dir = base.out_dir + "/joint";
    const TrainResult baseline = run_train(joint);

    bool drop_ok = true;
    bool recover_ok = true;
    double before = res.pretrain_accuracy;
    for (std::int32_t i = 0; i < 3; ++i) {
        double first_round = -1.0;
        double last_round = -1.0;
        for (const IncrementalRound &r : res.rounds) {
            if (r.increment != i) {
                continue;
            }
            if (r.round == 0 && r.step == 1) {
                first_round = r.accuracy;
            }
            last_round = r.accuracy;
        }
        if (first_round < 0.0 || last_round < 0.0) {
            drop_ok = false;
            break;
        }
        const double drop = before - first_round;
        if (drop < 0.05) {
            drop_ok = false;
        }
        if (last_round < first_round + 0.5 * drop) {
            recover_ok = false;
        }
        before = last_round;
    }
    const double gap = baseline.final_accuracy() - res.final_accuracy;
    char buf[256];
    std::snprintf(buf, sizeof buf,
            "%s: drops >= 5pts %s, recovery >= half %s, final %.1f%% vs joint %.1f%% (gap %.1f <= 10)",
            data.tag.c_str(), drop_ok ? "yes" : "no", recover_ok ? "yes" : "no",
            100 * res.final_accuracy, 100 * baseline.final_accuracy(), 100 * gap);
    report("incremental-learning-shape", drop_ok && recover_ok && gap <= 0.10, buf);
}

} // namespace

int main()
{
    std::printf("EMSTDP acceptance suite\n");
    const DeskData data = desk_data();

    c1_algebraic_equivalence();
    c2_spike_rate_linearity();
    c3_gating_soundness();
    c4_gradient_direction();
    c7_mapper_validity();
    c8_dfa_structural_saving();
    c5_c6_c10_desk_scale(data);
    c9_incremental(data);

    if (g_failures == 0) {
        std::printf("all acceptance criteria passed\n");
    } else {
        std::printf("%d criterion(s) FAILED\n", g_failures);
    }
    return g_failures == 0 ? 0 : 1;
}
