#include <doctest.h>

#include <algorithm>
#include <thread>

#include "emstdp/network.hpp"
#include "emstdp/rng.hpp"

using namespace emstdp;

namespace {

Network chain_1_1_1(std::int64_t &theta1, std::int64_t &theta2)
{
    // 1 -> 1 -> 1 chain with pass-through weights w = theta.
    Network net = Network::build(make_network_spec("1x1x1-1d-1d", FeedbackMode::DFA), 5);
    theta1 = net.scales().theta_int[1];
    theta2 = net.scales().theta_int[2];
    net.mutable_dense_conns()[0].w[0] = static_cast<std::int32_t>(theta1);
    net.mutable_dense_conns()[1].w[0] = static_cast<std::int32_t>(theta2);
    return net;
}

} // namespace

TEST_CASE("encode_input_bias validates the range")
{
    SamplePresentation s;
    s.input = {0, 32, 64};
    const auto b = encode_input_bias(s, 64, 64);
    CHECK(b == std::vector<std::int32_t>{0, 32, 64});
    s.input = {65};
    CHECK_THROWS_AS(encode_input_bias(s, 64, 64), std::invalid_argument);
    s.input = {-1};
    CHECK_THROWS_AS(encode_input_bias(s, 64, 64), std::invalid_argument);
}

TEST_CASE("encode_label_bias is one-hot in w_L units")
{
    const auto b = encode_label_bias(2, 10, 64);
    for (int j = 0; j < 10; ++j) {
        CHECK(b[j] == (j == 2 ? 64 : 0));
    }
    const auto none = encode_label_bias(std::nullopt, 10, 64);
    CHECK(std::all_of(none.begin(), none.end(), [](std::int32_t v) { return v == 0; }));
    CHECK_THROWS_AS(encode_label_bias(10, 10, 64), std::invalid_argument);
}

TEST_CASE("bias-encoded inputs emit exactly i spikes over the phase")
{
    Network net = Network::build(make_network_spec("1x65x1-5d", FeedbackMode::DFA), 1);
    SamplePresentation s;
    s.input.resize(65);
    for (int i = 0; i <= 64; ++i) {
        s.input[i] = i;
    }
    const TraceSnapshot t = net.run_phase1_with(s);
    for (int i = 0; i <= 64; ++i) {
        CHECK(t.h[0][i] == i);
    }
}

TEST_CASE("a pass-through chain carries rate 64 downstream exactly")
{
    std::int64_t t1 = 0;
    std::int64_t t2 = 0;
    Network net = chain_1_1_1(t1, t2);
    SamplePresentation s;
    s.input = {64};
    const TraceSnapshot t = net.run_phase1_with(s);
    CHECK(t.h[0][0] == 64);
    CHECK(t.h[1][0] == 64);
    CHECK(t.h[2][0] == 64);
}

TEST_CASE("zero input leaves bias-free hidden layers silent")
{
    Network net = Network::build(make_network_spec("4x4x1-12d-3d", FeedbackMode::DFA), 9);
    SamplePresentation s;
    s.input.assign(16, 0);
    const TraceSnapshot t = net.run_phase1_with(s);
    for (std::size_t l = 0; l < t.h.size(); ++l) {
        for (const std::int32_t h : t.h[l]) {
            CHECK(h == 0);
        }
    }
}

TEST_CASE("phase traces keep z = h + h_hat and pre freezes at T")
{
    Network net = Network::build(make_network_spec("2x2x1-6d-3d", FeedbackMode::DFA), 11);
    SamplePresentation s;
    s.input = {64, 32, 16, 48};
    s.label = 1;
    net.set_sample(s);
    const TraceSnapshot p1 = net.run_phase1();
    const TraceSnapshot p2 = net.run_phase2();
    for (std::size_t l = 0; l < p2.h.size(); ++l) {
        for (std::size_t j = 0; j < p2.h[l].size(); ++j) {
            CHECK(p2.z[l][j] == p2.h[l][j] + p2.h_hat[l][j]);
            CHECK(p2.pre_frozen[l][j] == p1.h[l][j]);
            CHECK(p2.h[l][j] == p1.h[l][j]); // phase-1 counts frozen in phase 2
        }
    }
}

TEST_CASE("FA builds chained error pairs; DFA builds only the loss pair")
{
    const NetworkSpec fa = make_network_spec("8x8x1-20d-10d", FeedbackMode::FA);
    Network nfa = Network::build(fa, 3);
    CHECK(nfa.fa_pairs().size() == 1);
    CHECK(nfa.fa_b().size() == 1);
    CHECK(nfa.dfa_b().empty());
    CHECK(nfa.error_path_compartments() == 2 * (20 + 10));

    const NetworkSpec dfa = make_network_spec("8x8x1-20d-10d", FeedbackMode::DFA);
    Network ndfa = Network::build(dfa, 3);
    CHECK(ndfa.fa_pairs().empty());
    CHECK(ndfa.dfa_b().size() == 1);
    CHECK(ndfa.dfa_b()[0].rows == 10);
    CHECK(ndfa.dfa_b()[0].cols == 20);
    CHECK(ndfa.error_path_compartments() == 2 * 10);
}

TEST_CASE("a fully frozen network builds no error neurons")
{
    NetworkSpec spec = make_network_spec("4x4x1-8d-3d", FeedbackMode::FA);
    std::fill(spec.trainable.begin(), spec.trainable.end(), false);
    Network net = Network::build(spec, 2);
    CHECK(net.error_path_compartments() == 0);
    SamplePresentation s;
    s.input.assign(16, 30);
    s.label = 1;
    net.set_sample(s);
    net.run_phase1();
    net.run_phase2(); // error path inert, must not crash
    net.reset_all();
    CHECK(net.infer_sample(s) >= 0);
}

TEST_CASE("cross-connection antisymmetry: swapping inputs swaps the channels")
{
    DenseConn b;
    b.rows = 3;
    b.cols = 4;
    b.w = {5, -3, 8, 1, -7, 2, 0, 4, 3, 3, -9, 6};

    CompartmentConfig cfg;
    cfg.threshold = 10;
    const std::vector<std::int32_t> spikes_a = {0, 2};
    const std::vector<std::int32_t> spikes_b = {1};
    const std::vector<std::uint8_t> gate(4, 1);

    Population pos1(4, cfg);
    Population neg1(4, cfg);
    accumulate_cross(b, spikes_a, spikes_b, pos1, neg1);
    const auto drive_pos1 = pos1.drive;
    const auto drive_neg1 = neg1.drive;

    Population pos2(4, cfg);
    Population neg2(4, cfg);
    accumulate_cross(b, spikes_b, spikes_a, pos2, neg2);
    CHECK(pos2.drive == drive_neg1);
    CHECK(neg2.drive == drive_pos1);
}

TEST_CASE("dual-channel rectification under constant-sign drive")
{
    CompartmentConfig cfg;
    cfg.threshold = 64;
    const std::vector<std::uint8_t> gate(1, 1);
    for (const std::int64_t d : {0L, 3L, 17L, 64L}) {
        Population pos(1, cfg);
        Population neg(1, cfg);
        std::int64_t pos_count = 0;
        std::int64_t neg_count = 0;
        for (int t = 0; t < 64; ++t) {
            pos.drive[0] = d;
            neg.drive[0] = -d;
            step_population_gated(pos, gate);
            step_population_gated(neg, gate);
            pos_count += static_cast<std::int64_t>(pos.spike_list.size());
            neg_count += static_cast<std::int64_t>(neg.spike_list.size());
        }
        CHECK(pos_count == d * 64 / 64);
        CHECK(neg_count == 0);
        CHECK((pos_count == 0 || neg_count == 0));
    }
}

TEST_CASE("gating: forward neurons silent in phase 1 receive no error injection")
{
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        const FeedbackMode mode = (trial % 2 == 0) ? FeedbackMode::DFA : FeedbackMode::FA;
        Network net = Network::build(make_network_spec("3x3x1-10d-4d", mode), 100 + trial);
        SamplePresentation s;
        s.input.resize(9);
        for (std::size_t i = 0; i < 9; ++i) {
            s.input[i] = static_cast<std::int32_t>(
                    rng::uniform_int(trial, rng::Stream::misc, i, 0, 64));
        }
        s.label = static_cast<std::int32_t>(trial % 4);
        net.set_sample(s);
        const TraceSnapshot p1 = net.run_phase1();
        net.run_phase2();
        bool found_silent = false;
        for (std::size_t l = 1; l < net.num_forward_layers(); ++l) {
            if (!net.spec().trainable[l]) {
                continue;
            }
            const auto &events = net.injection_events(l);
            for (std::size_t j = 0; j < events.size(); ++j) {
                if (p1.h[l][j] == 0) {
                    found_silent = true;
                    CHECK(events[j] == 0);
                }
            }
        }
        CHECK(found_silent); // the random nets do contain silent units
        net.reset_all();
    }
}

TEST_CASE("zero-error fixed point leaves weights unchanged")
{
    std::int64_t t1 = 0;
    std::int64_t t2 = 0;
    Network net = chain_1_1_1(t1, t2);
    SamplePresentation s;
    s.input = {64};
    s.label = 0; // target rate 64 == achieved rate
    const SampleMetrics m = net.train_sample(s);
    CHECK(m.output_h[0] == 64);
    CHECK(m.output_h_hat[0] == 64);
    CHECK(m.update_l1 == 0);
}

TEST_CASE("eta = 0 never changes weights")
{
    EngineParams params;
    params.learn.eta_num = 0;
    Network net = Network::build(make_network_spec("3x3x1-8d-3d", FeedbackMode::DFA), 17, params);
    const auto w_before = net.dense_conns()[0].w;
    SamplePresentation s;
    s.input.assign(9, 40);
    s.label = 2;
    net.train_sample(s);
    CHECK(net.dense_conns()[0].w == w_before);
}

TEST_CASE("training changes only trainable layers")
{
    Network net = Network::build(make_network_spec("6x6x1-3x3k4c1s-10d", FeedbackMode::DFA), 19);
    const auto conv_before = net.conv_conns()[0].kernel;
    SamplePresentation s;
    s.input.assign(36, 50);
    s.label = 3;
    net.train_sample(s);
    CHECK(net.conv_conns()[0].kernel == conv_before); // conv stays frozen
}

TEST_CASE("infer_sample breaks ties toward the lowest class")
{
    Network net = Network::build(make_network_spec("2x2x1-4d-3d", FeedbackMode::DFA), 23);
    SamplePresentation s;
    s.input.assign(4, 0); // zero input, zero-bias net: all counts zero
    CHECK(net.infer_sample(s) == 0);
}

TEST_CASE("identical seeds give identical runs; training is deterministic")
{
    const NetworkSpec spec = make_network_spec("4x4x1-12d-4d", FeedbackMode::DFA);
    Network a = Network::build(spec, 31);
    Network b = Network::build(spec, 31);
    CHECK(a.dense_conns()[0].w == b.dense_conns()[0].w);
    for (int k = 0; k < 30; ++k) {
        SamplePresentation s;
        s.input.resize(16);
        for (std::size_t i = 0; i < 16; ++i) {
            s.input[i] = static_cast<std::int32_t>(
                    rng::uniform_int(99, rng::Stream::misc, k * 16 + i, 0, 64));
        }
        s.label = k % 4;
        a.train_sample(s);
        b.train_sample(s);
    }
    CHECK(a.dense_conns()[0].w == b.dense_conns()[0].w);
    CHECK(a.dense_conns()[1].w == b.dense_conns()[1].w);
    for (const DenseConn &conn : a.dense_conns()) {
        for (const std::int32_t w : conn.w) {
            CHECK(w >= -128);
            CHECK(w <= 127);
        }
    }

    Network c = Network::build(spec, 32);
    CHECK(c.dense_conns()[0].w != a.dense_conns()[0].w);
}

TEST_CASE("reset then replay yields an identical spike record")
{
    Network net = Network::build(make_network_spec("3x3x1-6d-3d", FeedbackMode::FA), 41);
    SamplePresentation s;
    s.input = {10, 20, 30, 40, 50, 60, 5, 15, 25};
    s.label = 1;
    net.set_sample(s);
    const TraceSnapshot a1 = net.run_phase1();
    const TraceSnapshot a2 = net.run_phase2();
    net.reset_all();
    net.set_sample(s);
    const TraceSnapshot b1 = net.run_phase1();
    const TraceSnapshot b2 = net.run_phase2();
    CHECK(a1.h == b1.h);
    CHECK(a2.h_hat == b2.h_hat);
    CHECK(a2.z == b2.z);
}

TEST_CASE("masked output neurons receive no weight updates")
{
    Network net = Network::build(make_network_spec("3x3x1-8d-4d", FeedbackMode::DFA), 43);
    net.set_output_mask({1, 0, 1, 1}); // class 1 frozen
    const DenseConn &out_conn = net.dense_conns()[1];
    std::vector<std::int32_t> col_before(out_conn.rows);
    for (std::int32_t i = 0; i < out_conn.rows; ++i) {
        col_before[i] = out_conn.at(i, 1);
    }
    for (int k = 0; k < 10; ++k) {
        SamplePresentation s;
        s.input.assign(9, 30 + k);
        s.label = k % 4;
        net.train_sample(s);
    }
    for (std::int32_t i = 0; i < out_conn.rows; ++i) {
        CHECK(out_conn.at(i, 1) == col_before[i]);
    }
}

TEST_CASE("repeated presentation drives the true-class output rate up")
{
    Network net = Network::build(make_network_spec("4x4x1-16d-4d", FeedbackMode::DFA), 47);
    SamplePresentation s;
    s.input = {60, 10, 50, 20, 0, 40, 30, 5, 60, 25, 45, 15, 35, 55, 8, 12};
    s.label = 2;
    std::vector<std::int32_t> counts;
    for (int k = 0; k < 6; ++k) {
        const SampleMetrics m = net.train_sample(s);
        counts.push_back(m.output_h[2]);
    }
    for (std::size_t k = 1; k < counts.size(); ++k) {
        CHECK(counts[k] >= counts[k - 1]);
    }
}

TEST_CASE("train_sample requires a label")
{
    Network net = Network::build(make_network_spec("2x2x1-4d-2d", FeedbackMode::DFA), 53);
    SamplePresentation s;
    s.input.assign(4, 10);
    CHECK_THROWS_AS(net.train_sample(s), std::invalid_argument);
}

TEST_CASE("conv layers propagate spikes through shared kernels")
{
    // 4x4 input, 3x3 kernel stride 1 -> 2x2 per filter, fan-in 9
    Network net = Network::build(make_network_spec("4x4x1-3x3k2c1s-3d", FeedbackMode::DFA), 61);
    std::vector<std::int32_t> kernel(2 * 1 * 3 * 3, 5);
    net.set_conv_kernel(0, kernel, 90); // drive 45/step at full input rate
    SamplePresentation s;
    s.input.assign(16, 64);
    const TraceSnapshot t = net.run_phase1_with(s);
    for (const std::int32_t h : t.h[1]) {
        CHECK(h == 32); // floor(45 * 64 / 90)
    }
}

TEST_CASE("pretrained conv checkpoints feed frozen features into training")
{
    const NetworkSpec spec = make_network_spec("6x6x1-3x3k2c1s-8d-3d", FeedbackMode::DFA);
    Network net = Network::build(spec, 67);
    std::vector<std::int32_t> kernel(2 * 9);
    for (std::size_t i = 0; i < kernel.size(); ++i) {
        kernel[i] = (i % 2 == 0) ? 12 : -4;
    }
    net.set_conv_kernel(0, kernel, 120);
    const auto kernel_before = net.conv_conns()[0].kernel;
    for (int k = 0; k < 5; ++k) {
        SamplePresentation s;
        s.input.assign(36, 20 + 5 * k);
        s.label = k % 3;
        net.train_sample(s);
    }
    CHECK(net.conv_conns()[0].kernel == kernel_before);
}

TEST_CASE("independent instances stepped in parallel match the serial run")
{
    const NetworkSpec spec = make_network_spec("3x3x1-8d-4d", FeedbackMode::DFA);
    SamplePresentation s;
    s.input = {10, 40, 0, 64, 25, 5, 30, 55, 15};
    s.label = 2;

    Network serial = Network::build(spec, 71);
    serial.set_sample(s);
    serial.run_phase1();
    const TraceSnapshot expected = serial.run_phase2();

    Network a = Network::build(spec, 71);
    Network b = Network::build(spec, 71);
    TraceSnapshot ra;
    TraceSnapshot rb;
    std::thread ta([&] {
        a.set_sample(s);
        a.run_phase1();
        ra = a.run_phase2();
    });
    std::thread tb([&] {
        b.set_sample(s);
        b.run_phase1();
        rb = b.run_phase2();
    });
    ta.join();
    tb.join();
    CHECK(ra.h == expected.h);
    CHECK(ra.h_hat == expected.h_hat);
    CHECK(rb.h == expected.h);
    CHECK(rb.h_hat == expected.h_hat);
}

TEST_CASE("pre-trace ablation mode changes updates and stays deterministic")
{
    const NetworkSpec spec = make_network_spec("3x3x1-8d-3d", FeedbackMode::DFA);
    SamplePresentation s;
    s.input = {50, 10, 60, 20, 40, 0, 30, 25, 45};
    s.label = 1;

    // pick a seed whose run actually produces weight updates
    std::uint64_t seed = 83;
    for (; seed < 120; ++seed) {
        Network probe = Network::build(spec, seed, EngineParams{});
        std::int64_t l1 = 0;
        for (int k = 0; k < 5; ++k) {
            l1 += probe.train_sample(s).update_l1;
        }
        if (l1 > 0) {
            break;
        }
    }
    EngineParams freeze;
    Network a = Network::build(spec, seed, freeze);
    Network a2 = Network::build(spec, seed, freeze);
    EngineParams accum = freeze;
    accum.pre_trace = PreTraceMode::accumulate_2t;
    Network b = Network::build(spec, seed, accum);

    for (int k = 0; k < 5; ++k) {
        a.train_sample(s);
        a2.train_sample(s);
        b.train_sample(s);
    }
    CHECK(a.dense_conns()[0].w == a2.dense_conns()[0].w);
    CHECK(a.dense_conns()[1].w == a2.dense_conns()[1].w);
    const bool differs = a.dense_conns()[0].w != b.dense_conns()[0].w
            || a.dense_conns()[1].w != b.dense_conns()[1].w;
    CHECK(differs);
}

TEST_CASE("error-path clamp keeps loss membranes at or above rest")
{
    const NetworkSpec spec = make_network_spec("2x2x1-6d-3d", FeedbackMode::DFA);
    EngineParams params;
    params.error_clamp_zero = true;
    Network net = Network::build(spec, 89, params);
    SamplePresentation s;
    s.input = {64, 64, 64, 64};
    s.label = 0;
    net.set_sample(s);
    net.run_phase1();
    net.run_phase2();
    for (std::int32_t j = 0; j < net.loss_pair().pos.size; ++j) {
        CHECK(net.loss_pair().pos.v[j] >= 0);
        CHECK(net.loss_pair().neg.v[j] >= 0);
    }
}
