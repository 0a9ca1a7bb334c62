#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "emstdp/neuron.hpp"
#include "emstdp/plasticity.hpp"
#include "emstdp/quant.hpp"
#include "emstdp/structure.hpp"

namespace emstdp {

struct SamplePresentation {
    std::vector<std::int32_t> input;   // rate-quantized components in [0, T]
    std::optional<std::int32_t> label; // absent for inference

    std::int32_t label_or(std::int32_t fallback) const { return label ? *label : fallback; }
};

// Bias vector driving the input layer so neuron i fires floor(x_i * T / theta)
// times over a phase (exactly x_i when theta == T). Rejects components > T.
std::vector<std::int32_t> encode_input_bias(const SamplePresentation &sample,
        std::int32_t phase_len, std::int64_t theta);

// Per-class loss-neuron biases: the true class integrates w_L every step
// (target rate = T), all others zero. Inference (no label) gives all zeros.
std::vector<std::int32_t> encode_label_bias(std::optional<std::int32_t> label,
        std::int32_t num_classes, std::int64_t loss_w);

enum class PreTraceMode {
    freeze_at_boundary, // pre-trace = phase-1 count, snapshotted at t = T
    accumulate_2t,      // ablation: pre-trace accumulates across both phases
};

struct EngineParams {
    QuantParams quant;
    LearningParams learn;
    PreTraceMode pre_trace = PreTraceMode::freeze_at_boundary;
    bool error_clamp_zero = false; // clamp error-path membranes at rest
};

// Dense forward connection, weights [src][dst] on the 8-bit grid.
struct DenseConn {
    std::int32_t src_layer = 0;
    std::int32_t dst_layer = 0;
    std::int32_t rows = 0;
    std::int32_t cols = 0;
    bool plastic = false;
    std::uint64_t synapse_base = 0; // global synapse ids for rounding draws
    std::vector<std::int32_t> w;

    std::int32_t &at(std::int32_t i, std::int32_t j) { return w[static_cast<std::size_t>(i) * cols + j]; }
    std::int32_t at(std::int32_t i, std::int32_t j) const { return w[static_cast<std::size_t>(i) * cols + j]; }
};

// Conv forward connection stored CSR by source neuron; weights shared
// through the kernel table (non-plastic).
struct ConvConn {
    std::int32_t src_layer = 0;
    std::int32_t dst_layer = 0;
    std::vector<std::int32_t> kernel;
    std::vector<std::int32_t> row_start;
    std::vector<std::int32_t> col;
    std::vector<std::int32_t> kidx;
};

// Positive/negative error channel pair paired 1:1 with a forward layer.
// Emission is AND-gated by the paired neuron's phase-1 activity; a blocked
// threshold crossing does not reset the soma.
struct ErrorPair {
    std::int32_t layer = 0;
    Population pos;
    Population neg;
    std::vector<std::uint8_t> gate;
};

// Pending error-injection drive for a forward layer, applied at the next
// step through the neuron's gated port.
struct ErrorPort {
    std::vector<std::int64_t> drive;
    std::vector<std::int32_t> events;
};

// Eq-10 style cross-connection: upstream positive spikes add +B rows into
// the positive channel and -B into the negative one; upstream negative
// spikes do the mirror image.
void accumulate_cross(const DenseConn &b, const std::vector<std::int32_t> &pos_spikes,
        const std::vector<std::int32_t> &neg_spikes, Population &pos, Population &neg);

struct TraceSnapshot {
    std::vector<std::vector<std::int32_t>> h;
    std::vector<std::vector<std::int32_t>> h_hat;
    std::vector<std::vector<std::int32_t>> z;
    std::vector<std::vector<std::int32_t>> pre_frozen;
};

struct SampleMetrics {
    std::vector<std::int32_t> output_h;     // phase-1 output spike counts
    std::vector<std::int32_t> output_h_hat; // phase-2 output spike counts
    std::int32_t predicted = 0;
    std::int64_t update_l1 = 0; // sum |weight change| over plastic synapses
    std::int64_t updates_applied = 0;
};

// The dual-path EMSTDP network: forward spiking layers, loss pair, FA error
// chain or DFA broadcast, per-sample two-phase schedule and tag-based update.
class Network {
public:
    static Network build(const NetworkSpec &spec, std::uint64_t seed,
            const EngineParams &params = {});

    const NetworkSpec &spec() const { return spec_; }
    const LayerScales &scales() const { return scales_; }
    const EngineParams &params() const { return params_; }
    std::uint64_t seed() const { return seed_; }

    void set_sample(const SamplePresentation &sample);
    TraceSnapshot run_phase1();
    TraceSnapshot run_phase1_with(const SamplePresentation &sample)
    {
        set_sample(sample);
        return run_phase1();
    }
    TraceSnapshot run_phase2();
    SampleMetrics train_sample(const SamplePresentation &sample);
    std::int32_t infer_sample(const SamplePresentation &sample);
    void reset_all();

    // Incremental learning support: classes with mask=false receive no label
    // bias and their output synapses are frozen.
    void set_output_mask(std::vector<std::uint8_t> mask);
    void clear_output_mask() { output_mask_.clear(); }
    void set_learning_params(const LearningParams &lp) { params_.learn = lp; }

    std::size_t num_forward_layers() const { return fwd_.size(); }
    const Population &forward_layer(std::size_t l) const { return fwd_[l]; }
    const std::vector<DenseConn> &dense_conns() const { return dense_; }
    std::vector<DenseConn> &mutable_dense_conns() { return dense_; }
    const std::vector<ConvConn> &conv_conns() const { return conv_; }
    const ErrorPair &loss_pair() const { return loss_; }
    const std::vector<ErrorPair> &fa_pairs() const { return fa_pairs_; }
    const std::vector<DenseConn> &fa_b() const { return fa_b_; }
    const std::vector<DenseConn> &dfa_b() const { return dfa_b_; }
    std::vector<DenseConn> &mutable_fa_b() { return fa_b_; }
    std::vector<DenseConn> &mutable_dfa_b() { return dfa_b_; }

    // Error-injection spike arrivals actually applied to each forward neuron
    // this sample (zero whenever the neuron's phase-1 count was zero).
    const std::vector<std::int32_t> &injection_events(std::size_t layer) const
    {
        return inj_applied_[layer];
    }

    // Total error-path compartments (loss pair + FA chain pairs).
    std::int64_t error_path_compartments() const;

    // Replaces conv kernels (from a pretrained checkpoint) for conv
    // connection index c, along with the layer's integer threshold.
    void set_conv_kernel(std::size_t conv_index, std::vector<std::int32_t> kernel,
            std::int64_t theta_int);

    std::uint64_t samples_trained() const { return sample_counter_; }
    void set_sample_counter(std::uint64_t c) { sample_counter_ = c; }

private:
    Network() = default;

    void step_forward(Phase phase);
    void step_error_path();
    void begin_phase2();
    void apply_updates(SampleMetrics &metrics);
    TraceSnapshot snapshot() const;

    NetworkSpec spec_;
    EngineParams params_;
    LayerScales scales_;
    std::uint64_t seed_ = 0;

    std::vector<Population> fwd_;
    // conn_kind_[i]: index into dense_ (>=0) or conv_ (encoded as -idx-1).
    std::vector<std::int32_t> conn_index_;
    std::vector<DenseConn> dense_;
    std::vector<ConvConn> conv_;

    ErrorPair loss_;
    std::vector<ErrorPair> fa_pairs_;        // hidden trainable layers, bottom-up
    std::vector<DenseConn> fa_b_;            // chain matrices, fa_b_[i] feeds fa_pairs_[i]
    std::vector<DenseConn> dfa_b_;           // broadcast matrices per hidden trainable layer

    std::vector<std::size_t> trainable_layers_;
    std::vector<ErrorPort> ports_;                        // per forward layer
    std::vector<std::vector<std::int32_t>> inj_applied_;  // per forward layer
    std::vector<std::uint8_t> output_mask_;

    bool phase1_done_ = false;
    bool phase2_done_ = false;
    std::uint64_t sample_counter_ = 0;
};

// build_network per the module contract; equivalent to Network::build.
Network build_network(const NetworkSpec &spec, std::uint64_t seed,
        const EngineParams &params = {});

} // namespace emstdp
