#pragma once

#include <cstdint>
#include <vector>

#include "emstdp/quant.hpp"
#include "emstdp/structure.hpp"

namespace emstdp {

// Row-major matrix keyed [pre][post].
struct Mat {
    std::int32_t rows = 0;
    std::int32_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::int32_t r, std::int32_t c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
    double &at(std::int32_t i, std::int32_t j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double at(std::int32_t i, std::int32_t j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
};

enum class ActivationMode {
    floor,   // spike counts: max(0, floor(u / theta))
    relaxed, // shifted-ReLU surrogate: max(0, u / theta), differentiable a.e.
};

// Full-precision rate-based mirror of the spiking engine. Weights live in
// the same per-layer integer-unit scale the quantized engine uses (thresholds
// from LayerScales), just without the 8-bit grid.
struct FpNetwork {
    NetworkSpec spec;
    LayerScales scales;
    ActivationMode mode = ActivationMode::floor;
    double err_gain = 1.0; // injection gain in theta/T units, mirrors the engine

    // Forward connections, one per layer pair. Dense pairs use weights[l];
    // conv pairs use kernels[l] together with the shared connectivity.
    std::vector<Mat> weights;
    std::vector<std::vector<double>> kernels;

    // Feedback wiring, both variants kept so either mode can be evaluated.
    // fa_chain[t] maps error rates of trainable layer t+1 down to t;
    // dfa_direct[t] maps loss rates straight into trainable layer t.
    std::vector<Mat> fa_chain;
    std::vector<Mat> dfa_direct;
    std::vector<std::size_t> trainable_layers; // layer indices with plastic in-connections

    double weight_clip = 512.0; // training keeps |w| within this range
};

struct OracleParams {
    QuantParams quant;
    ActivationMode mode = ActivationMode::floor;
    double weight_clip = 512.0;
};

FpNetwork build_fp_network(const NetworkSpec &spec, std::uint64_t seed,
        const OracleParams &params = {});

// Per-layer rates, index 0 = input rates (a copy of x).
std::vector<std::vector<double>> fp_forward(const FpNetwork &net, const std::vector<double> &x);

// Weight deltas per connection index (empty Mat for non-trainable pairs).
struct LayerDeltas {
    std::vector<Mat> dw;
};

// One EMSTDP update in real arithmetic: spike-domain L2 loss, dual-signed
// error rates with activity gating, FA chain or DFA broadcast, bounded
// injection, delta = eta * (h_hat - h) * h_pre.
LayerDeltas fp_emstdp_step(const FpNetwork &net, const std::vector<double> &x,
        std::int32_t label, double eta, FeedbackMode mode);

// Exact gradients of the L2 rate loss 0.5*||target - h_out||^2 under the
// relaxed activation, propagated through the dense stack.
LayerDeltas bp_gradient(const FpNetwork &net, const std::vector<double> &x, std::int32_t label);

struct Agreement {
    std::vector<double> cosine;     // per trainable connection
    std::vector<double> sign_match; // fraction of entries with equal sign
};

Agreement agreement_metric(const LayerDeltas &a, const LayerDeltas &b);

// Applies deltas in place with the configured clip.
void fp_apply_deltas(FpNetwork &net, const LayerDeltas &deltas);

std::int32_t fp_predict(const FpNetwork &net, const std::vector<double> &x);

} // namespace emstdp
