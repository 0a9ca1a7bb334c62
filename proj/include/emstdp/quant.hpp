#pragma once

#include <cstdint>
#include <vector>

#include "emstdp/rng.hpp"
#include "emstdp/structure.hpp"

namespace emstdp {

// Scaling and initialization knobs shared by the quantized engine and the
// full-precision oracle so the two stay comparable neuron-by-neuron.
struct QuantParams {
    // Initial forward weights are uniform in [-init_frac, init_frac] 8-bit
    // units, leaving headroom up to the +-127 clip for growth.
    std::int32_t init_frac = 32;
    // Sets each layer's integer threshold: theta_l = init_frac * fan_in / init_gain.
    // Larger gain -> lower threshold -> hotter layers.
    double init_gain = 16.0;
    // Error spikes shift the target rate by err_gain * e / T; realized as an
    // injection weight of err_gain * theta_l / T potential units per spike.
    double err_gain = 1.0;
    // FA error-neuron threshold = round(127 * fa_theta_scale).
    double fa_theta_scale = 2.0;
    // Extra gain on the classifier layer's threshold (theta_L divided by
    // this), keeping output neurons firing so their error gates stay open.
    double output_gain = 1.0;
    // DFA broadcast weights are uniform in +-dfa_gain * theta_l / T, so a
    // loss spike shifts a hidden unit's phase-2 rate by at most dfa_gain/T
    // of a spike-count unit, mirroring the FA injection gain.
    double dfa_gain = 0.75;

    void validate() const;
};

// Per-layer integer thresholds and the real<->integer weight scales they
// imply (scale_l = theta / theta_int_l, so w_real = w_int * scale_l).
struct LayerScales {
    std::vector<std::int64_t> theta_int;  // per layer; input layer = spec.theta
    std::vector<std::int64_t> fan_in;     // per layer (0 for input)
    std::vector<std::int64_t> inj_gain;   // FA injection weight per layer
    std::int64_t theta_err = 0;           // FA error-pair threshold
    std::int64_t loss_theta = 0;          // loss-pair threshold (= spec.theta)
    std::int64_t loss_w = 0;              // w_L, one rate unit per loss spike

    double scale(std::size_t layer, std::int64_t theta) const
    {
        return static_cast<double>(theta) / static_cast<double>(theta_int[layer]);
    }
};

LayerScales compute_layer_scales(const NetworkSpec &spec, const QuantParams &params);

// Deterministic initial draws. The same (seed, layer, index) always yields
// the same real value; the engine rounds it onto the 8-bit grid while the
// oracle keeps it as-is.
double draw_forward_weight(std::uint64_t seed, std::size_t layer, std::uint64_t index,
        double amplitude);
double draw_fa_b(std::uint64_t seed, std::size_t pair, std::uint64_t index);
double draw_dfa_b(std::uint64_t seed, std::size_t layer, std::uint64_t index, double amplitude);

std::int32_t quantize_weight(double w);

} // namespace emstdp
