#include "emstdp/quant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace emstdp {

void QuantParams::validate() const
{
    if (init_frac <= 0 || init_frac > 127) {
        throw std::invalid_argument("init_frac must lie in [1, 127]");
    }
    if (init_gain <= 0.0) {
        throw std::invalid_argument("init_gain must be positive");
    }
    if (err_gain <= 0.0) {
        throw std::invalid_argument("err_gain must be positive");
    }
    if (fa_theta_scale <= 0.0) {
        throw std::invalid_argument("fa_theta_scale must be positive");
    }
    if (output_gain <= 0.0) {
        throw std::invalid_argument("output_gain must be positive");
    }
    if (dfa_gain <= 0.0) {
        throw std::invalid_argument("dfa_gain must be positive");
    }
}

LayerScales compute_layer_scales(const NetworkSpec &spec, const QuantParams &params)
{
    params.validate();
    spec.validate();
    LayerScales s;
    const std::size_t n = spec.num_layers();
    s.theta_int.resize(n);
    s.fan_in.resize(n);
    s.inj_gain.resize(n);
    s.theta_int[0] = spec.theta;
    s.fan_in[0] = 0;
    s.inj_gain[0] = 0;
    for (std::size_t l = 1; l < n; ++l) {
        const LayerDesc &d = spec.layers[l];
        std::int64_t fan_in = 0;
        if (d.kind == LayerKind::dense) {
            fan_in = spec.layers[l - 1].size();
        } else {
            fan_in = static_cast<std::int64_t>(d.kernel) * d.kernel * spec.layers[l - 1].channels;
        }
        s.fan_in[l] = fan_in;
        double gain = params.init_gain;
        if (l == n - 1) {
            gain *= params.output_gain;
        }
        const double t = static_cast<double>(params.init_frac) * static_cast<double>(fan_in)
                / gain;
        s.theta_int[l] = std::max<std::int64_t>(1, std::llround(t));
        s.inj_gain[l] = std::max<std::int64_t>(1,
                std::llround(params.err_gain * static_cast<double>(s.theta_int[l])
                        / static_cast<double>(spec.phase_len)));
    }
    s.theta_err = std::max<std::int64_t>(1, std::llround(127.0 * params.fa_theta_scale));
    s.loss_theta = spec.theta;
    s.loss_w = spec.theta;
    return s;
}

namespace {

std::uint64_t layer_counter(std::size_t layer, std::uint64_t index)
{
    return (static_cast<std::uint64_t>(layer) << 40) + index;
}

} // namespace

double draw_forward_weight(std::uint64_t seed, std::size_t layer, std::uint64_t index,
        double amplitude)
{
    return rng::uniform_sym(seed, rng::Stream::forward_weights, layer_counter(layer, index),
            amplitude);
}

double draw_fa_b(std::uint64_t seed, std::size_t pair, std::uint64_t index)
{
    return rng::uniform_sym(seed, rng::Stream::feedback_fa, layer_counter(pair, index), 127.0);
}

double draw_dfa_b(std::uint64_t seed, std::size_t layer, std::uint64_t index, double amplitude)
{
    return rng::uniform_sym(seed, rng::Stream::feedback_dfa, layer_counter(layer, index),
            amplitude);
}

std::int32_t quantize_weight(double w)
{
    const double r = std::nearbyint(w);
    return static_cast<std::int32_t>(std::clamp(r, -128.0, 127.0));
}

} // namespace emstdp
