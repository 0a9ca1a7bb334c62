#include "emstdp/neuron.hpp"

#include <cmath>

namespace emstdp {

Decay Decay::from_double(double d)
{
    if (d < 0.0 || d > 1.0) {
        throw std::invalid_argument("decay must lie in [0, 1]");
    }
    return Decay{static_cast<std::uint16_t>(std::lround(d * 4096.0))};
}

namespace {

void check_potential(std::int64_t v)
{
    if (v > kPotentialLimit || v < -kPotentialLimit) {
        throw std::overflow_error(
                "integer membrane potential overflow; check weight/threshold scaling");
    }
}

} // namespace

void step_compartment(CompartmentState &state, const CompartmentConfig &cfg,
        std::int64_t weighted_input)
{
    cfg.validate();
    state.u = cfg.current_decay.apply(state.u) + weighted_input;
    std::int64_t v = cfg.voltage_decay.apply(state.v) + state.u + cfg.bias;
    check_potential(v);
    if (v >= cfg.threshold) {
        state.spiked = true;
        v -= cfg.threshold;
    } else {
        state.spiked = false;
    }
    if (cfg.lower_clamp && v < *cfg.lower_clamp) {
        v = *cfg.lower_clamp;
    }
    state.v = v;
}

std::int64_t spike_count_activation(std::int64_t u_accum, std::int64_t theta)
{
    if (theta <= 0) {
        throw std::invalid_argument("spike_count_activation: theta must be positive");
    }
    if (u_accum <= 0) {
        return 0;
    }
    return u_accum / theta;
}

bool gated_fire(TwoCompartmentNeuron &n)
{
    if (n.gate_mode != GateMode::and_gate) {
        throw std::logic_error("gated_fire requires and_gate mode");
    }
    return n.soma.spiked && n.auxiliary_active();
}

bool step_two_compartment(TwoCompartmentNeuron &n, const CompartmentConfig &soma_cfg,
        std::int64_t soma_input, std::int64_t aux_input)
{
    soma_cfg.validate();
    n.auxiliary.v += aux_input;

    n.soma.u = soma_cfg.current_decay.apply(n.soma.u) + soma_input;
    std::int64_t v = soma_cfg.voltage_decay.apply(n.soma.v) + n.soma.u + soma_cfg.bias;
    check_potential(v);

    const bool crossed = v >= soma_cfg.threshold;
    n.soma.spiked = crossed;
    bool emitted = crossed;
    if (n.gate_mode == GateMode::and_gate) {
        emitted = crossed && n.auxiliary_active();
    }
    // Soma resets only when the spike actually leaves the neuron.
    if (emitted) {
        v -= soma_cfg.threshold;
    }
    if (soma_cfg.lower_clamp && v < *soma_cfg.lower_clamp) {
        v = *soma_cfg.lower_clamp;
    }
    n.soma.v = v;
    return emitted;
}

void Population::init(std::int32_t n, CompartmentConfig c)
{
    c.validate();
    size = n;
    cfg = c;
    v.assign(n, 0);
    u.assign(n, 0);
    bias.assign(n, c.bias);
    drive.assign(n, 0);
    h.assign(n, 0);
    h_hat.assign(n, 0);
    z.assign(n, 0);
    pre_frozen.assign(n, 0);
    spike_list.clear();
    spike_list.reserve(n);
}

void Population::reset_dynamic()
{
    std::fill(v.begin(), v.end(), 0);
    std::fill(u.begin(), u.end(), 0);
    std::fill(drive.begin(), drive.end(), 0);
    std::fill(h.begin(), h.end(), 0);
    std::fill(h_hat.begin(), h_hat.end(), 0);
    std::fill(z.begin(), z.end(), 0);
    std::fill(pre_frozen.begin(), pre_frozen.end(), 0);
    spike_list.clear();
}

void Population::freeze_pre_traces()
{
    pre_frozen = h;
}

void step_population(Population &pop, Phase phase)
{
    pop.spike_list.clear();
    const std::int64_t theta = pop.cfg.threshold;
    const Decay vd = pop.cfg.voltage_decay;
    const Decay cd = pop.cfg.current_decay;
    const bool if_mode = (vd.mant == 4096 && cd.mant == 0);
    const bool clamped = pop.cfg.lower_clamp.has_value();
    const std::int64_t clamp = clamped ? *pop.cfg.lower_clamp : 0;

    for (std::int32_t j = 0; j < pop.size; ++j) {
        std::int64_t vj;
        if (if_mode) {
            pop.u[j] = pop.drive[j];
            vj = pop.v[j] + pop.drive[j] + pop.bias[j];
        } else {
            pop.u[j] = cd.apply(pop.u[j]) + pop.drive[j];
            vj = vd.apply(pop.v[j]) + pop.u[j] + pop.bias[j];
        }
        check_potential(vj);
        if (vj >= theta) {
            vj -= theta;
            pop.spike_list.push_back(j);
            if (phase == Phase::one) {
                ++pop.h[j];
            } else {
                ++pop.h_hat[j];
            }
            ++pop.z[j];
        }
        if (clamped && vj < clamp) {
            vj = clamp;
        }
        pop.v[j] = vj;
        pop.drive[j] = 0;
    }
}

void step_population_gated(Population &pop, const std::vector<std::uint8_t> &gate)
{
    pop.spike_list.clear();
    const std::int64_t theta = pop.cfg.threshold;
    const bool clamped = pop.cfg.lower_clamp.has_value();
    const std::int64_t clamp = clamped ? *pop.cfg.lower_clamp : 0;
    for (std::int32_t j = 0; j < pop.size; ++j) {
        pop.u[j] = pop.drive[j];
        std::int64_t vj = pop.v[j] + pop.drive[j] + pop.bias[j];
        check_potential(vj);
        if (vj >= theta && gate[j]) {
            vj -= theta;
            pop.spike_list.push_back(j);
        }
        if (clamped && vj < clamp) {
            vj = clamp;
        }
        pop.v[j] = vj;
        pop.drive[j] = 0;
    }
}

} // namespace emstdp
