#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace emstdp {

// Potentials beyond this magnitude indicate mis-scaled weights or thresholds.
constexpr std::int64_t kPotentialLimit = std::int64_t{1} << 48;

// Per-step decay multiplier stored as a 12-bit fixed-point fraction
// (value = mant / 4096). 4096 = no decay, 0 = state vanishes each step.
struct Decay {
    std::uint16_t mant = 4096;

    static Decay one() { return Decay{4096}; }
    static Decay zero() { return Decay{0}; }
    static Decay from_double(double d);

    double value() const { return static_cast<double>(mant) / 4096.0; }

    // Floor division so negative potentials decay toward -inf deterministically.
    std::int64_t apply(std::int64_t x) const
    {
        if (mant == 4096) {
            return x;
        }
        if (mant == 0) {
            return 0;
        }
        const std::int64_t p = x * static_cast<std::int64_t>(mant);
        return p >> 12;
    }
};

struct CompartmentConfig {
    std::int64_t threshold = 64;
    Decay voltage_decay = Decay::one();   // 1.0 = integrate-and-fire, no leak
    Decay current_decay = Decay::zero();  // 0.0 = drive current vanishes each step
    std::int32_t bias = 0;
    std::optional<std::int64_t> lower_clamp;

    void validate() const
    {
        if (threshold <= 0) {
            throw std::invalid_argument("compartment threshold must be positive");
        }
    }
};

struct CompartmentState {
    std::int64_t v = 0;  // membrane potential
    std::int64_t u = 0;  // synaptic drive current
    bool spiked = false; // fired this step
};

// One discrete step of the CUBA/IF dynamics:
//   u' = u * current_decay + weighted_input
//   v' = v * voltage_decay + u' + bias
// Fires when v' >= threshold; the residual above threshold is kept so that
// total spike count over a window conserves accumulated drive
// (sum of drive - spikes * theta = final v). Lower clamp applied last.
void step_compartment(CompartmentState &state, const CompartmentConfig &cfg,
        std::int64_t weighted_input);

// Rate-coded activation: floor(u_accum / theta), clamped below at zero.
std::int64_t spike_count_activation(std::int64_t u_accum, std::int64_t theta);

enum class GateMode {
    none,
    and_gate,
};

// Error-path neuron: the soma carries the error integration, the auxiliary
// compartment accumulates the paired feedforward neuron's spikes. In
// and_gate mode a soma threshold crossing produces an output spike only when
// the auxiliary compartment saw activity; a blocked crossing does not reset
// the soma.
struct TwoCompartmentNeuron {
    CompartmentState soma;
    CompartmentState auxiliary;
    GateMode gate_mode = GateMode::none;

    bool auxiliary_active() const { return auxiliary.v >= 1; }
};

bool gated_fire(TwoCompartmentNeuron &n);

// Steps soma (error drive) and auxiliary (paired forward spikes) together,
// returning whether an output spike was emitted.
bool step_two_compartment(TwoCompartmentNeuron &n, const CompartmentConfig &soma_cfg,
        std::int64_t soma_input, std::int64_t aux_input);

enum class Phase {
    one,
    two,
};

// Per-neuron spike counters split by phase. z always equals h + h_hat;
// pre_frozen is the phase-1 count snapshotted at the phase boundary.
struct PhaseTraces {
    std::int32_t h = 0;
    std::int32_t h_hat = 0;
    std::int32_t z = 0;
    std::int32_t pre_frozen = 0;

    void on_spike(Phase phase)
    {
        if (phase == Phase::one) {
            ++h;
        } else {
            ++h_hat;
        }
        ++z;
    }

    void freeze_pre() { pre_frozen = h; }

    void reset()
    {
        h = 0;
        h_hat = 0;
        z = 0;
        pre_frozen = 0;
    }
};

// A population of identically configured compartments stored
// structure-of-arrays for the stepping loops.
struct Population {
    std::int32_t size = 0;
    CompartmentConfig cfg;

    std::vector<std::int64_t> v;
    std::vector<std::int64_t> u;
    std::vector<std::int32_t> bias;       // per-neuron bias (overrides cfg.bias)
    std::vector<std::int64_t> drive;      // weighted input accumulated for this step
    std::vector<std::int32_t> h;          // phase-1 spike counts
    std::vector<std::int32_t> h_hat;      // phase-2 spike counts
    std::vector<std::int32_t> z;          // both-phase counts (tag source)
    std::vector<std::int32_t> pre_frozen; // phase-1 counts frozen at t = T

    std::vector<std::int32_t> spike_list; // indices that fired this step

    explicit Population(std::int32_t n = 0, CompartmentConfig c = {}) { init(n, c); }

    void init(std::int32_t n, CompartmentConfig c);
    void reset_dynamic();
    void freeze_pre_traces();
};

// Integrates drive + bias into every compartment, fires, updates traces.
// Spike indices are left in pop.spike_list; drive is cleared for the next step.
void step_population(Population &pop, Phase phase);

// Error-path variant: a threshold crossing emits a spike only when gate[j]
// is set, and the soma keeps its potential when the gate blocks the spike.
// No traces are kept.
void step_population_gated(Population &pop, const std::vector<std::uint8_t> &gate);

} // namespace emstdp
