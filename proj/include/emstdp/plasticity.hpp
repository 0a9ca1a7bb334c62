#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "emstdp/neuron.hpp"
#include "emstdp/rng.hpp"

namespace emstdp {

// Exact dyadic rational num / 2^shift. Keeps every learning-rule evaluation
// in integer arithmetic until the final rounding step.
struct Dyadic {
    std::int64_t num = 0;
    std::uint32_t shift = 0;

    double value() const { return static_cast<double>(num) / static_cast<double>(std::int64_t{1} << shift); }

    // Integer part under floor division plus the nonnegative remainder.
    std::int64_t floor_div() const
    {
        const std::int64_t d = std::int64_t{1} << shift;
        std::int64_t q = num / d;
        if (num % d != 0 && num < 0) {
            --q;
        }
        return q;
    }

    std::int64_t remainder() const
    {
        const std::int64_t d = std::int64_t{1} << shift;
        return num - floor_div() * d;
    }
};

enum class VarRef {
    pre_trace,
    post_trace,
    tag,
    weight,
    constant_one,
};

struct Factor {
    VarRef var = VarRef::constant_one;
    std::int64_t constant = 0;
};

struct Term {
    Dyadic scale;
    std::vector<Factor> factors;
};

// Learning rules constrained to sum-of-products form:
//   delta = sum_i S_i * prod_j (V_ij + C_ij)
struct SumOfProductsRule {
    std::vector<Term> terms;

    void validate() const
    {
        if (terms.empty()) {
            throw std::invalid_argument("sum-of-products rule needs at least one term");
        }
        for (const Term &t : terms) {
            if (t.factors.empty()) {
                throw std::invalid_argument("sum-of-products term needs at least one factor");
            }
        }
    }
};

// Variable bindings available to the learning engine. constant_one is always
// bound; the rest must be set before evaluation.
struct RuleBindings {
    std::int64_t pre_trace = 0;
    std::int64_t post_trace = 0;
    std::int64_t tag = 0;
    std::int64_t weight = 0;
    bool has_pre = false;
    bool has_post = false;
    bool has_tag = false;
    bool has_weight = false;

    void bind(VarRef var, std::int64_t value);
    std::int64_t get(VarRef var) const;
};

// Exact evaluation; result carries the largest shift among the terms.
Dyadic eval_sum_of_products(const SumOfProductsRule &rule, const RuleBindings &bindings);

enum class Rounding {
    stochastic,
    nearest, // round half to even
};

struct LearningParams {
    // eta = eta_num / 2^eta_shift; default 1/8.
    std::int64_t eta_num = 1;
    std::uint32_t eta_shift = 3;
    // Grid normalizer: rule deltas are products of spike counts (up to T^2),
    // while weights live on the coarse 8-bit grid. Commits shift the delta
    // right by this amount; stochastic rounding keeps the expectation exact.
    std::uint32_t update_shift = 3;
    std::int32_t weight_min = -128;
    std::int32_t weight_max = 127;
    Rounding rounding = Rounding::stochastic;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (eta_num < 0) {
            throw std::invalid_argument("learning rate must not be negative");
        }
        if (weight_min > weight_max) {
            throw std::invalid_argument("weight_min must not exceed weight_max");
        }
    }
};

struct SynapseRecord {
    std::int32_t weight = 0;
    std::int32_t tag_z = 0;
    std::int32_t src = 0;
    std::int32_t dst = 0;
    bool plastic = true;
};

// The tag-variable update evaluated at the end of phase 2:
//   delta = 2*eta*h_hat*h_pre - eta*Z*h_pre
// which equals eta*(h_hat - h)*h_pre given Z = h + h_hat.
SumOfProductsRule make_emstdp_rule(const LearningParams &params);
Dyadic emstdp_weight_delta(const PhaseTraces &post, std::int32_t pre_frozen,
        const LearningParams &params);

// Rounds w + delta under the configured mode and clips into range. The
// rounding draw is a pure function of (seed, sample, synapse) so any
// evaluation order produces identical weights.
std::int32_t apply_weight_delta(std::int32_t weight, Dyadic delta, const LearningParams &params,
        std::uint64_t sample_counter, std::uint64_t synapse_id);

// End-of-sample commit: one delta per plastic synapse, tags reset to zero.
void commit_updates(std::span<SynapseRecord> synapses, std::span<const Dyadic> deltas,
        const LearningParams &params, std::uint64_t sample_counter = 0);

} // namespace emstdp
