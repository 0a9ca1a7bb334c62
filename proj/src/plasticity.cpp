#include "emstdp/plasticity.hpp"

#include <algorithm>

namespace emstdp {

void RuleBindings::bind(VarRef var, std::int64_t value)
{
    switch (var) {
    case VarRef::pre_trace:
        pre_trace = value;
        has_pre = true;
        break;
    case VarRef::post_trace:
        post_trace = value;
        has_post = true;
        break;
    case VarRef::tag:
        tag = value;
        has_tag = true;
        break;
    case VarRef::weight:
        weight = value;
        has_weight = true;
        break;
    case VarRef::constant_one:
        throw std::invalid_argument("constant_one is implicitly bound");
    }
}

std::int64_t RuleBindings::get(VarRef var) const
{
    switch (var) {
    case VarRef::pre_trace:
        if (!has_pre) {
            throw std::invalid_argument("rule references unbound variable pre_trace");
        }
        return pre_trace;
    case VarRef::post_trace:
        if (!has_post) {
            throw std::invalid_argument("rule references unbound variable post_trace");
        }
        return post_trace;
    case VarRef::tag:
        if (!has_tag) {
            throw std::invalid_argument("rule references unbound variable tag");
        }
        return tag;
    case VarRef::weight:
        if (!has_weight) {
            throw std::invalid_argument("rule references unbound variable weight");
        }
        return weight;
    case VarRef::constant_one:
        return 1;
    }
    throw std::logic_error("unreachable");
}

Dyadic eval_sum_of_products(const SumOfProductsRule &rule, const RuleBindings &bindings)
{
    rule.validate();
    std::uint32_t shift = 0;
    for (const Term &t : rule.terms) {
        shift = std::max(shift, t.scale.shift);
    }
    std::int64_t total = 0;
    for (const Term &t : rule.terms) {
        std::int64_t prod = t.scale.num;
        for (const Factor &f : t.factors) {
            prod *= bindings.get(f.var) + f.constant;
        }
        total += prod << (shift - t.scale.shift);
    }
    return Dyadic{total, shift};
}

SumOfProductsRule make_emstdp_rule(const LearningParams &params)
{
    params.validate();
    SumOfProductsRule rule;
    rule.terms.push_back(Term{Dyadic{2 * params.eta_num, params.eta_shift},
            {Factor{VarRef::post_trace, 0}, Factor{VarRef::pre_trace, 0}}});
    rule.terms.push_back(Term{Dyadic{-params.eta_num, params.eta_shift},
            {Factor{VarRef::tag, 0}, Factor{VarRef::pre_trace, 0}}});
    return rule;
}

Dyadic emstdp_weight_delta(const PhaseTraces &post, std::int32_t pre_frozen,
        const LearningParams &params)
{
    RuleBindings b;
    b.bind(VarRef::pre_trace, pre_frozen);
    b.bind(VarRef::post_trace, post.h_hat);
    b.bind(VarRef::tag, post.z);
    return eval_sum_of_products(make_emstdp_rule(params), b);
}

std::int32_t apply_weight_delta(std::int32_t weight, Dyadic delta, const LearningParams &params,
        std::uint64_t sample_counter, std::uint64_t synapse_id)
{
    std::int64_t w = weight + delta.floor_div();
    const std::int64_t rem = delta.remainder();
    if (rem != 0) {
        const std::int64_t den = std::int64_t{1} << delta.shift;
        if (params.rounding == Rounding::stochastic) {
            const std::uint64_t key = sample_counter * 0x9E3779B97F4A7C15ULL + synapse_id;
            const std::uint64_t r = rng::draw(params.seed, rng::Stream::rounding, key);
            // P(round up) = rem / 2^shift, exactly.
            if ((r >> (64 - delta.shift)) < static_cast<std::uint64_t>(rem)) {
                ++w;
            }
        } else {
            const std::int64_t half = den / 2;
            if (rem > half || (rem == half && (w & 1) != 0)) {
                ++w;
            }
        }
    }
    w = std::clamp<std::int64_t>(w, params.weight_min, params.weight_max);
    return static_cast<std::int32_t>(w);
}

void commit_updates(std::span<SynapseRecord> synapses, std::span<const Dyadic> deltas,
        const LearningParams &params, std::uint64_t sample_counter)
{
    params.validate();
    std::size_t next_delta = 0;
    for (std::size_t i = 0; i < synapses.size(); ++i) {
        SynapseRecord &s = synapses[i];
        if (!s.plastic) {
            continue;
        }
        if (next_delta >= deltas.size()) {
            throw std::invalid_argument("commit_updates: one delta required per plastic synapse");
        }
        s.weight = apply_weight_delta(s.weight, deltas[next_delta], params, sample_counter, i);
        s.tag_z = 0;
        ++next_delta;
    }
    if (next_delta != deltas.size()) {
        throw std::invalid_argument("commit_updates: delta count does not match plastic synapses");
    }
}

} // namespace emstdp
