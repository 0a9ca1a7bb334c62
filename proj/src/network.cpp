#include "emstdp/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace emstdp {

std::vector<std::int32_t> encode_input_bias(const SamplePresentation &sample,
        std::int32_t phase_len, std::int64_t theta)
{
    (void)theta;
    std::vector<std::int32_t> bias(sample.input.size());
    for (std::size_t i = 0; i < sample.input.size(); ++i) {
        const std::int32_t x = sample.input[i];
        if (x < 0 || x > phase_len) {
            throw std::invalid_argument("input component outside [0, T]");
        }
        bias[i] = x;
    }
    return bias;
}

std::vector<std::int32_t> encode_label_bias(std::optional<std::int32_t> label,
        std::int32_t num_classes, std::int64_t loss_w)
{
    std::vector<std::int32_t> bias(num_classes, 0);
    if (label) {
        if (*label < 0 || *label >= num_classes) {
            throw std::invalid_argument("label out of range");
        }
        bias[*label] = static_cast<std::int32_t>(loss_w);
    }
    return bias;
}

Network Network::build(const NetworkSpec &spec, std::uint64_t seed, const EngineParams &params)
{
    spec.validate();
    params.quant.validate();
    params.learn.validate();

    Network net;
    net.spec_ = spec;
    net.params_ = params;
    net.params_.learn.seed = seed;
    net.seed_ = seed;
    net.scales_ = compute_layer_scales(spec, params.quant);

    const std::size_t n = spec.num_layers();
    net.fwd_.reserve(n);
    for (std::size_t l = 0; l < n; ++l) {
        CompartmentConfig cfg;
        cfg.threshold = net.scales_.theta_int[l];
        net.fwd_.emplace_back(static_cast<std::int32_t>(spec.layers[l].size()), cfg);
        if (spec.trainable[l]) {
            net.trainable_layers_.push_back(l);
        }
    }

    std::uint64_t synapse_base = 0;
    net.conn_index_.resize(n - 1);
    const double amp = static_cast<double>(params.quant.init_frac);
    for (std::size_t l = 1; l < n; ++l) {
        const LayerDesc &d = spec.layers[l];
        if (d.kind == LayerKind::dense) {
            DenseConn c;
            c.src_layer = static_cast<std::int32_t>(l - 1);
            c.dst_layer = static_cast<std::int32_t>(l);
            c.rows = static_cast<std::int32_t>(spec.layers[l - 1].size());
            c.cols = static_cast<std::int32_t>(d.size());
            c.plastic = spec.trainable[l];
            c.synapse_base = synapse_base;
            c.w.resize(static_cast<std::size_t>(c.rows) * c.cols);
            for (std::size_t i = 0; i < c.w.size(); ++i) {
                c.w[i] = quantize_weight(draw_forward_weight(seed, l, i, amp));
            }
            synapse_base += c.w.size();
            net.conn_index_[l - 1] = static_cast<std::int32_t>(net.dense_.size());
            net.dense_.push_back(std::move(c));
        } else {
            ConvConn c;
            c.src_layer = static_cast<std::int32_t>(l - 1);
            c.dst_layer = static_cast<std::int32_t>(l);
            const std::size_t kn = static_cast<std::size_t>(d.channels)
                    * spec.layers[l - 1].channels * d.kernel * d.kernel;
            c.kernel.resize(kn);
            for (std::size_t i = 0; i < kn; ++i) {
                c.kernel[i] = quantize_weight(draw_forward_weight(seed, l, i, amp));
            }
            const auto syn = conv_connectivity(spec.layers[l - 1], d);
            const std::int32_t rows = static_cast<std::int32_t>(spec.layers[l - 1].size());
            c.row_start.assign(rows + 1, 0);
            for (const SparseSynapse &s : syn) {
                ++c.row_start[s.src + 1];
            }
            for (std::int32_t i = 0; i < rows; ++i) {
                c.row_start[i + 1] += c.row_start[i];
            }
            c.col.resize(syn.size());
            c.kidx.resize(syn.size());
            std::vector<std::int32_t> fill(rows, 0);
            for (const SparseSynapse &s : syn) {
                const std::int32_t pos = c.row_start[s.src] + fill[s.src]++;
                c.col[pos] = s.dst;
                c.kidx[pos] = s.kernel_index;
            }
            synapse_base += syn.size();
            net.conn_index_[l - 1] = -static_cast<std::int32_t>(net.conv_.size()) - 1;
            net.conv_.push_back(std::move(c));
        }
    }

    const std::int32_t classes = spec.num_classes();
    CompartmentConfig loss_cfg;
    loss_cfg.threshold = net.scales_.loss_theta;
    if (params.error_clamp_zero) {
        loss_cfg.lower_clamp = 0;
    }
    net.loss_.layer = static_cast<std::int32_t>(n - 1);
    const std::int32_t loss_size = net.trainable_layers_.empty() ? 0 : classes;
    net.loss_.pos.init(loss_size, loss_cfg);
    net.loss_.neg.init(loss_size, loss_cfg);
    net.loss_.gate.assign(loss_size, 0);

    const auto &tl = net.trainable_layers_;
    if (tl.size() >= 2) {
        const std::size_t hidden = tl.size() - 1;
        if (spec.feedback_mode == FeedbackMode::FA) {
            net.fa_pairs_.resize(hidden);
            net.fa_b_.resize(hidden);
            CompartmentConfig err_cfg;
            err_cfg.threshold = net.scales_.theta_err;
            if (params.error_clamp_zero) {
                err_cfg.lower_clamp = 0;
            }
            for (std::size_t i = 0; i < hidden; ++i) {
                const std::size_t layer = tl[i];
                const std::int32_t size = static_cast<std::int32_t>(spec.layers[layer].size());
                net.fa_pairs_[i].layer = static_cast<std::int32_t>(layer);
                net.fa_pairs_[i].pos.init(size, err_cfg);
                net.fa_pairs_[i].neg.init(size, err_cfg);
                net.fa_pairs_[i].gate.assign(size, 0);

                DenseConn b;
                b.src_layer = static_cast<std::int32_t>(tl[i + 1]);
                b.dst_layer = static_cast<std::int32_t>(layer);
                b.rows = static_cast<std::int32_t>(spec.layers[tl[i + 1]].size());
                b.cols = size;
                b.w.resize(static_cast<std::size_t>(b.rows) * b.cols);
                for (std::size_t k = 0; k < b.w.size(); ++k) {
                    b.w[k] = quantize_weight(draw_fa_b(seed, i, k));
                }
                net.fa_b_[i] = std::move(b);
            }
        } else {
            net.dfa_b_.resize(hidden);
            for (std::size_t i = 0; i < hidden; ++i) {
                const std::size_t layer = tl[i];
                const double damp = params.quant.dfa_gain
                        * static_cast<double>(net.scales_.theta_int[layer])
                        / static_cast<double>(spec.phase_len);
                DenseConn b;
                b.src_layer = static_cast<std::int32_t>(n - 1);
                b.dst_layer = static_cast<std::int32_t>(layer);
                b.rows = classes;
                b.cols = static_cast<std::int32_t>(spec.layers[layer].size());
                b.w.resize(static_cast<std::size_t>(b.rows) * b.cols);
                for (std::size_t k = 0; k < b.w.size(); ++k) {
                    b.w[k] = quantize_weight(draw_dfa_b(seed, layer, k, damp));
                }
                net.dfa_b_[i] = std::move(b);
            }
        }
    }

    net.ports_.resize(n);
    net.inj_applied_.resize(n);
    for (const std::size_t layer : tl) {
        const std::size_t size = static_cast<std::size_t>(spec.layers[layer].size());
        net.ports_[layer].drive.assign(size, 0);
        net.ports_[layer].events.assign(size, 0);
        net.inj_applied_[layer].assign(size, 0);
    }
    return net;
}

Network build_network(const NetworkSpec &spec, std::uint64_t seed, const EngineParams &params)
{
    return Network::build(spec, seed, params);
}

void Network::set_sample(const SamplePresentation &sample)
{
    if (sample.input.size() != static_cast<std::size_t>(spec_.layers[0].size())) {
        throw std::invalid_argument("sample input size does not match the input layer");
    }
    if (sample.label && (*sample.label < 0 || *sample.label >= spec_.num_classes())) {
        throw std::invalid_argument("sample label out of range");
    }
    fwd_[0].bias = encode_input_bias(sample, spec_.phase_len, spec_.theta);
    if (loss_.pos.size == 0) {
        return;
    }
    auto bias = encode_label_bias(sample.label, spec_.num_classes(), scales_.loss_w);
    if (!output_mask_.empty()) {
        for (std::size_t j = 0; j < bias.size(); ++j) {
            if (!output_mask_[j]) {
                bias[j] = 0;
            }
        }
    }
    loss_.pos.bias = bias;
    for (std::size_t j = 0; j < bias.size(); ++j) {
        bias[j] = -bias[j];
    }
    loss_.neg.bias = std::move(bias);
}

void Network::step_forward(Phase phase)
{
    const std::size_t n = fwd_.size();
    for (std::size_t l = 0; l < n; ++l) {
        Population &pop = fwd_[l];
        if (phase == Phase::two && !ports_[l].drive.empty()) {
            ErrorPort &port = ports_[l];
            auto &applied = inj_applied_[l];
            for (std::int32_t k = 0; k < pop.size; ++k) {
                if (pop.pre_frozen[k] >= 1) {
                    pop.drive[k] += port.drive[k];
                    applied[k] += port.events[k];
                }
                port.drive[k] = 0;
                port.events[k] = 0;
            }
        }
        step_population(pop, phase);
        if (l + 1 < n && !pop.spike_list.empty()) {
            const std::int32_t ci = conn_index_[l];
            Population &next = fwd_[l + 1];
            if (ci >= 0) {
                const DenseConn &c = dense_[ci];
                for (const std::int32_t i : pop.spike_list) {
                    const std::int32_t *row = &c.w[static_cast<std::size_t>(i) * c.cols];
                    for (std::int32_t j = 0; j < c.cols; ++j) {
                        next.drive[j] += row[j];
                    }
                }
            } else {
                const ConvConn &c = conv_[-ci - 1];
                for (const std::int32_t i : pop.spike_list) {
                    for (std::int32_t s = c.row_start[i]; s < c.row_start[i + 1]; ++s) {
                        next.drive[c.col[s]] += c.kernel[c.kidx[s]];
                    }
                }
            }
        }
    }
}

void accumulate_cross(const DenseConn &b, const std::vector<std::int32_t> &pos_spikes,
        const std::vector<std::int32_t> &neg_spikes, Population &pos, Population &neg)
{
    for (const std::int32_t j : pos_spikes) {
        const std::int32_t *row = &b.w[static_cast<std::size_t>(j) * b.cols];
        for (std::int32_t k = 0; k < b.cols; ++k) {
            pos.drive[k] += row[k];
            neg.drive[k] -= row[k];
        }
    }
    for (const std::int32_t j : neg_spikes) {
        const std::int32_t *row = &b.w[static_cast<std::size_t>(j) * b.cols];
        for (std::int32_t k = 0; k < b.cols; ++k) {
            pos.drive[k] -= row[k];
            neg.drive[k] += row[k];
        }
    }
}

void Network::step_error_path()
{
    if (loss_.pos.size == 0) {
        return; // no trainable layers, no error path
    }
    // Loss pair integrates w_L per target spike (bias) minus w_L per
    // predicted output spike; the negative channel mirrors it.
    const Population &out = fwd_.back();
    const std::int32_t loss_w = static_cast<std::int32_t>(scales_.loss_w);
    for (const std::int32_t j : out.spike_list) {
        loss_.pos.drive[j] -= loss_w;
        loss_.neg.drive[j] += loss_w;
    }
    step_population_gated(loss_.pos, loss_.gate);
    step_population_gated(loss_.neg, loss_.gate);

    // FA chain cascades top-down through the hidden pairs (Eq-10 style
    // cross-connections: +B to the same sign channel, -B to the opposite).
    for (std::size_t i = fa_pairs_.size(); i-- > 0;) {
        const ErrorPair &up = (i + 1 == fa_pairs_.size()) ? loss_ : fa_pairs_[i + 1];
        ErrorPair &pair = fa_pairs_[i];
        accumulate_cross(fa_b_[i], up.pos.spike_list, up.neg.spike_list, pair.pos, pair.neg);
        step_population_gated(pair.pos, pair.gate);
        step_population_gated(pair.neg, pair.gate);
    }

    // Route this step's error spikes into the forward ports for the next step.
    const std::size_t out_layer = fwd_.size() - 1;
    {
        const std::int64_t g = scales_.inj_gain[out_layer];
        ErrorPort &port = ports_[out_layer];
        for (const std::int32_t j : loss_.pos.spike_list) {
            port.drive[j] += g;
            ++port.events[j];
        }
        for (const std::int32_t j : loss_.neg.spike_list) {
            port.drive[j] -= g;
            ++port.events[j];
        }
    }
    for (std::size_t i = 0; i < fa_pairs_.size(); ++i) {
        const std::size_t layer = static_cast<std::size_t>(fa_pairs_[i].layer);
        const std::int64_t g = scales_.inj_gain[layer];
        ErrorPort &port = ports_[layer];
        for (const std::int32_t j : fa_pairs_[i].pos.spike_list) {
            port.drive[j] += g;
            ++port.events[j];
        }
        for (const std::int32_t j : fa_pairs_[i].neg.spike_list) {
            port.drive[j] -= g;
            ++port.events[j];
        }
    }
    for (std::size_t i = 0; i < dfa_b_.size(); ++i) {
        const DenseConn &b = dfa_b_[i];
        const std::size_t layer = static_cast<std::size_t>(b.dst_layer);
        ErrorPort &port = ports_[layer];
        for (const std::int32_t j : loss_.pos.spike_list) {
            const std::int32_t *row = &b.w[static_cast<std::size_t>(j) * b.cols];
            for (std::int32_t k = 0; k < b.cols; ++k) {
                port.drive[k] += row[k];
                ++port.events[k];
            }
        }
        for (const std::int32_t j : loss_.neg.spike_list) {
            const std::int32_t *row = &b.w[static_cast<std::size_t>(j) * b.cols];
            for (std::int32_t k = 0; k < b.cols; ++k) {
                port.drive[k] -= row[k];
                ++port.events[k];
            }
        }
    }
}

TraceSnapshot Network::snapshot() const
{
    TraceSnapshot s;
    s.h.reserve(fwd_.size());
    for (const Population &pop : fwd_) {
        s.h.push_back(pop.h);
        s.h_hat.push_back(pop.h_hat);
        s.z.push_back(pop.z);
        s.pre_frozen.push_back(pop.pre_frozen);
    }
    return s;
}

TraceSnapshot Network::run_phase1()
{
    if (phase1_done_) {
        throw std::logic_error("run_phase1 requires a reset network");
    }
    for (std::int32_t t = 0; t < spec_.phase_len; ++t) {
        step_forward(Phase::one);
    }
    for (Population &pop : fwd_) {
        pop.freeze_pre_traces();
    }
    phase1_done_ = true;
    return snapshot();
}

void Network::begin_phase2()
{
    if (loss_.pos.size == 0) {
        return;
    }
    const Population &out = fwd_.back();
    for (std::int32_t j = 0; j < out.size; ++j) {
        loss_.gate[j] = out.pre_frozen[j] >= 1 ? 1 : 0;
    }
    for (ErrorPair &pair : fa_pairs_) {
        const Population &fwd = fwd_[pair.layer];
        for (std::int32_t k = 0; k < fwd.size; ++k) {
            pair.gate[k] = fwd.pre_frozen[k] >= 1 ? 1 : 0;
        }
    }
}

TraceSnapshot Network::run_phase2()
{
    if (!phase1_done_ || phase2_done_) {
        throw std::logic_error("run_phase2 requires a completed phase 1");
    }
    // Membranes restart from rest so that, absent error spikes, phase 2
    // replays phase 1 exactly and h_hat - h isolates the error-driven rate
    // change. Spike counters and frozen pre-traces carry across.
    for (Population &pop : fwd_) {
        std::fill(pop.v.begin(), pop.v.end(), 0);
        std::fill(pop.u.begin(), pop.u.end(), 0);
        std::fill(pop.drive.begin(), pop.drive.end(), 0);
    }
    begin_phase2();
    for (std::int32_t t = 0; t < spec_.phase_len; ++t) {
        step_forward(Phase::two);
        step_error_path();
    }
    phase2_done_ = true;
    return snapshot();
}

void Network::apply_updates(SampleMetrics &metrics)
{
    const std::size_t out_layer = fwd_.size() - 1;
    const bool accumulate = params_.pre_trace == PreTraceMode::accumulate_2t;
    for (DenseConn &c : dense_) {
        if (!c.plastic) {
            continue;
        }
        const Population &dst = fwd_[c.dst_layer];
        const std::vector<std::int32_t> &pre =
                accumulate ? fwd_[c.src_layer].z : fwd_[c.src_layer].pre_frozen;
        const bool is_output = static_cast<std::size_t>(c.dst_layer) == out_layer;
        for (std::int32_t j = 0; j < c.cols; ++j) {
            if (is_output && !output_mask_.empty() && !output_mask_[j]) {
                continue;
            }
            const std::int64_t factor = 2 * static_cast<std::int64_t>(dst.h_hat[j]) - dst.z[j];
            if (factor == 0) {
                continue;
            }
            for (std::int32_t i = 0; i < c.rows; ++i) {
                const std::int32_t p = pre[i];
                if (p == 0) {
                    continue;
                }
                const Dyadic delta{params_.learn.eta_num * factor * p,
                        params_.learn.eta_shift + params_.learn.update_shift};
                std::int32_t &w = c.w[static_cast<std::size_t>(i) * c.cols + j];
                const std::int32_t old = w;
                w = apply_weight_delta(old, delta, params_.learn, sample_counter_,
                        c.synapse_base + static_cast<std::uint64_t>(i) * c.cols + j);
                if (w != old) {
                    metrics.update_l1 += std::abs(w - old);
                    ++metrics.updates_applied;
                }
            }
        }
    }
}

SampleMetrics Network::train_sample(const SamplePresentation &sample)
{
    if (!sample.label) {
        throw std::invalid_argument("train_sample requires a label");
    }
    set_sample(sample);
    run_phase1();
    run_phase2();

    SampleMetrics metrics;
    const Population &out = fwd_.back();
    metrics.output_h = out.h;
    metrics.output_h_hat = out.h_hat;
    metrics.predicted = static_cast<std::int32_t>(
            std::max_element(out.h.begin(), out.h.end()) - out.h.begin());
    apply_updates(metrics);
    ++sample_counter_;
    reset_all();
    return metrics;
}

std::int32_t Network::infer_sample(const SamplePresentation &sample)
{
    SamplePresentation unlabeled{sample.input, std::nullopt};
    set_sample(unlabeled);
    run_phase1();
    const Population &out = fwd_.back();
    const std::int32_t predicted = static_cast<std::int32_t>(
            std::max_element(out.h.begin(), out.h.end()) - out.h.begin());
    reset_all();
    return predicted;
}

void Network::reset_all()
{
    for (Population &pop : fwd_) {
        pop.reset_dynamic();
    }
    loss_.pos.reset_dynamic();
    loss_.neg.reset_dynamic();
    std::fill(loss_.pos.bias.begin(), loss_.pos.bias.end(), 0);
    std::fill(loss_.neg.bias.begin(), loss_.neg.bias.end(), 0);
    std::fill(loss_.gate.begin(), loss_.gate.end(), 0);
    for (ErrorPair &pair : fa_pairs_) {
        pair.pos.reset_dynamic();
        pair.neg.reset_dynamic();
        std::fill(pair.gate.begin(), pair.gate.end(), 0);
    }
    for (ErrorPort &port : ports_) {
        std::fill(port.drive.begin(), port.drive.end(), 0);
        std::fill(port.events.begin(), port.events.end(), 0);
    }
    for (auto &applied : inj_applied_) {
        std::fill(applied.begin(), applied.end(), 0);
    }
    phase1_done_ = false;
    phase2_done_ = false;
}

void Network::set_output_mask(std::vector<std::uint8_t> mask)
{
    if (mask.size() != static_cast<std::size_t>(spec_.num_classes())) {
        throw std::invalid_argument("output mask size must equal the class count");
    }
    output_mask_ = std::move(mask);
}

std::int64_t Network::error_path_compartments() const
{
    std::int64_t count = loss_.pos.size + loss_.neg.size;
    for (const ErrorPair &pair : fa_pairs_) {
        count += pair.pos.size + pair.neg.size;
    }
    return count;
}

void Network::set_conv_kernel(std::size_t conv_index, std::vector<std::int32_t> kernel,
        std::int64_t theta_int)
{
    if (conv_index >= conv_.size()) {
        throw std::invalid_argument("conv connection index out of range");
    }
    ConvConn &c = conv_[conv_index];
    if (kernel.size() != c.kernel.size()) {
        throw std::invalid_argument("conv kernel size mismatch");
    }
    if (theta_int <= 0) {
        throw std::invalid_argument("conv threshold must be positive");
    }
    c.kernel = std::move(kernel);
    scales_.theta_int[c.dst_layer] = theta_int;
    fwd_[c.dst_layer].cfg.threshold = theta_int;
}

} // namespace emstdp
