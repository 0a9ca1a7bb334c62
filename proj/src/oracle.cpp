#include "emstdp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace emstdp {

namespace {

double activate(double u, double theta, ActivationMode mode)
{
    if (u <= 0.0) {
        return 0.0;
    }
    const double r = u / theta;
    return mode == ActivationMode::floor ? std::floor(r) : r;
}

bool gate_active(double h, ActivationMode mode)
{
    return mode == ActivationMode::floor ? h >= 1.0 : h > 0.0;
}

struct ForwardPass {
    std::vector<std::vector<double>> u; // pre-activation potentials per layer
    std::vector<std::vector<double>> h; // rates per layer
};

ForwardPass forward_all(const FpNetwork &net, const std::vector<double> &x)
{
    const std::size_t n = net.spec.num_layers();
    if (x.size() != static_cast<std::size_t>(net.spec.layers[0].size())) {
        throw std::invalid_argument("fp_forward: input size mismatch");
    }
    ForwardPass fp;
    fp.u.resize(n);
    fp.h.resize(n);
    fp.u[0].assign(x.size(), 0.0);
    fp.h[0] = x;
    for (std::size_t l = 1; l < n; ++l) {
        const LayerDesc &d = net.spec.layers[l];
        const std::vector<double> &prev = fp.h[l - 1];
        std::vector<double> u(static_cast<std::size_t>(d.size()), 0.0);
        if (d.kind == LayerKind::dense) {
            const Mat &w = net.weights[l - 1];
            for (std::int32_t i = 0; i < w.rows; ++i) {
                const double hi = prev[i];
                if (hi == 0.0) {
                    continue;
                }
                const double *row = &w.a[static_cast<std::size_t>(i) * w.cols];
                for (std::int32_t j = 0; j < w.cols; ++j) {
                    u[j] += hi * row[j];
                }
            }
        } else {
            const auto syn = conv_connectivity(net.spec.layers[l - 1], d);
            const std::vector<double> &kw = net.kernels[l - 1];
            for (const SparseSynapse &s : syn) {
                u[s.dst] += prev[s.src] * kw[s.kernel_index];
            }
        }
        const double theta = static_cast<double>(net.scales.theta_int[l]);
        std::vector<double> h(u.size());
        for (std::size_t j = 0; j < u.size(); ++j) {
            h[j] = activate(u[j], theta, net.mode);
        }
        fp.u[l] = std::move(u);
        fp.h[l] = std::move(h);
    }
    return fp;
}

} // namespace

FpNetwork build_fp_network(const NetworkSpec &spec, std::uint64_t seed,
        const OracleParams &params)
{
    spec.validate();
    FpNetwork net;
    net.spec = spec;
    net.scales = compute_layer_scales(spec, params.quant);
    net.mode = params.mode;
    net.err_gain = params.quant.err_gain;
    net.weight_clip = params.weight_clip;

    const std::size_t n = spec.num_layers();
    net.weights.resize(n - 1);
    net.kernels.resize(n - 1);
    const double amp = static_cast<double>(params.quant.init_frac);
    for (std::size_t l = 1; l < n; ++l) {
        const LayerDesc &d = spec.layers[l];
        if (d.kind == LayerKind::dense) {
            Mat w(static_cast<std::int32_t>(spec.layers[l - 1].size()),
                    static_cast<std::int32_t>(d.size()));
            for (std::size_t i = 0; i < w.a.size(); ++i) {
                w.a[i] = draw_forward_weight(seed, l, i, amp);
            }
            net.weights[l - 1] = std::move(w);
        } else {
            const std::size_t kn = static_cast<std::size_t>(d.channels)
                    * spec.layers[l - 1].channels * d.kernel * d.kernel;
            std::vector<double> kw(kn);
            for (std::size_t i = 0; i < kn; ++i) {
                kw[i] = draw_forward_weight(seed, l, i, amp);
            }
            net.kernels[l - 1] = std::move(kw);
        }
        if (spec.trainable[l]) {
            net.trainable_layers.push_back(l);
        }
    }

    // FA chain between consecutive trainable layers, top down.
    const auto &tl = net.trainable_layers;
    if (tl.size() >= 2) {
        net.fa_chain.resize(tl.size() - 1);
        net.dfa_direct.resize(tl.size() - 1);
        const std::int32_t classes = spec.num_classes();
        for (std::size_t i = 0; i + 1 < tl.size(); ++i) {
            const std::int32_t upper = static_cast<std::int32_t>(spec.layers[tl[i + 1]].size());
            const std::int32_t lower = static_cast<std::int32_t>(spec.layers[tl[i]].size());
            Mat bfa(upper, lower);
            for (std::size_t k = 0; k < bfa.a.size(); ++k) {
                bfa.a[k] = draw_fa_b(seed, i, k);
            }
            net.fa_chain[i] = std::move(bfa);

            Mat bdfa(classes, lower);
            const double damp = params.quant.dfa_gain
                    * static_cast<double>(net.scales.theta_int[tl[i]])
                    / static_cast<double>(spec.phase_len);
            for (std::size_t k = 0; k < bdfa.a.size(); ++k) {
                bdfa.a[k] = draw_dfa_b(seed, tl[i], k, damp);
            }
            net.dfa_direct[i] = std::move(bdfa);
        }
    }
    return net;
}

std::vector<std::vector<double>> fp_forward(const FpNetwork &net, const std::vector<double> &x)
{
    return forward_all(net, x).h;
}

LayerDeltas fp_emstdp_step(const FpNetwork &net, const std::vector<double> &x,
        std::int32_t label, double eta, FeedbackMode mode)
{
    const std::int32_t classes = net.spec.num_classes();
    if (label < 0 || label >= classes) {
        throw std::invalid_argument("fp_emstdp_step: label out of range");
    }
    const ForwardPass fp = forward_all(net, x);
    const double T = static_cast<double>(net.spec.phase_len);
    const auto &tl = net.trainable_layers;

    LayerDeltas out;
    out.dw.resize(net.spec.num_layers() - 1);
    if (tl.empty()) {
        return out;
    }

    // Signed loss rates, gated by output-layer phase-1 activity.
    const std::size_t out_layer = tl.back();
    const std::vector<double> &h_out = fp.h[out_layer];
    std::vector<double> e_loss(classes, 0.0);
    for (std::int32_t j = 0; j < classes; ++j) {
        if (!gate_active(h_out[j], net.mode)) {
            continue;
        }
        const double target = (j == label) ? T : 0.0;
        e_loss[j] = std::clamp(target - h_out[j], -T, T);
    }

    // Corrections per trainable layer, top down.
    std::vector<std::vector<double>> corr(tl.size());
    {
        std::vector<double> c(classes, 0.0);
        for (std::int32_t j = 0; j < classes; ++j) {
            c[j] = net.err_gain * e_loss[j] / T;
        }
        corr[tl.size() - 1] = std::move(c);
    }
    std::vector<double> e_up = e_loss;
    for (std::size_t i = tl.size() - 1; i-- > 0;) {
        const std::size_t layer = tl[i];
        const std::size_t n_l = fp.h[layer].size();
        std::vector<double> c(n_l, 0.0);
        if (mode == FeedbackMode::FA) {
            const Mat &b = net.fa_chain[i];
            std::vector<double> eps(n_l, 0.0);
            for (std::int32_t jj = 0; jj < b.rows; ++jj) {
                const double e = e_up[jj];
                if (e == 0.0) {
                    continue;
                }
                for (std::int32_t k = 0; k < b.cols; ++k) {
                    eps[k] += e * b.at(jj, k);
                }
            }
            std::vector<double> e_here(n_l, 0.0);
            const double theta_err = static_cast<double>(net.scales.theta_err);
            for (std::size_t k = 0; k < n_l; ++k) {
                if (!gate_active(fp.h[layer][k], net.mode)) {
                    continue;
                }
                e_here[k] = std::clamp(eps[k] / theta_err, -T, T);
                c[k] = net.err_gain * e_here[k] / T;
            }
            e_up = std::move(e_here);
        } else {
            const Mat &b = net.dfa_direct[i];
            const double theta_l = static_cast<double>(net.scales.theta_int[layer]);
            std::vector<double> inj(n_l, 0.0);
            for (std::int32_t jj = 0; jj < b.rows; ++jj) {
                const double e = e_loss[jj];
                if (e == 0.0) {
                    continue;
                }
                for (std::int32_t k = 0; k < b.cols; ++k) {
                    inj[k] += e * b.at(jj, k);
                }
            }
            // A phase-2 rate shift is physically bounded by +-T spikes.
            for (std::size_t k = 0; k < n_l; ++k) {
                if (gate_active(fp.h[layer][k], net.mode)) {
                    c[k] = std::clamp(inj[k] / theta_l, -T, T);
                }
            }
        }
        corr[i] = std::move(c);
    }

    // delta = eta * (h_hat - h) * h_pre; rates never go negative.
    for (std::size_t i = 0; i < tl.size(); ++i) {
        const std::size_t layer = tl[i];
        const std::vector<double> &h = fp.h[layer];
        const std::vector<double> &h_pre = fp.h[layer - 1];
        Mat dw(static_cast<std::int32_t>(h_pre.size()), static_cast<std::int32_t>(h.size()));
        for (std::size_t j = 0; j < h.size(); ++j) {
            const double h_hat = std::max(h[j] + corr[i][j], 0.0);
            const double diff = h_hat - h[j];
            if (diff == 0.0) {
                continue;
            }
            for (std::size_t p = 0; p < h_pre.size(); ++p) {
                if (h_pre[p] != 0.0) {
                    dw.at(static_cast<std::int32_t>(p), static_cast<std::int32_t>(j)) =
                            eta * diff * h_pre[p];
                }
            }
        }
        out.dw[layer - 1] = std::move(dw);
    }
    return out;
}

LayerDeltas bp_gradient(const FpNetwork &net, const std::vector<double> &x, std::int32_t label)
{
    if (net.mode != ActivationMode::relaxed) {
        throw std::logic_error("bp_gradient requires the relaxed activation mode");
    }
    const std::int32_t classes = net.spec.num_classes();
    if (label < 0 || label >= classes) {
        throw std::invalid_argument("bp_gradient: label out of range");
    }
    const ForwardPass fp = forward_all(net, x);
    const double T = static_cast<double>(net.spec.phase_len);
    const std::size_t n = net.spec.num_layers();

    LayerDeltas out;
    out.dw.resize(n - 1);

    // delta_j = dL/du_j, starting at the output layer.
    const std::size_t out_layer = n - 1;
    std::vector<double> delta(fp.h[out_layer].size(), 0.0);
    {
        const double theta = static_cast<double>(net.scales.theta_int[out_layer]);
        for (std::int32_t j = 0; j < classes; ++j) {
            const double target = (j == label) ? T : 0.0;
            const double dact = fp.u[out_layer][j] > 0.0 ? 1.0 / theta : 0.0;
            delta[j] = (fp.h[out_layer][j] - target) * dact;
        }
    }
    for (std::size_t layer = out_layer; layer >= 1; --layer) {
        if (net.spec.layers[layer].kind != LayerKind::dense) {
            break; // gradients are only needed through the dense stack
        }
        const std::vector<double> &h_pre = fp.h[layer - 1];
        Mat dw(static_cast<std::int32_t>(h_pre.size()), static_cast<std::int32_t>(delta.size()));
        for (std::size_t p = 0; p < h_pre.size(); ++p) {
            if (h_pre[p] == 0.0) {
                continue;
            }
            for (std::size_t j = 0; j < delta.size(); ++j) {
                dw.at(static_cast<std::int32_t>(p), static_cast<std::int32_t>(j)) =
                        delta[j] * h_pre[p];
            }
        }
        out.dw[layer - 1] = std::move(dw);
        if (layer == 1 || net.spec.layers[layer - 1].kind != LayerKind::dense) {
            break;
        }
        const Mat &w = net.weights[layer - 1];
        const double theta = static_cast<double>(net.scales.theta_int[layer - 1]);
        std::vector<double> next(h_pre.size(), 0.0);
        for (std::size_t k = 0; k < h_pre.size(); ++k) {
            const double dact = fp.u[layer - 1][k] > 0.0 ? 1.0 / theta : 0.0;
            if (dact == 0.0) {
                continue;
            }
            double acc = 0.0;
            const double *row = &w.a[k * static_cast<std::size_t>(w.cols)];
            for (std::size_t j = 0; j < delta.size(); ++j) {
                acc += row[j] * delta[j];
            }
            next[k] = acc * dact;
        }
        delta = std::move(next);
    }
    return out;
}

Agreement agreement_metric(const LayerDeltas &a, const LayerDeltas &b)
{
    if (a.dw.size() != b.dw.size()) {
        throw std::invalid_argument("agreement_metric: layer count mismatch");
    }
    Agreement out;
    for (std::size_t l = 0; l < a.dw.size(); ++l) {
        const Mat &ma = a.dw[l];
        const Mat &mb = b.dw[l];
        if (ma.a.empty() && mb.a.empty()) {
            continue;
        }
        if (ma.rows != mb.rows || ma.cols != mb.cols) {
            throw std::invalid_argument("agreement_metric: shape mismatch");
        }
        double dot = 0.0;
        double na = 0.0;
        double nb = 0.0;
        std::size_t matches = 0;
        for (std::size_t i = 0; i < ma.a.size(); ++i) {
            dot += ma.a[i] * mb.a[i];
            na += ma.a[i] * ma.a[i];
            nb += mb.a[i] * mb.a[i];
            const int sa = (ma.a[i] > 0.0) - (ma.a[i] < 0.0);
            const int sb = (mb.a[i] > 0.0) - (mb.a[i] < 0.0);
            if (sa == sb) {
                ++matches;
            }
        }
        const double denom = std::sqrt(na) * std::sqrt(nb);
        out.cosine.push_back(denom > 0.0 ? dot / denom : 0.0);
        out.sign_match.push_back(
                ma.a.empty() ? 1.0 : static_cast<double>(matches) / static_cast<double>(ma.a.size()));
    }
    return out;
}

void fp_apply_deltas(FpNetwork &net, const LayerDeltas &deltas)
{
    for (std::size_t l = 0; l < deltas.dw.size() && l < net.weights.size(); ++l) {
        const Mat &dw = deltas.dw[l];
        if (dw.a.empty()) {
            continue;
        }
        Mat &w = net.weights[l];
        if (w.rows != dw.rows || w.cols != dw.cols) {
            throw std::invalid_argument("fp_apply_deltas: shape mismatch");
        }
        for (std::size_t i = 0; i < w.a.size(); ++i) {
            w.a[i] = std::clamp(w.a[i] + dw.a[i], -net.weight_clip, net.weight_clip);
        }
    }
}

std::int32_t fp_predict(const FpNetwork &net, const std::vector<double> &x)
{
    const auto h = fp_forward(net, x);
    const std::vector<double> &out = h.back();
    return static_cast<std::int32_t>(
            std::max_element(out.begin(), out.end()) - out.begin());
}

} // namespace emstdp
