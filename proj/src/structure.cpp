#include "emstdp/structure.hpp"

#include <charconv>
#include <stdexcept>

namespace emstdp {

std::string to_string(FeedbackMode mode)
{
    return mode == FeedbackMode::FA ? "FA" : "DFA";
}

FeedbackMode feedback_mode_from_string(const std::string &s)
{
    if (s == "FA" || s == "fa") {
        return FeedbackMode::FA;
    }
    if (s == "DFA" || s == "dfa") {
        return FeedbackMode::DFA;
    }
    throw std::invalid_argument("unknown feedback mode: " + s);
}

namespace {

struct TokenCursor {
    const std::string &tok;
    std::size_t pos = 0;

    std::int32_t number()
    {
        std::int32_t value = 0;
        const char *begin = tok.data() + pos;
        const char *end = tok.data() + tok.size();
        auto [ptr, ec] = std::from_chars(begin, end, value);
        if (ec != std::errc{} || ptr == begin) {
            throw std::invalid_argument("malformed structure token: " + tok);
        }
        pos = static_cast<std::size_t>(ptr - tok.data());
        return value;
    }

    bool eat(char c)
    {
        if (pos < tok.size() && tok[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    bool done() const { return pos == tok.size(); }
};

LayerDesc parse_token(const std::string &tok, bool first)
{
    TokenCursor cur{tok};
    const std::int32_t a = cur.number();
    if (cur.eat('d')) {
        if (!cur.done()) {
            throw std::invalid_argument("malformed dense token: " + tok);
        }
        LayerDesc d;
        d.kind = LayerKind::dense;
        d.width = a;
        d.height = 1;
        d.channels = 1;
        if (a <= 0) {
            throw std::invalid_argument("dense layer needs a positive unit count: " + tok);
        }
        return d;
    }
    if (!cur.eat('x')) {
        throw std::invalid_argument("malformed structure token: " + tok);
    }
    const std::int32_t b = cur.number();
    if (cur.eat('x')) {
        // Input layer WxHxC.
        const std::int32_t c = cur.number();
        if (!cur.done()) {
            throw std::invalid_argument("malformed input token: " + tok);
        }
        if (!first) {
            throw std::invalid_argument("input shape token only allowed first: " + tok);
        }
        if (a <= 0 || b <= 0 || c <= 0) {
            throw std::invalid_argument("input dimensions must be positive: " + tok);
        }
        LayerDesc d;
        d.kind = LayerKind::input;
        d.width = a;
        d.height = b;
        d.channels = c;
        return d;
    }
    // Conv layer KxKk<filters>c<stride>s.
    if (!cur.eat('k')) {
        throw std::invalid_argument("malformed conv token: " + tok);
    }
    if (a != b) {
        throw std::invalid_argument("only square conv kernels are supported: " + tok);
    }
    const std::int32_t filters = cur.number();
    if (!cur.eat('c')) {
        throw std::invalid_argument("malformed conv token (missing filter count): " + tok);
    }
    const std::int32_t stride = cur.number();
    if (!cur.eat('s') || !cur.done()) {
        throw std::invalid_argument("malformed conv token (missing stride): " + tok);
    }
    if (a <= 0 || filters <= 0 || stride <= 0) {
        throw std::invalid_argument("conv parameters must be positive: " + tok);
    }
    LayerDesc d;
    d.kind = LayerKind::conv;
    d.kernel = a;
    d.channels = filters;
    d.stride = stride;
    return d;
}

} // namespace

std::vector<LayerDesc> parse_structure(const std::string &spec_string)
{
    if (spec_string.empty()) {
        throw std::invalid_argument("empty structure string");
    }
    std::vector<std::string> tokens;
    std::size_t start = 0;
    while (start <= spec_string.size()) {
        const std::size_t dash = spec_string.find('-', start);
        const std::size_t end = (dash == std::string::npos) ? spec_string.size() : dash;
        tokens.push_back(spec_string.substr(start, end - start));
        if (dash == std::string::npos) {
            break;
        }
        start = dash + 1;
    }

    std::vector<LayerDesc> layers;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        LayerDesc d = parse_token(tokens[i], i == 0);
        if (i == 0) {
            if (d.kind != LayerKind::input) {
                throw std::invalid_argument(
                        "structure must start with an input shape (WxHxC): " + tokens[i]);
            }
        } else if (d.kind == LayerKind::conv) {
            const LayerDesc &prev = layers.back();
            if (prev.kind == LayerKind::dense) {
                throw std::invalid_argument("conv layer cannot follow a dense layer");
            }
            const std::int32_t out_w = (prev.width - d.kernel) / d.stride + 1;
            const std::int32_t out_h = (prev.height - d.kernel) / d.stride + 1;
            if (prev.width < d.kernel || prev.height < d.kernel) {
                throw std::invalid_argument("conv kernel larger than its input: " + tokens[i]);
            }
            d.width = out_w;
            d.height = out_h;
        }
        layers.push_back(d);
    }
    if (layers.size() < 2) {
        throw std::invalid_argument("structure needs an input layer and at least one layer");
    }
    if (layers.back().kind != LayerKind::dense) {
        throw std::invalid_argument("last layer must be dense (the classifier)");
    }
    return layers;
}

void NetworkSpec::validate() const
{
    if (layers.size() < 2) {
        throw std::invalid_argument("network needs at least input and output layers");
    }
    if (phase_len <= 0) {
        throw std::invalid_argument("phase length must be positive");
    }
    if (theta <= 0) {
        throw std::invalid_argument("theta must be positive");
    }
    if (trainable.size() != layers.size()) {
        throw std::invalid_argument("trainable mask must cover every layer");
    }
    if (trainable[0]) {
        throw std::invalid_argument("input layer cannot be trainable");
    }
}

NetworkSpec make_network_spec(const std::string &structure, FeedbackMode mode,
        std::int32_t phase_len, std::int64_t theta)
{
    NetworkSpec spec;
    spec.structure = structure;
    spec.layers = parse_structure(structure);
    spec.feedback_mode = mode;
    spec.phase_len = phase_len;
    spec.theta = theta;
    spec.trainable.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        spec.trainable[i] = spec.layers[i].kind == LayerKind::dense;
    }
    spec.validate();
    return spec;
}

std::vector<SparseSynapse> conv_connectivity(const LayerDesc &input, const LayerDesc &conv)
{
    if (conv.kind != LayerKind::conv) {
        throw std::invalid_argument("conv_connectivity requires a conv layer");
    }
    const std::int32_t in_w = input.width;
    const std::int32_t in_h = input.height;
    const std::int32_t in_c = input.channels;
    const std::int32_t k = conv.kernel;
    const std::int32_t s = conv.stride;
    const std::int32_t out_w = conv.width;
    const std::int32_t out_h = conv.height;
    const std::int32_t filters = conv.channels;

    // Source layout [c][y][x]; destination layout [f][y][x];
    // kernel layout [f][c][ky][kx].
    std::vector<SparseSynapse> syn;
    syn.reserve(static_cast<std::size_t>(out_w) * out_h * filters * k * k * in_c);
    for (std::int32_t c = 0; c < in_c; ++c) {
        for (std::int32_t y = 0; y < in_h; ++y) {
            for (std::int32_t x = 0; x < in_w; ++x) {
                const std::int32_t src = (c * in_h + y) * in_w + x;
                for (std::int32_t f = 0; f < filters; ++f) {
                    // Output positions whose receptive field covers (x, y).
                    for (std::int32_t oy = (y - k + s) / s < 0 ? 0 : (y - k + s) / s;
                            oy < out_h && oy * s <= y; ++oy) {
                        const std::int32_t ky = y - oy * s;
                        if (ky < 0 || ky >= k) {
                            continue;
                        }
                        for (std::int32_t ox = (x - k + s) / s < 0 ? 0 : (x - k + s) / s;
                                ox < out_w && ox * s <= x; ++ox) {
                            const std::int32_t kx = x - ox * s;
                            if (kx < 0 || kx >= k) {
                                continue;
                            }
                            const std::int32_t dst = (f * out_h + oy) * out_w + ox;
                            const std::int32_t kidx = ((f * in_c + c) * k + ky) * k + kx;
                            syn.push_back(SparseSynapse{src, dst, kidx});
                        }
                    }
                }
            }
        }
    }
    return syn;
}

} // namespace emstdp
