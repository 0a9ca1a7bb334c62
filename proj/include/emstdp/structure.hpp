#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace emstdp {

enum class LayerKind {
    input,
    conv,
    dense,
};

enum class FeedbackMode {
    FA,
    DFA,
};

std::string to_string(FeedbackMode mode);
FeedbackMode feedback_mode_from_string(const std::string &s);

struct LayerDesc {
    LayerKind kind = LayerKind::dense;
    // Spatial shape of this layer's output. Dense layers use w=units, h=c=1.
    std::int32_t width = 1;
    std::int32_t height = 1;
    std::int32_t channels = 1;
    // Conv parameters (kind == conv only).
    std::int32_t kernel = 0;
    std::int32_t stride = 0;

    std::int64_t size() const
    {
        return static_cast<std::int64_t>(width) * height * channels;
    }
};

// Parses a structure string such as "28x28x1-5x5k16c2s-3x3k8c2s-100d-10d"
// (input WxHxC, conv KxKk<filters>c<stride>s, dense <units>d) and computes
// output shapes with valid (no) padding: out = floor((in - k) / s) + 1.
std::vector<LayerDesc> parse_structure(const std::string &spec_string);

struct NetworkSpec {
    std::string structure; // the string the layer list was parsed from
    std::vector<LayerDesc> layers;
    FeedbackMode feedback_mode = FeedbackMode::DFA;
    std::int32_t phase_len = 64;   // T
    std::int64_t theta = 64;       // base threshold, = T for unit-slope input coding
    std::vector<bool> trainable;   // per layer; input always false

    std::int32_t num_classes() const
    {
        return static_cast<std::int32_t>(layers.back().size());
    }
    std::size_t num_layers() const { return layers.size(); }

    void validate() const;
};

// Dense layers train, conv layers hold pretrained fixed weights.
NetworkSpec make_network_spec(const std::string &structure, FeedbackMode mode,
        std::int32_t phase_len = 64, std::int64_t theta = 64);

// One synapse of a sparse (convolutional) connection. kernel_index addresses
// the shared kernel entry the weight came from, in
// [filter][in_channel][ky][kx] order.
struct SparseSynapse {
    std::int32_t src = 0;
    std::int32_t dst = 0;
    std::int32_t kernel_index = 0;
};

// Enumerates the synapses a conv layer makes from its input layer, ordered
// by source then destination. Every destination neuron has fan-in k*k*C_in.
std::vector<SparseSynapse> conv_connectivity(const LayerDesc &input, const LayerDesc &conv);

} // namespace emstdp
