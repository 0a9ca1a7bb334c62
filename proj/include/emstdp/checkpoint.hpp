#pragma once

#include <string>

#include "emstdp/network.hpp"
#include "emstdp/oracle.hpp"

namespace emstdp {

// Checkpoint container: a line-oriented text header (format version, payload
// kind, structure, feedback mode, theta, phase length, seed, per-connection
// descriptors with integer thresholds and real scales) terminated by an
// "end" line, followed by raw little-endian arrays in connection order —
// forward weights first, then feedback matrices.
//
//   payload int8     quantized engine weights, int32 little-endian values
//   payload f32      full-precision oracle weights, float32 little-endian
//   payload conv-f32 pretrained conv kernels only, float32 little-endian
//
// Loading checks shapes against the receiving network and fails on mismatch.

// Reads just the header and reports the payload kind (int8/f32/conv-f32).
std::string checkpoint_payload_kind(const std::string &path);

void save_checkpoint(const std::string &path, const Network &net);
void load_checkpoint(const std::string &path, Network &net);

void save_fp_checkpoint(const std::string &path, const FpNetwork &net);
void load_fp_checkpoint(const std::string &path, FpNetwork &net);

// Dequantizes an engine checkpoint into an oracle network of the same
// structure: w_real = w_int (both live on the same integer-unit scale).
void load_checkpoint_into_fp(const std::string &path, FpNetwork &net);

// Writes/loads pretrained conv kernels. The real-valued kernels quantize on
// load with the stored per-connection scale; the conv layer's integer
// threshold becomes round(theta / scale).
void save_conv_checkpoint(const std::string &path, const NetworkSpec &spec,
        const std::vector<std::vector<double>> &kernels,
        const std::vector<double> &scales);
void load_conv_checkpoint(const std::string &path, Network &net);

} // namespace emstdp
