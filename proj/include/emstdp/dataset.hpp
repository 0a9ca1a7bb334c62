#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emstdp/network.hpp"

namespace emstdp {

// A raw IDX tensor: dims from the big-endian header, unsigned byte payload.
struct IdxTensor {
    std::uint32_t magic = 0;
    std::vector<std::int32_t> dims;
    std::vector<std::uint8_t> data;

    bool is_labels() const { return magic == 0x00000801u; }
    bool is_images() const { return magic == 0x00000803u; }
};

// Parses the IDX container bit-exactly. Accepts label files (magic
// 0x00000801, one dimension) and image files (magic 0x00000803, three
// dimensions). Truncation errors report the byte offset.
IdxTensor load_idx(const std::string &path);

void write_idx_labels(const std::string &path, const std::vector<std::uint8_t> &labels);
void write_idx_images(const std::string &path, const std::vector<std::uint8_t> &pixels,
        std::int32_t count, std::int32_t rows, std::int32_t cols);

struct Dataset {
    std::int32_t rows = 0;
    std::int32_t cols = 0;
    std::vector<std::uint8_t> pixels; // count * rows * cols
    std::vector<std::int32_t> labels;

    std::size_t size() const { return labels.size(); }
    const std::uint8_t *image(std::size_t i) const
    {
        return pixels.data() + i * static_cast<std::size_t>(rows) * cols;
    }
};

Dataset load_idx_dataset(const std::string &images_path, const std::string &labels_path);

// CSV fallback: one sample per line, "label,p0,p1,...,pN" with pixel values
// in 0..255. Image shape must be supplied since CSV carries none.
Dataset load_csv_dataset(const std::string &path, std::int32_t rows, std::int32_t cols);

// Rate quantization of a raw byte: floor(x * T / 256), components in [0, T].
std::int32_t quantize_byte(std::uint8_t raw, std::int32_t phase_len);

SamplePresentation quantize_input(const std::uint8_t *raw, std::size_t n,
        std::int32_t phase_len);
SamplePresentation dataset_sample(const Dataset &data, std::size_t index,
        std::int32_t phase_len, bool with_label = true);

// Procedurally rendered 28x28 digit images (strokes + random affine
// distortion, stroke-width, brightness jitter and speckle noise). Fully
// deterministic in (seed, index); serves as an offline stand-in wherever a
// real IDX dataset is not available.
Dataset generate_synthetic_digits(std::uint64_t seed, std::size_t count);

// Class-balanced variant: count samples per class in [0, classes).
Dataset generate_synthetic_digits_balanced(std::uint64_t seed, std::size_t per_class,
        std::int32_t classes);

} // namespace emstdp
