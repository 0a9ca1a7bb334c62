#include "emstdp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "emstdp/rng.hpp"

namespace emstdp {

namespace {

std::uint32_t read_be32(std::istream &in, const std::string &path, std::size_t offset)
{
    unsigned char b[4];
    in.read(reinterpret_cast<char *>(b), 4);
    if (!in) {
        throw std::runtime_error(path + ": truncated IDX header at byte offset "
                + std::to_string(offset));
    }
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16)
            | (static_cast<std::uint32_t>(b[2]) << 8) | b[3];
}

void write_be32(std::ostream &out, std::uint32_t v)
{
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
            static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 8),
            static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char *>(b), 4);
}

} // namespace

IdxTensor load_idx(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open IDX file: " + path);
    }
    IdxTensor t;
    t.magic = read_be32(in, path, 0);
    std::size_t ndims = 0;
    if (t.magic == 0x00000801u) {
        ndims = 1;
    } else if (t.magic == 0x00000803u) {
        ndims = 3;
    } else {
        std::ostringstream os;
        os << path << ": bad IDX magic 0x" << std::hex << t.magic
           << " (expected 0x801 labels or 0x803 images)";
        throw std::runtime_error(os.str());
    }
    std::size_t total = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        const std::uint32_t dim = read_be32(in, path, 4 + 4 * i);
        if (dim > 0x10000000u) {
            throw std::runtime_error(path + ": IDX dimension overflow");
        }
        t.dims.push_back(static_cast<std::int32_t>(dim));
        total *= dim;
    }
    t.data.resize(total);
    in.read(reinterpret_cast<char *>(t.data.data()), static_cast<std::streamsize>(total));
    if (static_cast<std::size_t>(in.gcount()) != total) {
        const std::size_t offset = 4 + 4 * ndims + static_cast<std::size_t>(std::max<std::streamsize>(in.gcount(), 0));
        throw std::runtime_error(
                path + ": truncated IDX payload at byte offset " + std::to_string(offset));
    }
    return t;
}

void write_idx_labels(const std::string &path, const std::vector<std::uint8_t> &labels)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write IDX file: " + path);
    }
    write_be32(out, 0x00000801u);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char *>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

void write_idx_images(const std::string &path, const std::vector<std::uint8_t> &pixels,
        std::int32_t count, std::int32_t rows, std::int32_t cols)
{
    if (pixels.size() != static_cast<std::size_t>(count) * rows * cols) {
        throw std::invalid_argument("write_idx_images: pixel buffer size mismatch");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write IDX file: " + path);
    }
    write_be32(out, 0x00000803u);
    write_be32(out, static_cast<std::uint32_t>(count));
    write_be32(out, static_cast<std::uint32_t>(rows));
    write_be32(out, static_cast<std::uint32_t>(cols));
    out.write(reinterpret_cast<const char *>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

Dataset load_idx_dataset(const std::string &images_path, const std::string &labels_path)
{
    IdxTensor images = load_idx(images_path);
    if (!images.is_images()) {
        throw std::runtime_error(images_path + ": expected an IDX image file (magic 0x803)");
    }
    IdxTensor labels = load_idx(labels_path);
    if (!labels.is_labels()) {
        throw std::runtime_error(labels_path + ": expected an IDX label file (magic 0x801)");
    }
    if (images.dims[0] != labels.dims[0]) {
        throw std::runtime_error("image/label counts differ between "
                + images_path + " and " + labels_path);
    }
    Dataset d;
    d.rows = images.dims[1];
    d.cols = images.dims[2];
    d.pixels = std::move(images.data);
    d.labels.reserve(labels.data.size());
    for (const std::uint8_t l : labels.data) {
        d.labels.push_back(l);
    }
    return d;
}

Dataset load_csv_dataset(const std::string &path, std::int32_t rows, std::int32_t cols)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open CSV file: " + path);
    }
    Dataset d;
    d.rows = rows;
    d.cols = cols;
    const std::size_t npix = static_cast<std::size_t>(rows) * cols;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        if (!std::getline(ss, field, ',')) {
            throw std::runtime_error(path + ": malformed CSV line " + std::to_string(lineno));
        }
        d.labels.push_back(std::stoi(field));
        std::size_t count = 0;
        while (std::getline(ss, field, ',')) {
            const int v = std::stoi(field);
            if (v < 0 || v > 255) {
                throw std::runtime_error(path + ": pixel out of range on line "
                        + std::to_string(lineno));
            }
            d.pixels.push_back(static_cast<std::uint8_t>(v));
            ++count;
        }
        if (count != npix) {
            throw std::runtime_error(path + ": expected " + std::to_string(npix)
                    + " pixels on line " + std::to_string(lineno) + ", got "
                    + std::to_string(count));
        }
    }
    return d;
}

std::int32_t quantize_byte(std::uint8_t raw, std::int32_t phase_len)
{
    if (phase_len < 1) {
        throw std::invalid_argument("phase length must be at least 1");
    }
    return static_cast<std::int32_t>((static_cast<std::int64_t>(raw) * phase_len) / 256);
}

SamplePresentation quantize_input(const std::uint8_t *raw, std::size_t n, std::int32_t phase_len)
{
    SamplePresentation s;
    s.input.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.input[i] = quantize_byte(raw[i], phase_len);
    }
    return s;
}

SamplePresentation dataset_sample(const Dataset &data, std::size_t index,
        std::int32_t phase_len, bool with_label)
{
    if (index >= data.size()) {
        throw std::out_of_range("dataset sample index out of range");
    }
    SamplePresentation s = quantize_input(data.image(index),
            static_cast<std::size_t>(data.rows) * data.cols, phase_len);
    if (with_label) {
        s.label = data.labels[index];
    }
    return s;
}

// ---------------------------------------------------------------------------
// Synthetic digit rendering

namespace {

struct Pt {
    double x;
    double y;
};

using Stroke = std::vector<Pt>;

void arc(Stroke &s, double cx, double cy, double rx, double ry, double deg0, double deg1)
{
    const int steps = 48;
    for (int i = 0; i <= steps; ++i) {
        const double a = (deg0 + (deg1 - deg0) * i / steps) * 3.14159265358979323846 / 180.0;
        s.push_back(Pt{cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
}

Stroke line(Pt a, Pt b)
{
    return Stroke{a, b};
}

// Digit skeletons on a unit design box, y pointing down.
std::vector<Stroke> digit_strokes(int digit)
{
    std::vector<Stroke> s;
    Stroke a;
    switch (digit) {
    case 0:
        arc(a, 0.50, 0.50, 0.27, 0.36, 0, 360);
        s.push_back(a);
        break;
    case 1:
        s.push_back(line({0.33, 0.30}, {0.52, 0.12}));
        s.push_back(line({0.52, 0.12}, {0.52, 0.88}));
        break;
    case 2:
        arc(a, 0.49, 0.30, 0.25, 0.19, 160, 380);
        s.push_back(a);
        s.push_back(line({0.71, 0.43}, {0.24, 0.84}));
        s.push_back(line({0.24, 0.84}, {0.79, 0.84}));
        break;
    case 3:
        arc(a, 0.47, 0.30, 0.22, 0.18, 170, 440);
        s.push_back(a);
        a.clear();
        arc(a, 0.46, 0.66, 0.25, 0.22, 280, 520);
        s.push_back(a);
        break;
    case 4:
        s.push_back(line({0.60, 0.10}, {0.22, 0.58}));
        s.push_back(line({0.22, 0.58}, {0.80, 0.58}));
        s.push_back(line({0.63, 0.30}, {0.63, 0.90}));
        break;
    case 5:
        s.push_back(line({0.72, 0.12}, {0.32, 0.12}));
        s.push_back(line({0.32, 0.12}, {0.30, 0.45}));
        arc(a, 0.48, 0.64, 0.25, 0.23, 190, 470);
        s.push_back(a);
        break;
    case 6:
        s.push_back(Stroke{{0.66, 0.12}, {0.48, 0.26}, {0.34, 0.45}, {0.28, 0.62}});
        arc(a, 0.50, 0.66, 0.22, 0.20, 0, 360);
        s.push_back(a);
        break;
    case 7:
        s.push_back(line({0.24, 0.13}, {0.78, 0.13}));
        s.push_back(line({0.78, 0.13}, {0.40, 0.88}));
        break;
    case 8:
        arc(a, 0.50, 0.30, 0.19, 0.17, 0, 360);
        s.push_back(a);
        a.clear();
        arc(a, 0.50, 0.67, 0.23, 0.20, 0, 360);
        s.push_back(a);
        break;
    case 9:
        arc(a, 0.50, 0.34, 0.21, 0.19, 0, 360);
        s.push_back(a);
        s.push_back(Stroke{{0.71, 0.36}, {0.69, 0.60}, {0.62, 0.88}});
        break;
    default:
        throw std::invalid_argument("digit must lie in [0, 9]");
    }
    return s;
}

struct DistortParams {
    double rot;
    double sx, sy;
    double shear;
    double tx, ty;
    double width;
    double brightness;
};

void render_digit(std::uint8_t *img28, int digit, std::uint64_t seed, std::uint64_t index)
{
    auto u = [&](int k) { return rng::u01(seed, rng::Stream::dataset, index * 64 + k); };

    DistortParams p;
    p.rot = (u(0) * 2.0 - 1.0) * 0.26;  // ~15 degrees
    p.sx = 0.82 + u(1) * 0.33;
    p.sy = 0.82 + u(2) * 0.33;
    p.shear = (u(3) * 2.0 - 1.0) * 0.25;
    p.tx = (u(4) * 2.0 - 1.0) * 2.5;
    p.ty = (u(5) * 2.0 - 1.0) * 2.5;
    p.width = 1.0 + u(6) * 1.5;
    p.brightness = 165.0 + u(7) * 90.0;

    const double cr = std::cos(p.rot);
    const double sr = std::sin(p.rot);

    double canvas[28][28] = {};
    const auto strokes = digit_strokes(digit);
    int knob = 8;
    for (const Stroke &stroke : strokes) {
        // Per-stroke jitter gives intra-class shape variety.
        const double jrot = (u(knob++) * 2.0 - 1.0) * 0.10;
        const double jx = (u(knob++) * 2.0 - 1.0) * 0.035;
        const double jy = (u(knob++) * 2.0 - 1.0) * 0.035;
        const double jc = std::cos(jrot);
        const double js = std::sin(jrot);

        auto to_pixel = [&](Pt q) {
            // stroke jitter about the design center
            double x = q.x - 0.5;
            double y = q.y - 0.5;
            const double xs = jc * x - js * y + jx;
            const double ys = js * x + jc * y + jy;
            // global shear/scale/rotation about the image center
            x = p.sx * (xs + p.shear * ys);
            y = p.sy * ys;
            const double xr = cr * x - sr * y;
            const double yr = sr * x + cr * y;
            return Pt{14.0 + xr * 22.0 + p.tx, 14.0 + yr * 22.0 + p.ty};
        };

        for (std::size_t i = 0; i + 1 < stroke.size(); ++i) {
            const Pt a = to_pixel(stroke[i]);
            const Pt b = to_pixel(stroke[i + 1]);
            const double len = std::hypot(b.x - a.x, b.y - a.y);
            const int steps = std::max(1, static_cast<int>(len / 0.3));
            for (int t = 0; t <= steps; ++t) {
                const double px = a.x + (b.x - a.x) * t / steps;
                const double py = a.y + (b.y - a.y) * t / steps;
                const int x0 = std::max(0, static_cast<int>(px - p.width - 1));
                const int x1 = std::min(27, static_cast<int>(px + p.width + 1));
                const int y0 = std::max(0, static_cast<int>(py - p.width - 1));
                const int y1 = std::min(27, static_cast<int>(py + p.width + 1));
                for (int y = y0; y <= y1; ++y) {
                    for (int x = x0; x <= x1; ++x) {
                        const double d = std::hypot(x - px, y - py);
                        const double v = std::clamp(p.width * 0.5 + 0.6 - d, 0.0, 1.0);
                        canvas[y][x] = std::max(canvas[y][x], v);
                    }
                }
            }
        }
    }

    // Light blur knocks off the hard stroke edges.
    double blurred[28][28];
    for (int y = 0; y < 28; ++y) {
        for (int x = 0; x < 28; ++x) {
            double acc = canvas[y][x] * 4.0;
            double wsum = 4.0;
            if (y > 0) { acc += canvas[y - 1][x]; wsum += 1.0; }
            if (y < 27) { acc += canvas[y + 1][x]; wsum += 1.0; }
            if (x > 0) { acc += canvas[y][x - 1]; wsum += 1.0; }
            if (x < 27) { acc += canvas[y][x + 1]; wsum += 1.0; }
            blurred[y][x] = acc / wsum;
        }
    }

    for (int y = 0; y < 28; ++y) {
        for (int x = 0; x < 28; ++x) {
            double v = blurred[y][x] * p.brightness;
            img28[y * 28 + x] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }

    // Speckle noise.
    const int specks = 6 + static_cast<int>(u(60) * 10);
    for (int i = 0; i < specks; ++i) {
        const int idx = static_cast<int>(rng::uniform_int(seed, rng::Stream::dataset,
                (index * 64 + 40) * 131 + i, 0, 783));
        const int add = static_cast<int>(rng::uniform_int(seed, rng::Stream::dataset,
                (index * 64 + 41) * 131 + i, 5, 45));
        img28[idx] = static_cast<std::uint8_t>(std::min(255, img28[idx] + add));
    }
}

} // namespace

Dataset generate_synthetic_digits(std::uint64_t seed, std::size_t count)
{
    Dataset d;
    d.rows = 28;
    d.cols = 28;
    d.pixels.resize(count * 784);
    d.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int digit = static_cast<int>(
                rng::uniform_int(seed, rng::Stream::dataset, 0x100000000ULL + i, 0, 9));
        d.labels[i] = digit;
        render_digit(d.pixels.data() + i * 784, digit, seed, i);
    }
    return d;
}

Dataset generate_synthetic_digits_balanced(std::uint64_t seed, std::size_t per_class,
        std::int32_t classes)
{
    if (classes < 1 || classes > 10) {
        throw std::invalid_argument("synthetic digits support 1..10 classes");
    }
    Dataset d;
    d.rows = 28;
    d.cols = 28;
    const std::size_t count = per_class * static_cast<std::size_t>(classes);
    d.pixels.resize(count * 784);
    d.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const int digit = static_cast<int>(i / per_class);
        d.labels[i] = digit;
        render_digit(d.pixels.data() + i * 784, digit, seed, 0x200000000ULL + i);
    }
    return d;
}

} // namespace emstdp
