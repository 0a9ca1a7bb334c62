#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "emstdp/dataset.hpp"

using namespace emstdp;

namespace {

std::string temp_path(const char *name)
{
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("IDX round trip preserves bytes and dimensions")
{
    const std::string img = temp_path("emstdp_test_images.idx");
    const std::string lab = temp_path("emstdp_test_labels.idx");
    std::vector<std::uint8_t> pixels(2 * 4 * 3);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        pixels[i] = static_cast<std::uint8_t>(i * 7);
    }
    write_idx_images(img, pixels, 2, 4, 3);
    write_idx_labels(lab, {5, 9});

    const IdxTensor t = load_idx(img);
    CHECK(t.is_images());
    REQUIRE(t.dims.size() == 3);
    CHECK(t.dims[0] == 2);
    CHECK(t.dims[1] == 4);
    CHECK(t.dims[2] == 3);
    CHECK(t.data == pixels);

    const Dataset d = load_idx_dataset(img, lab);
    CHECK(d.size() == 2);
    CHECK(d.labels[1] == 9);
    CHECK(d.image(1)[0] == pixels[12]);

    std::remove(img.c_str());
    std::remove(lab.c_str());
}

TEST_CASE("label file used as images is rejected")
{
    const std::string lab = temp_path("emstdp_test_labels2.idx");
    write_idx_labels(lab, {1, 2, 3});
    CHECK_THROWS_WITH_AS(static_cast<void>(load_idx_dataset(lab, lab)),
            doctest::Contains("expected an IDX image file"), std::runtime_error);
    std::remove(lab.c_str());
}

TEST_CASE("bad magic and truncation produce descriptive errors")
{
    const std::string bad = temp_path("emstdp_test_bad.idx");
    {
        std::ofstream out(bad, std::ios::binary);
        const char junk[] = {0, 0, 0x09, 0x01, 0, 0, 0, 2, 1};
        out.write(junk, sizeof junk);
    }
    CHECK_THROWS_WITH_AS(static_cast<void>(load_idx(bad)), doctest::Contains("bad IDX magic"),
            std::runtime_error);
    {
        std::ofstream out(bad, std::ios::binary);
        // labels magic, claims 100 entries, provides 2
        const unsigned char junk[] = {0, 0, 0x08, 0x01, 0, 0, 0, 100, 7, 7};
        out.write(reinterpret_cast<const char *>(junk), sizeof junk);
    }
    CHECK_THROWS_WITH_AS(static_cast<void>(load_idx(bad)), doctest::Contains("byte offset"),
            std::runtime_error);
    std::remove(bad.c_str());
}

TEST_CASE("quantize_byte maps 0..255 onto 0..T")
{
    CHECK(quantize_byte(255, 64) == 63);
    CHECK(quantize_byte(0, 64) == 0);
    CHECK(quantize_byte(128, 64) == 32);
    CHECK(quantize_byte(4, 64) == 1);
    CHECK(quantize_byte(3, 64) == 0);
    for (int v = 0; v < 256; ++v) {
        const std::int32_t q = quantize_byte(static_cast<std::uint8_t>(v), 64);
        CHECK(q >= 0);
        CHECK(q <= 64);
    }
}

TEST_CASE("CSV fallback parses label,pixels rows")
{
    const std::string csv = temp_path("emstdp_test.csv");
    {
        std::ofstream out(csv);
        out << "# comment line\n";
        out << "3,0,128,255,64\n";
        out << "7,1,2,3,4\n";
    }
    const Dataset d = load_csv_dataset(csv, 2, 2);
    CHECK(d.size() == 2);
    CHECK(d.labels[0] == 3);
    CHECK(d.labels[1] == 7);
    CHECK(d.image(0)[1] == 128);
    std::remove(csv.c_str());
}

TEST_CASE("CSV with a short row is rejected")
{
    const std::string csv = temp_path("emstdp_test_short.csv");
    {
        std::ofstream out(csv);
        out << "3,0,128\n";
    }
    CHECK_THROWS_AS(static_cast<void>(load_csv_dataset(csv, 2, 2)), std::runtime_error);
    std::remove(csv.c_str());
}

TEST_CASE("synthetic digits are deterministic, labeled and non-trivial")
{
    const Dataset a = generate_synthetic_digits(11, 64);
    const Dataset b = generate_synthetic_digits(11, 64);
    CHECK(a.pixels == b.pixels);
    CHECK(a.labels == b.labels);
    CHECK(a.rows == 28);

    const Dataset c = generate_synthetic_digits(12, 64);
    CHECK(a.pixels != c.pixels);

    // images are neither empty nor saturated
    for (std::size_t i = 0; i < a.size(); ++i) {
        std::int64_t sum = 0;
        for (std::size_t p = 0; p < 784; ++p) {
            sum += a.image(i)[p];
        }
        CHECK(sum > 2000);
        CHECK(sum < 784 * 200);
    }

    // same class, different index -> different image (distortion works)
    const Dataset bal = generate_synthetic_digits_balanced(13, 3, 10);
    CHECK(bal.size() == 30);
    for (int cls = 0; cls < 10; ++cls) {
        CHECK(bal.labels[cls * 3] == cls);
        bool differ = false;
        for (std::size_t p = 0; p < 784; ++p) {
            if (bal.image(cls * 3)[p] != bal.image(cls * 3 + 1)[p]) {
                differ = true;
                break;
            }
        }
        CHECK(differ);
    }
}

TEST_CASE("dataset_sample quantizes and carries the label")
{
    Dataset d;
    d.rows = 1;
    d.cols = 2;
    d.pixels = {255, 0};
    d.labels = {4};
    const SamplePresentation s = dataset_sample(d, 0, 64, true);
    CHECK(s.input[0] == 63);
    CHECK(s.input[1] == 0);
    CHECK(s.label.value() == 4);
    const SamplePresentation noL = dataset_sample(d, 0, 64, false);
    CHECK_FALSE(noL.label.has_value());
}
