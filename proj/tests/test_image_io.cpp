#include <png.h>

#include <catch2/catch_amalgamated.hpp>
#include <cstdio>

#include "testutil.hpp"
#include "texsynth/image_io.hpp"

using namespace texsynth;

namespace {

// Writes a PNG with explicit bit depth / color type, independent of
// save_image, to exercise the reader.
void write_raw_png(const std::string& path, int width, int height, int bit_depth,
                   int color_type, const std::vector<std::uint16_t>& samples) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    REQUIRE(f != nullptr);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    REQUIRE(setjmp(png_jmpbuf(png)) == 0);
    png_init_io(png, f);
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const int channels = png_get_channels(png, info);
    std::vector<unsigned char> row(static_cast<std::size_t>(width) * channels *
                                   (bit_depth / 8));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width * channels; ++x) {
            const std::uint16_t v = samples[static_cast<std::size_t>(y) * width * channels + x];
            if (bit_depth == 8) {
                row[x] = static_cast<unsigned char>(v);
            } else {
                row[x * 2] = static_cast<unsigned char>(v >> 8);
                row[x * 2 + 1] = static_cast<unsigned char>(v & 0xFF);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
}

}  // namespace

TEST_CASE("8-bit pixel values map linearly", "[io]") {
    testutil::TempDir dir("io8");
    write_raw_png(dir.file("px.png"), 1, 1, 8, PNG_COLOR_TYPE_RGB, {255, 0, 128});
    Image img = load_image(dir.file("px.png"));
    CHECK(img.at(0, 0, 0) == 1.0);
    CHECK(img.at(0, 0, 1) == 0.0);
    CHECK(img.at(0, 0, 2) == Catch::Approx(128.0 / 255.0));
}

TEST_CASE("1x1 black PNG loads as zeros", "[io]") {
    testutil::TempDir dir("ioblack");
    write_raw_png(dir.file("black.png"), 1, 1, 8, PNG_COLOR_TYPE_RGB, {0, 0, 0});
    Image img = load_image(dir.file("black.png"));
    CHECK(img.height() == 1);
    CHECK(img.width() == 1);
    for (double v : img.data()) CHECK(v == 0.0);
}

TEST_CASE("16-bit input scales by 65535 and RGBA drops alpha", "[io]") {
    testutil::TempDir dir("io16");
    write_raw_png(dir.file("deep.png"), 1, 1, 16, PNG_COLOR_TYPE_RGB, {65535, 0, 32768});
    Image img = load_image(dir.file("deep.png"));
    CHECK(img.at(0, 0, 0) == 1.0);
    CHECK(img.at(0, 0, 1) == 0.0);
    CHECK(img.at(0, 0, 2) == Catch::Approx(32768.0 / 65535.0));

    write_raw_png(dir.file("rgba.png"), 1, 1, 8, PNG_COLOR_TYPE_RGB_ALPHA, {10, 20, 30, 40});
    Image rgba = load_image(dir.file("rgba.png"));
    CHECK(rgba.at(0, 0, 0) == Catch::Approx(10.0 / 255.0));
    CHECK(rgba.at(0, 0, 2) == Catch::Approx(30.0 / 255.0));
}

TEST_CASE("grayscale and missing files are rejected", "[io]") {
    testutil::TempDir dir("iogray");
    write_raw_png(dir.file("gray.png"), 2, 2, 8, PNG_COLOR_TYPE_GRAY, {1, 2, 3, 4});
    CHECK_THROWS_AS(load_image(dir.file("gray.png")), IoError);
    CHECK_THROWS_AS(load_image(dir.file("nope.png")), IoError);

    // Not a PNG at all.
    std::ofstream junk(dir.file("junk.png"), std::ios::binary);
    junk << "definitely not a png";
    junk.close();
    CHECK_THROWS_AS(load_image(dir.file("junk.png")), IoError);
}

TEST_CASE("save clamps out-of-range values", "[io]") {
    testutil::TempDir dir("ioclamp");
    Image img(1, 1, {1.2, -0.1, 0.5});
    save_image(img, dir.file("clamp.png"));
    Image back = load_image(dir.file("clamp.png"));
    CHECK(back.at(0, 0, 0) == 1.0);
    CHECK(back.at(0, 0, 1) == 0.0);
    CHECK(back.at(0, 0, 2) == Catch::Approx(128.0 / 255.0));  // 0.5 stored as 128
}

TEST_CASE("round trip stays within the quantization bound", "[io]") {
    testutil::TempDir dir("iorr");
    Rng rng(31);
    Image img = testutil::random_image(13, 9, rng);
    save_image(img, dir.file("rt.png"));
    Image back = load_image(dir.file("rt.png"));
    CHECK(max_abs_diff(img, back) <= 1.0 / 510.0);
}

TEST_CASE("round trip is exact on the 8-bit grid", "[io]") {
    testutil::TempDir dir("iogrid");
    Rng rng(37);
    Image img(7, 5);
    for (double& v : img.data()) v = static_cast<double>(rng.below(256)) / 255.0;
    save_image(img, dir.file("grid.png"));
    Image back = load_image(dir.file("grid.png"));
    CHECK(max_abs_diff(img, back) == 0.0);
}

TEST_CASE("unwritable path raises IoError", "[io]") {
    Image img(1, 1);
    CHECK_THROWS_AS(save_image(img, "/nonexistent_dir_xyz/out.png"), IoError);
}

TEST_CASE("patch cache round trip", "[io]") {
    testutil::TempDir dir("iocache");
    Rng rng(41);
    std::vector<Image> patches;
    for (int i = 0; i < 5; ++i) {
        Image p(4, 4);
        // Values on the float32 grid survive the cache exactly.
        for (double& v : p.data()) v = static_cast<double>(static_cast<float>(rng.uniform()));
        patches.push_back(std::move(p));
    }
    save_patches(patches, dir.file("set.txp"));
    auto back = load_patches(dir.file("set.txp"));
    REQUIRE(back.size() == patches.size());
    for (std::size_t i = 0; i < patches.size(); ++i)
        CHECK(max_abs_diff(patches[i], back[i]) == 0.0);

    // Truncated cache is a structured error.
    auto bytes = testutil::read_bytes(dir.file("set.txp"));
    std::ofstream cut(dir.file("cut.txp"), std::ios::binary);
    cut.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    cut.close();
    CHECK_THROWS_AS(load_patches(dir.file("cut.txp")), IoError);
}

TEST_CASE("patch cache format layout", "[io]") {
    testutil::TempDir dir("iofmt");
    Image p(1, 1, {0.25, 0.5, 0.75});
    save_patches({p}, dir.file("one.txp"));
    auto bytes = testutil::read_bytes(dir.file("one.txp"));
    REQUIRE(bytes.size() == 8 + 4 + 4 + 3 * 4);
    CHECK(std::string(bytes.data(), 8) == "TXPATCH1");
    // count = 1, size = 1, little-endian
    CHECK(static_cast<unsigned char>(bytes[8]) == 1);
    CHECK(static_cast<unsigned char>(bytes[12]) == 1);
    float r;
    std::memcpy(&r, bytes.data() + 16, 4);
    CHECK(r == 0.25f);
}
