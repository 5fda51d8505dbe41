#pragma once

// PNG raster I/O (libpng) and the binary patch-set cache.
//
// Reading accepts 8- and 16-bit RGB/RGBA (palette images are expanded to
// RGB); grayscale inputs are rejected because the pipeline needs three
// channels. Channel values map to v / (2^bitdepth - 1). Writing always emits
// 8-bit RGB after clamping to [0,1].
//
// Patch cache layout (little-endian): magic "TXPATCH1", u32 patch count,
// u32 patch size, then count * size * size * 3 float32 values, row-major
// with R,G,B interleaved per pixel.

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "texsynth/core.hpp"

namespace texsynth {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void put_u32le(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    if (std::fwrite(b, 1, 4, f) != 4) throw IoError("write failed");
}

inline std::uint32_t get_u32le(std::FILE* f, const std::string& path) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw IoError("truncated file: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32le(std::FILE* f, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32le(f, u);
}

inline float get_f32le(std::FILE* f, const std::string& path) {
    const std::uint32_t u = get_u32le(f, path);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace detail

inline Image load_image(const std::string& path) {
    detail::FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open file: " + path);

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw IoError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng init failed");
    }
    // libpng reports errors via longjmp; convert to exceptions at this frame.
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG: " + path);
    }

    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("grayscale PNG not supported (3 channels required): " + path);
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);  // alpha discarded
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const int out_depth = png_get_bit_depth(png, info);
    const png_size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<unsigned char> raster(static_cast<std::size_t>(rowbytes) * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = raster.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(static_cast<int>(height), static_cast<int>(width));
    if (out_depth == 8) {
        for (png_uint_32 y = 0; y < height; ++y) {
            const unsigned char* row = raster.data() + y * rowbytes;
            for (png_uint_32 x = 0; x < width; ++x)
                for (int c = 0; c < 3; ++c)
                    img.at(y, x, c) = row[x * 3 + c] / 255.0;
        }
    } else if (out_depth == 16) {
        // PNG stores 16-bit samples big-endian.
        for (png_uint_32 y = 0; y < height; ++y) {
            const unsigned char* row = raster.data() + y * rowbytes;
            for (png_uint_32 x = 0; x < width; ++x)
                for (int c = 0; c < 3; ++c) {
                    const unsigned hi = row[(x * 3 + c) * 2];
                    const unsigned lo = row[(x * 3 + c) * 2 + 1];
                    img.at(y, x, c) = ((hi << 8) | lo) / 65535.0;
                }
        }
    } else {
        throw IoError("unsupported PNG bit depth: " + path);
    }
    return img;
}

inline void save_image(const Image& img, const std::string& path) {
    detail::FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot write file: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path);
    }

    png_init_io(png, file.get());
    png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * 3);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c)
                row[x * 3 + c] = quantize8(img.at(y, x, c));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline void save_patches(const std::vector<Image>& patches, const std::string& path) {
    if (patches.empty())
        throw std::invalid_argument("save_patches: empty patch set");
    const int size = patches.front().height();
    for (const Image& p : patches)
        if (p.height() != size || p.width() != size)
            throw std::invalid_argument("save_patches: patches must be square and equally sized");

    detail::FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot write file: " + path);
    if (std::fwrite("TXPATCH1", 1, 8, file.get()) != 8) throw IoError("write failed: " + path);
    detail::put_u32le(file.get(), static_cast<std::uint32_t>(patches.size()));
    detail::put_u32le(file.get(), static_cast<std::uint32_t>(size));
    for (const Image& p : patches)
        for (double v : p.data())
            detail::put_f32le(file.get(), static_cast<float>(v));
}

inline std::vector<Image> load_patches(const std::string& path) {
    detail::FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open file: " + path);
    char magic[8];
    if (std::fread(magic, 1, 8, file.get()) != 8 || std::memcmp(magic, "TXPATCH1", 8) != 0)
        throw IoError("bad patch cache magic: " + path);
    const std::uint32_t count = detail::get_u32le(file.get(), path);
    const std::uint32_t size = detail::get_u32le(file.get(), path);
    if (count == 0 || size == 0) throw IoError("empty patch cache: " + path);
    std::vector<Image> patches;
    patches.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::vector<double> data(static_cast<std::size_t>(size) * size * 3);
        for (double& v : data) v = detail::get_f32le(file.get(), path);
        patches.emplace_back(static_cast<int>(size), static_cast<int>(size), std::move(data));
    }
    return patches;
}

}  // namespace texsynth
