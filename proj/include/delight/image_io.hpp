#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "delight/image.hpp"

namespace delight::imaging {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw bad_input_error("cannot open file: " + path);
    return f;
}

}  // namespace detail

// sRGB PNG, 8- or 16-bit. Grayscale files load as 1 channel, everything else
// as 3 (alpha is dropped; palette images are expanded).
inline RasterImage read_png(const std::string& path) {
    if (!std::filesystem::exists(path)) throw missing_artifact_error("missing image: " + path);
    auto f = detail::open_file(path, "rb");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, "libpng: read struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw bad_input_error("libpng: info struct allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw bad_input_error("corrupt PNG: " + path);
    }

    png_init_io(png, f.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_swap(png);  // wire format is big-endian
    png_read_update_info(png, info);

    bit_depth = png_get_bit_depth(png, info);
    const int channels = png_get_channels(png, info);
    require(channels == 1 || channels == 3, "read_png: unsupported channel count");

    const std::size_t stride = png_get_rowbytes(png, info);
    std::vector<unsigned char> raw(stride * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    std::vector<float> px(static_cast<std::size_t>(h) * w * channels);
    const float scale = bit_depth == 16 ? 1.0f / 65535.0f : 1.0f / 255.0f;
    for (png_uint_32 y = 0; y < h; ++y)
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                float v;
                if (bit_depth == 16) {
                    std::uint16_t u;
                    std::memcpy(&u, raw.data() + y * stride + (x * channels + c) * 2, 2);
                    v = u * scale;
                } else {
                    v = raw[y * stride + x * channels + c] * scale;
                }
                px[(static_cast<std::size_t>(c) * h + y) * w + x] = v;
            }
    return RasterImage::from_data(static_cast<int>(h), static_cast<int>(w), channels, Range::unit,
                                  std::move(px));
}

// Writes a unit-range image as sRGB PNG. bit_depth is 8 or 16.
inline void write_png(const std::string& path, const RasterImage& img, int bit_depth = 8) {
    require(bit_depth == 8 || bit_depth == 16, "write_png: bit depth must be 8 or 16");
    require(img.range() == Range::unit, "write_png: image must be unit range");
    auto f = detail::open_file(path, "wb");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, "libpng: write struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw bad_input_error("libpng: info struct allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw bad_input_error("PNG write failed: " + path);
    }

    png_init_io(png, f.get());
    const int color_type = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
    png_write_info(png, info);

    const int h = img.height(), w = img.width(), cn = img.channels();
    if (bit_depth == 16) {
        std::vector<std::uint16_t> row(static_cast<std::size_t>(w) * cn);
        std::vector<unsigned char> wire(row.size() * 2);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < cn; ++c) {
                    const float v = clamp01(img.at(c, y, x));
                    const auto u = static_cast<std::uint16_t>(std::lround(v * 65535.0f));
                    wire[(static_cast<std::size_t>(x) * cn + c) * 2] = static_cast<unsigned char>(u >> 8);
                    wire[(static_cast<std::size_t>(x) * cn + c) * 2 + 1] = static_cast<unsigned char>(u & 0xff);
                }
            png_write_row(png, wire.data());
        }
    } else {
        std::vector<unsigned char> row(static_cast<std::size_t>(w) * cn);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < cn; ++c)
                    row[static_cast<std::size_t>(x) * cn + c] =
                        static_cast<unsigned char>(std::lround(clamp01(img.at(c, y, x)) * 255.0f));
            png_write_row(png, row.data());
        }
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline void write_png(const std::string& path, const MaskImage& mask, int bit_depth = 8) {
    write_png(path, mask.as_image(), bit_depth);
}

// Raw float32 planar dump: little-endian header H, W, C as three u32 followed
// by C row-major planes of H*W float32. Lossless intermediate format.
inline void write_rawf(const std::string& path, const RasterImage& img) {
    auto f = detail::open_file(path, "wb");
    const std::uint32_t hdr[3] = {static_cast<std::uint32_t>(img.height()),
                                  static_cast<std::uint32_t>(img.width()),
                                  static_cast<std::uint32_t>(img.channels())};
    if (std::fwrite(hdr, sizeof(hdr), 1, f.get()) != 1 ||
        std::fwrite(img.data().data(), sizeof(float), img.size(), f.get()) != img.size())
        throw bad_input_error("rawf write failed: " + path);
}

inline RasterImage read_rawf(const std::string& path, Range range) {
    if (!std::filesystem::exists(path)) throw missing_artifact_error("missing rawf: " + path);
    auto f = detail::open_file(path, "rb");
    std::uint32_t hdr[3];
    if (std::fread(hdr, sizeof(hdr), 1, f.get()) != 1) throw bad_input_error("truncated rawf header: " + path);
    const std::size_t n = static_cast<std::size_t>(hdr[0]) * hdr[1] * hdr[2];
    require(hdr[0] >= 1 && hdr[1] >= 1 && (hdr[2] == 1 || hdr[2] == 3), "read_rawf: bad header");
    std::vector<float> data(n);
    if (std::fread(data.data(), sizeof(float), n, f.get()) != n)
        throw bad_input_error("truncated rawf payload: " + path);
    return RasterImage::from_data(static_cast<int>(hdr[0]), static_cast<int>(hdr[1]),
                                  static_cast<int>(hdr[2]), range, std::move(data));
}

}  // namespace delight::imaging
