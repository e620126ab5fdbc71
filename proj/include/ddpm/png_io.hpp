#pragma once

// Thin libpng wrappers: 8-bit grayscale/RGB reads, grayscale writes, and
// grid composition for sample sheets.

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "ddpm/core.hpp"

namespace ddpm {

// Decoded image, 8-bit, row-major, `channels` in {1, 3}.
struct RawImage {
    int h = 0, w = 0, channels = 1;
    std::vector<std::uint8_t> pixels;
    std::string source;

    std::uint8_t at(int y, int x, int c = 0) const {
        return pixels[(std::size_t(y) * w + x) * channels + c];
    }
};

inline RawImage read_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw DecodeError("cannot open " + path);
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> guard(fp, std::fclose);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp) != 8 || png_sig_cmp(header, 0, 8))
        throw DecodeError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("libpng init failed for " + path);
    }
    std::vector<std::uint8_t> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("corrupt PNG: " + path);
    }
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    int w = int(png_get_image_width(png, info));
    int h = int(png_get_image_height(png, info));
    int ch = int(png_get_channels(png, info));
    if (ch != 1 && ch != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("unsupported channel count in " + path);
    }
    pixels.resize(std::size_t(h) * w * ch);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = pixels.data() + std::size_t(y) * w * ch;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    RawImage img;
    img.h = h;
    img.w = w;
    img.channels = ch;
    img.pixels = std::move(pixels);
    img.source = path;
    return img;
}

inline void write_png_gray(const std::string& path, int h, int w, const std::uint8_t* pixels) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot write " + path);
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> guard(fp, std::fclose);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = const_cast<png_bytep>(pixels + std::size_t(y) * w);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline void write_png_gray(const std::string& path, const RawImage& img) {
    if (img.channels != 1) throw IoError("write_png_gray expects a single-channel image");
    write_png_gray(path, img.h, img.w, img.pixels.data());
}

// Tile equally sized grayscale images into a grid, ceil(sqrt(count)) columns,
// 1px white separators. `rows_override` > 0 forces a row count with
// count/rows images per row (for comparison sheets).
inline RawImage compose_grid(const std::vector<RawImage>& tiles, int rows_override = 0) {
    if (tiles.empty()) throw IoError("compose_grid: no images");
    int th = tiles[0].h, tw = tiles[0].w;
    for (const auto& t : tiles)
        if (t.h != th || t.w != tw || t.channels != 1)
            throw IoError("compose_grid: tiles must be equally sized grayscale images");
    int count = int(tiles.size());
    int cols, rows;
    if (rows_override > 0) {
        rows = rows_override;
        cols = (count + rows - 1) / rows;
    } else {
        cols = int(std::ceil(std::sqrt(double(count))));
        rows = (count + cols - 1) / cols;
    }
    RawImage grid;
    grid.h = rows * th + (rows - 1);
    grid.w = cols * tw + (cols - 1);
    grid.channels = 1;
    grid.pixels.assign(std::size_t(grid.h) * grid.w, 255);
    for (int i = 0; i < count; ++i) {
        int r = i / cols, c = i % cols;
        int oy = r * (th + 1), ox = c * (tw + 1);
        for (int y = 0; y < th; ++y)
            for (int x = 0; x < tw; ++x)
                grid.pixels[std::size_t(oy + y) * grid.w + (ox + x)] = tiles[i].at(y, x);
    }
    return grid;
}

}  // namespace ddpm
