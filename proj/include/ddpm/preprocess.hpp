#pragma once

// Image pipeline: resize -> center-crop -> grayscale -> normalize to [-1, 1],
// plus the inverse mapping used when writing samples out.
//
// Pipeline choices: bilinear resize; the pre-crop size is target/crop_fraction
// so the crop removes a border; BT.601 luma for RGB inputs; denormalize
// rounds half up.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "ddpm/core.hpp"
#include "ddpm/png_io.hpp"

namespace ddpm {

struct PipelineConfig {
    int target_h = 32;
    int target_w = 32;
    float crop_fraction = 0.9f;

    void validate() const {
        if (target_h < 8 || target_w < 8)
            throw ConfigError("pipeline: target size must be at least 8x8");
        if (!(crop_fraction > 0.0f) || crop_fraction > 1.0f)
            throw ConfigError("pipeline: crop_fraction must be in (0, 1]");
    }
};

namespace detail {

// Bilinear resize of one channel, float domain.
inline std::vector<float> resize_bilinear(const std::vector<float>& src, int sh, int sw, int dh,
                                          int dw) {
    std::vector<float> dst(std::size_t(dh) * dw);
    double sy = double(sh) / dh, sx = double(sw) / dw;
    for (int y = 0; y < dh; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = std::clamp(int(std::floor(fy)), 0, sh - 1);
        int y1 = std::min(y0 + 1, sh - 1);
        double wy = std::clamp(fy - y0, 0.0, 1.0);
        for (int x = 0; x < dw; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = std::clamp(int(std::floor(fx)), 0, sw - 1);
            int x1 = std::min(x0 + 1, sw - 1);
            double wx = std::clamp(fx - x0, 0.0, 1.0);
            double top = src[std::size_t(y0) * sw + x0] * (1 - wx) + src[std::size_t(y0) * sw + x1] * wx;
            double bot = src[std::size_t(y1) * sw + x0] * (1 - wx) + src[std::size_t(y1) * sw + x1] * wx;
            dst[std::size_t(y) * dw + x] = float(top * (1 - wy) + bot * wy);
        }
    }
    return dst;
}

}  // namespace detail

// One image -> (1, 1, target_h, target_w) batch in [-1, 1].
inline ImageBatch preprocess(const RawImage& img, const PipelineConfig& cfg) {
    cfg.validate();
    if (img.h < 1 || img.w < 1 || img.pixels.empty())
        throw DecodeError("preprocess: empty image" +
                          (img.source.empty() ? std::string() : " from " + img.source));
    if (img.channels != 1 && img.channels != 3)
        throw DecodeError("preprocess: unsupported channel count");

    // grayscale first (BT.601 luma); identity for single-channel input
    std::vector<float> gray(std::size_t(img.h) * img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            if (img.channels == 1) {
                gray[std::size_t(y) * img.w + x] = float(img.at(y, x));
            } else {
                gray[std::size_t(y) * img.w + x] =
                    float(0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2));
            }
        }

    int rh = std::max(cfg.target_h, int(std::lround(cfg.target_h / cfg.crop_fraction)));
    int rw = std::max(cfg.target_w, int(std::lround(cfg.target_w / cfg.crop_fraction)));
    std::vector<float> resized = detail::resize_bilinear(gray, img.h, img.w, rh, rw);

    int oy = (rh - cfg.target_h) / 2;
    int ox = (rw - cfg.target_w) / 2;
    ImageBatch out({1, 1, cfg.target_h, cfg.target_w});
    for (int y = 0; y < cfg.target_h; ++y)
        for (int x = 0; x < cfg.target_w; ++x) {
            float u = resized[std::size_t(oy + y) * rw + (ox + x)];
            out.at(0, 0, y, x) = std::clamp(u / 127.5f - 1.0f, -1.0f, 1.0f);
        }
    return out;
}

// Inverse normalization: u8 = clamp(floor((x+1)*127.5 + 0.5)), i.e. round
// half up, so 0.0 maps to 128.
inline std::vector<RawImage> denormalize(const ImageBatch& batch) {
    for (float v : batch.data)
        if (!(v >= -1.0f && v <= 1.0f))
            throw DomainError("denormalize: input outside [-1, 1]");
    std::vector<RawImage> out;
    out.reserve(std::size_t(batch.shape.n));
    for (int n = 0; n < batch.shape.n; ++n) {
        RawImage img;
        img.h = batch.shape.h;
        img.w = batch.shape.w;
        img.channels = 1;
        img.pixels.resize(std::size_t(img.h) * img.w);
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                double v = (double(batch.at(n, 0, y, x)) + 1.0) * 127.5;
                long u = long(std::floor(v + 0.5));
                img.pixels[std::size_t(y) * img.w + x] =
                    std::uint8_t(std::clamp(u, 0L, 255L));
            }
        out.push_back(std::move(img));
    }
    return out;
}

// Load and preprocess every readable PNG under `dir`, lexicographic filename
// order, skipping unreadable files with a warning. Fails only when nothing
// decodes.
inline ImageBatch load_corpus(const std::string& dir, const PipelineConfig& cfg, int limit = 0) {
    cfg.validate();
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw CorpusError("not a directory: " + dir);

    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());

    std::vector<ImageBatch> loaded;
    for (const auto& f : files) {
        if (limit > 0 && int(loaded.size()) >= limit) break;
        try {
            loaded.push_back(preprocess(read_png(f), cfg));
        } catch (const std::exception& e) {
            log_warn("load_corpus: skipping " + f + ": " + e.what());
        }
    }
    if (loaded.empty()) throw CorpusError("no readable images in " + dir);

    ImageBatch batch({int(loaded.size()), 1, cfg.target_h, cfg.target_w});
    std::size_t per = loaded[0].size();
    for (std::size_t i = 0; i < loaded.size(); ++i)
        std::copy(loaded[i].data.begin(), loaded[i].data.end(), batch.data.begin() + i * per);
    return batch;
}

}  // namespace ddpm
