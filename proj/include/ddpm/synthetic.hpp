#pragma once

// Synthetic shape corpus (filled circles and rectangles on dark canvases) so
// the training and evaluation paths can be exercised without any external
// dataset.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "ddpm/core.hpp"
#include "ddpm/preprocess.hpp"
#include "ddpm/png_io.hpp"
#include "ddpm/rng.hpp"

namespace ddpm {

// `count` images of size (h, w), values in [-1, 1], one bright filled shape
// per image at a random position.
inline ImageBatch make_shape_corpus(int count, int h, int w, std::uint64_t seed) {
    if (count < 1) throw ConfigError("make_shape_corpus: count must be >= 1");
    if (h < 8 || w < 8) throw ConfigError("make_shape_corpus: canvas must be at least 8x8");
    RngState rng(seed);
    ImageBatch batch({count, 1, h, w}, -1.0f);
    for (int n = 0; n < count; ++n) {
        bool circle = rng.next_int(0, 1) == 0;
        float fg = 0.4f + 0.6f * float(rng.next_unit());
        int r = rng.next_int(std::min(h, w) / 4, std::min(h, w) / 3);
        int cy = rng.next_int(r, h - 1 - r);
        int cx = rng.next_int(r, w - 1 - r);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                bool inside = circle
                                  ? (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r
                                  : std::abs(y - cy) <= r && std::abs(x - cx) <= r;
                if (inside) batch.at(n, 0, y, x) = fg;
            }
    }
    return batch;
}

// Write a corpus to disk as zero-padded PNGs (img_000.png, ...).
inline void write_corpus_pngs(const ImageBatch& batch, const std::string& dir) {
    std::filesystem::create_directories(dir);
    auto imgs = denormalize(batch);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%03zu.png", i);
        write_png_gray(dir + "/" + name, imgs[i]);
    }
}

}  // namespace ddpm
