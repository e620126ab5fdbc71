#pragma once

// Corpus-level MSE and the three-component structural similarity index
// (luminance, contrast, structure), computed globally over each image pair
// in the 8-bit [0, 255] pixel domain.

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddpm/core.hpp"
#include "ddpm/preprocess.hpp"
#include "ddpm/rng.hpp"

namespace ddpm {

// mu = (1/N) sum x_i
inline double luminance_mean(const std::vector<float>& img) {
    if (img.empty()) throw ShapeError("luminance_mean: empty image");
    double acc = 0.0;
    for (float v : img) acc += v;
    return acc / double(img.size());
}

// Sample standard deviation, Bessel-corrected (N-1 divisor).
inline double contrast_std(const std::vector<float>& img) {
    if (img.size() < 2) throw ShapeError("contrast_std: need at least 2 pixels");
    double mu = luminance_mean(img);
    double acc = 0.0;
    for (float v : img) {
        double d = double(v) - mu;
        acc += d * d;
    }
    return std::sqrt(acc / double(img.size() - 1));
}

struct SsimComponents {
    double luminance = 0.0;
    double contrast = 0.0;
    double structure = 0.0;
    double ssim = 0.0;
    double alpha = 1.0, beta = 1.0, gamma = 1.0;
};

// Single-window SSIM over the whole image. Stability constants follow the
// usual convention: C1 = (0.01 L)^2, C2 = (0.03 L)^2, C3 = C2 / 2; without
// them constant images divide by zero. Covariance uses the same N-1 divisor
// as contrast_std.
inline SsimComponents ssim(const std::vector<float>& x, const std::vector<float>& y,
                           double alpha = 1.0, double beta = 1.0, double gamma = 1.0,
                           double dynamic_range = 255.0) {
    if (x.size() != y.size()) throw ShapeError("ssim: image sizes differ");
    if (x.size() < 2) throw ShapeError("ssim: need at least 2 pixels");
    if (!(dynamic_range > 0.0)) throw ConfigError("ssim: dynamic_range must be > 0");

    double c1 = 0.01 * dynamic_range, c2 = 0.03 * dynamic_range;
    const double C1 = c1 * c1, C2 = c2 * c2, C3 = C2 / 2.0;

    double mx = luminance_mean(x), my = luminance_mean(y);
    double sx = contrast_std(x), sy = contrast_std(y);
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        sxy += (double(x[i]) - mx) * (double(y[i]) - my);
    sxy /= double(x.size() - 1);

    SsimComponents r;
    r.alpha = alpha;
    r.beta = beta;
    r.gamma = gamma;
    r.luminance = (2.0 * mx * my + C1) / (mx * mx + my * my + C1);
    r.contrast = (2.0 * sx * sy + C2) / (sx * sx + sy * sy + C2);
    r.structure = (sxy + C3) / (sx * sy + C3);
    r.ssim = std::pow(r.luminance, alpha) * std::pow(r.contrast, beta) *
             std::pow(r.structure, gamma);
    return r;
}

enum class PairingStrategy { Aligned, Random };

inline PairingStrategy pairing_strategy_from_string(const std::string& s) {
    if (s == "aligned") return PairingStrategy::Aligned;
    if (s == "random") return PairingStrategy::Random;
    throw ConfigError("unknown pairing strategy: " + s);
}

struct EvalReport {
    std::string class_a, class_b;
    std::string strategy;
    int n_pairs = 0;
    double mean_mse = 0.0;   // 8-bit pixel domain
    double mean_ssim = 0.0;

    nlohmann::ordered_json to_json() const {
        return {{"class_a", class_a}, {"class_b", class_b}, {"strategy", strategy},
                {"n_pairs", n_pairs}, {"mean_mse", mean_mse}, {"mean_ssim", mean_ssim}};
    }
    // Table row, columns: Class 1, Class 2, MSE, SSIM.
    std::string to_table_row() const {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-24s %-24s %10.2f %8.2f", class_a.c_str(),
                      class_b.c_str(), mean_mse, mean_ssim);
        return buf;
    }
};

namespace detail {

// [-1,1] float image -> 8-bit-valued doubles, denormalize semantics.
inline std::vector<float> to_pixel_domain(const ImageBatch& batch, int item) {
    std::size_t per = batch.size() / std::size_t(batch.shape.n);
    std::vector<float> out(per);
    for (std::size_t i = 0; i < per; ++i) {
        double v = (double(batch.data[std::size_t(item) * per + i]) + 1.0) * 127.5;
        long u = long(std::floor(v + 0.5));
        out[i] = float(std::clamp(u, 0L, 255L));
    }
    return out;
}

}  // namespace detail

// Pair images across the two corpora (aligned index pairing requires equal
// counts; random pairing draws n_pairs seeded uniform pairs) and report mean
// per-pair MSE and SSIM in the [0, 255] domain.
inline EvalReport evaluate_pair(const ImageBatch& corpus_a, const ImageBatch& corpus_b,
                                PairingStrategy strategy, int n_pairs, std::uint64_t seed) {
    if (corpus_a.shape.n < 1 || corpus_b.shape.n < 1)
        throw CorpusError("evaluate_pair: empty corpus");
    if (corpus_a.shape.h != corpus_b.shape.h || corpus_a.shape.w != corpus_b.shape.w)
        throw ShapeError("evaluate_pair: image sizes differ between corpora");

    std::vector<std::pair<int, int>> pairs;
    if (strategy == PairingStrategy::Aligned) {
        if (corpus_a.shape.n != corpus_b.shape.n)
            throw ConfigError("evaluate_pair: aligned strategy needs equal corpus sizes");
        for (int i = 0; i < corpus_a.shape.n; ++i) pairs.emplace_back(i, i);
    } else {
        if (n_pairs < 1) throw ConfigError("evaluate_pair: n_pairs must be >= 1");
        RngState rng(seed);
        for (int i = 0; i < n_pairs; ++i)
            pairs.emplace_back(rng.next_int(0, corpus_a.shape.n - 1),
                               rng.next_int(0, corpus_b.shape.n - 1));
    }

    double mse_sum = 0.0, ssim_sum = 0.0;
    for (auto [ia, ib] : pairs) {
        std::vector<float> a = detail::to_pixel_domain(corpus_a, ia);
        std::vector<float> b = detail::to_pixel_domain(corpus_b, ib);
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            double d = double(a[i]) - double(b[i]);
            acc += d * d;
        }
        mse_sum += acc / double(a.size());
        ssim_sum += ssim(a, b).ssim;
    }

    EvalReport rep;
    rep.strategy = (strategy == PairingStrategy::Aligned) ? "aligned" : "random";
    rep.n_pairs = int(pairs.size());
    rep.mean_mse = mse_sum / double(pairs.size());
    rep.mean_ssim = ssim_sum / double(pairs.size());
    return rep;
}

}  // namespace ddpm
