#pragma once

// Denoiser contract eps_theta(x_t, t), the sinusoidal timestep embedding,
// and the analytic denoiser for a single-point data distribution (test
// oracle for the sampling chain).

#include <cmath>
#include <memory>
#include <vector>

#include "ddpm/core.hpp"
#include "ddpm/schedule.hpp"

namespace ddpm {

// Predicted-noise batch has the same shape as the noisy input batch;
// t carries one timestep per batch item.
class Denoiser {
  public:
    virtual ~Denoiser() = default;
    virtual ImageBatch predict(const ImageBatch& x_t, const std::vector<int>& t) const = 0;
};

// Per-item sin/cos timestep encoding, interleaved pairing:
//   value[2i]   = sin(t / 10000^(2i/dim))
//   value[2i+1] = cos(t / 10000^(2i/dim))
// Stored row-major, one row of `dim` floats per batch item.
struct TimeEmbedding {
    int n = 0;
    int dim = 0;
    std::vector<float> values;  // n * dim

    float at(int item, int j) const { return values[std::size_t(item) * dim + j]; }
};

inline TimeEmbedding sinusoidal_embedding(const std::vector<int>& t, int dim) {
    if (dim < 2 || dim % 2 != 0)
        throw ConfigError("sinusoidal_embedding: dim must be even and >= 2");
    TimeEmbedding e;
    e.n = int(t.size());
    e.dim = dim;
    e.values.resize(std::size_t(e.n) * dim);
    for (int i = 0; i < e.n; ++i) {
        for (int k = 0; k < dim / 2; ++k) {
            double freq = std::pow(10000.0, -2.0 * k / double(dim));
            double arg = double(t[i]) * freq;
            e.values[std::size_t(i) * dim + 2 * k] = float(std::sin(arg));
            e.values[std::size_t(i) * dim + 2 * k + 1] = float(std::cos(arg));
        }
    }
    return e;
}

// Optimal epsilon-predictor when all data mass sits at one image v:
// inverting x_t = sqrt(abar_t) v + sqrt(1-abar_t) eps gives
// eps_hat = (x_t - sqrt(abar_t) v) / sqrt(1-abar_t).
class LinearOracleDenoiser : public Denoiser {
  public:
    LinearOracleDenoiser(ImageBatch target, NoiseSchedule schedule)
        : target_(std::move(target)), schedule_(std::move(schedule)) {}

    ImageBatch predict(const ImageBatch& x_t, const std::vector<int>& t) const override {
        if (int(t.size()) != x_t.shape.n)
            throw ShapeError("oracle denoiser: need one timestep per batch item");
        ImageBatch out(x_t.shape);
        std::size_t per_item = x_t.size() / std::size_t(x_t.shape.n);
        if (target_.size() != per_item)
            throw ShapeError("oracle denoiser: target size does not match batch items");
        for (int i = 0; i < x_t.shape.n; ++i) {
            float sa = schedule_.sqrt_alpha_bar_at(t[i]);
            float so = schedule_.sqrt_one_minus_alpha_bar_at(t[i]);
            for (std::size_t j = 0; j < per_item; ++j) {
                std::size_t k = std::size_t(i) * per_item + j;
                out.data[k] = (x_t.data[k] - sa * target_.data[j]) / so;
            }
        }
        return out;
    }

  private:
    ImageBatch target_;  // single image, n == 1
    NoiseSchedule schedule_;
};

inline std::unique_ptr<Denoiser> linear_oracle_denoiser(ImageBatch x0_target, const NoiseSchedule& s) {
    return std::make_unique<LinearOracleDenoiser>(std::move(x0_target), s);
}

}  // namespace ddpm
