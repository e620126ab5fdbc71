#pragma once

// Forward noising process (single-step and closed-form) and the reverse
// sampling chain.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ddpm/core.hpp"
#include "ddpm/denoiser.hpp"
#include "ddpm/rng.hpp"
#include "ddpm/schedule.hpp"

namespace ddpm {

// One closed-form draw: x_t together with the exact noise used and the
// per-item timesteps.
struct ForwardSample {
    ImageBatch x_t;
    ImageBatch eps;
    std::vector<int> t;
};

// q(x_t | x_{t-1}): x_t = sqrt(1-beta_t) x_{t-1} + sqrt(beta_t) z.
inline ImageBatch forward_step(const ImageBatch& x_prev, int t, const NoiseSchedule& s, RngState& rng) {
    float beta = s.beta_at(t);  // range-checks t
    float keep = float(std::sqrt(1.0 - double(beta)));
    float add = float(std::sqrt(double(beta)));
    ImageBatch out(x_prev.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = keep * x_prev.data[i] + add * rng.next_gaussian();
    return out;
}

// q(x_t | x_0): x_t = sqrt(abar_t) x_0 + sqrt(1-abar_t) eps, per batch item.
inline ForwardSample forward_closed_form(const ImageBatch& x0, const std::vector<int>& t,
                                         const NoiseSchedule& s, RngState& rng) {
    if (int(t.size()) != x0.shape.n)
        throw ShapeError("forward_closed_form: need one timestep per batch item");
    for (int ti : t) s.beta_at(ti);  // range check before drawing noise

    bool in_range = true;
    for (float v : x0.data)
        if (v < -1.0f || v > 1.0f) { in_range = false; break; }
    if (!in_range) log_warn("forward_closed_form: x0 has elements outside [-1, 1]");

    ForwardSample fs;
    fs.t = t;
    fs.eps = gaussian_like(x0.shape, rng);
    fs.x_t = ImageBatch(x0.shape);
    std::size_t per_item = x0.size() / std::size_t(x0.shape.n);
    for (int i = 0; i < x0.shape.n; ++i) {
        float sa = s.sqrt_alpha_bar_at(t[i]);
        float so = s.sqrt_one_minus_alpha_bar_at(t[i]);
        for (std::size_t j = 0; j < per_item; ++j) {
            std::size_t k = std::size_t(i) * per_item + j;
            fs.x_t.data[k] = sa * x0.data[k] + so * fs.eps.data[k];
        }
    }
    return fs;
}

// One reverse step: mu = (x_t - (beta_t / sqrt(1-abar_t)) eps_hat) / sqrt(alpha_t),
// plus sigma_t z for t > 1. `deterministic` forces sigma = 0 at every step
// (used by the round-trip oracle); the t=1 step is always noiseless.
inline ImageBatch reverse_step(const ImageBatch& x_t, int t, const ImageBatch& eps_hat,
                               const NoiseSchedule& s, RngState& rng, bool deterministic = false) {
    if (!(x_t.shape == eps_hat.shape))
        throw ShapeError("reverse_step: x_t and eps_hat shapes differ");
    PosteriorCoefficients pc = posterior_coefficients(s, t);
    float sigma = deterministic ? 0.0f : pc.sigma;
    ImageBatch out(x_t.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        float mu = pc.mean_x_coeff * (x_t.data[i] - pc.mean_eps_coeff * eps_hat.data[i]);
        out.data[i] = (sigma > 0.0f) ? mu + sigma * rng.next_gaussian() : mu;
    }
    return out;
}

// Full reverse chain: x_T ~ N(0, I), then reverse_step for t = T..1 with the
// denoiser supplying eps_hat. Intermediate states are never clamped; the
// final output is clamped to [-1, 1] once.
inline ImageBatch sample(const Denoiser& denoiser, Shape shape, const NoiseSchedule& s, RngState& rng) {
    ImageBatch x = gaussian_like(shape, rng);
    std::vector<int> t_batch(shape.n);
    for (int t = s.T; t >= 1; --t) {
        std::fill(t_batch.begin(), t_batch.end(), t);
        ImageBatch eps_hat = denoiser.predict(x, t_batch);
        if (!(eps_hat.shape == shape))
            throw ShapeError("sample: denoiser returned shape " + eps_hat.shape.str() +
                             " for input " + shape.str());
        if (!eps_hat.finite())
            throw NumericError("sample: non-finite denoiser output at t=" + std::to_string(t));
        x = reverse_step(x, t, eps_hat, s, rng);
    }
    for (auto& v : x.data) v = std::clamp(v, -1.0f, 1.0f);
    return x;
}

}  // namespace ddpm
