#pragma once

// Variance schedule beta_t and the derived coefficient tables used by the
// forward and reverse processes. Timesteps are 1-based: t in [1, T].

#include <cmath>
#include <string>
#include <vector>

#include "ddpm/core.hpp"

namespace ddpm {

struct NoiseSchedule {
    int T = 0;
    float beta_start = 0.0f;
    float beta_end = 0.0f;
    std::string kind = "linear";

    // All length T, index 0 holds t = 1.
    std::vector<float> beta;
    std::vector<float> alpha;                     // 1 - beta_t
    std::vector<float> alpha_bar;                 // prod_{s<=t} alpha_s
    std::vector<float> sqrt_alpha_bar;
    std::vector<float> sqrt_one_minus_alpha_bar;

    float beta_at(int t) const { return beta[check(t)]; }
    float alpha_at(int t) const { return alpha[check(t)]; }
    float alpha_bar_at(int t) const { return alpha_bar[check(t)]; }
    float sqrt_alpha_bar_at(int t) const { return sqrt_alpha_bar[check(t)]; }
    float sqrt_one_minus_alpha_bar_at(int t) const { return sqrt_one_minus_alpha_bar[check(t)]; }

  private:
    int check(int t) const {
        if (t < 1 || t > T)
            throw IndexError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
        return t - 1;
    }
};

// Linear interpolation of beta from beta_start (t=1) to beta_end (t=T).
// Betas must lie strictly inside (0, 1): beta = 0 makes a step a no-op and
// beta near 1 degenerates alpha_bar.
inline NoiseSchedule linear_schedule(int T, float beta_start, float beta_end) {
    if (T < 1) throw ConfigError("schedule: T must be >= 1");
    if (!(beta_start > 0.0f) || !(beta_end < 1.0f))
        throw ConfigError("schedule: betas must lie in (0, 1)");
    if (beta_start > beta_end)
        throw ConfigError("schedule: beta_start must be <= beta_end");

    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    s.sqrt_alpha_bar.resize(T);
    s.sqrt_one_minus_alpha_bar.resize(T);

    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        double b = (T == 1) ? double(beta_start)
                            : double(beta_start) + (double(beta_end) - double(beta_start)) * i / double(T - 1);
        prod *= 1.0 - b;
        s.beta[i] = float(b);
        s.alpha[i] = float(1.0 - b);
        s.alpha_bar[i] = float(prod);
        s.sqrt_alpha_bar[i] = float(std::sqrt(prod));
        s.sqrt_one_minus_alpha_bar[i] = float(std::sqrt(1.0 - prod));
    }
    return s;
}

// Coefficients of the epsilon-parameterized reverse mean
//   mu = mean_x_coeff * x_t - mean_eps_coeff * eps_hat
// with untrained variance sigma_t^2 = beta_t. The final step (t=1) adds no
// noise so x_0 is a deterministic function of x_1.
struct PosteriorCoefficients {
    float mean_x_coeff;
    float mean_eps_coeff;
    float sigma;
};

inline PosteriorCoefficients posterior_coefficients(const NoiseSchedule& s, int t) {
    float alpha = s.alpha_at(t);
    float beta = s.beta_at(t);
    PosteriorCoefficients p{};
    p.mean_x_coeff = float(1.0 / std::sqrt(double(alpha)));
    p.mean_eps_coeff = float(double(beta) / double(s.sqrt_one_minus_alpha_bar_at(t)));
    p.sigma = (t > 1) ? float(std::sqrt(double(beta))) : 0.0f;
    return p;
}

}  // namespace ddpm
