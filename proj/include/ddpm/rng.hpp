#pragma once

// Seeded, splittable random stream. splitmix64 underneath (Steele et al.,
// "Fast Splittable Pseudorandom Number Generators"); Gaussian draws via
// Box-Muller. Identical seed + identical call sequence gives an identical
// stream, which is the contract everything downstream relies on.

#include <cmath>
#include <cstdint>
#include <numbers>

#include "ddpm/core.hpp"

namespace ddpm {

class RngState {
  public:
    explicit RngState(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in (0, 1].
    double next_unit() {
        return (double(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Uniform integer in [lo, hi].
    int next_int(int lo, int hi) {
        return lo + int(next_u64() % std::uint64_t(hi - lo + 1));
    }

    float next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return float(spare_);
        }
        double u1 = next_unit();
        double u2 = next_unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return float(r * std::cos(a));
    }

    // Independent substream; the parent stream advances by one draw.
    RngState split() {
        return RngState(next_u64() ^ 0x5851f42d4c957f2dULL);
    }

  private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Batch of i.i.d. standard-normal samples of the given shape.
inline ImageBatch gaussian_like(Shape shape, RngState& rng) {
    ImageBatch out(shape);  // validates shape
    for (auto& v : out.data) v = rng.next_gaussian();
    return out;
}

}  // namespace ddpm
