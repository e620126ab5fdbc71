#include <catch2/catch_amalgamated.hpp>

#include "ddpm/denoiser.hpp"
#include "ddpm/diffusion.hpp"

using namespace ddpm;

TEST_CASE("sinusoidal embedding hand case dim=4, t=1") {
    TimeEmbedding e = sinusoidal_embedding({1}, 4);
    REQUIRE(e.dim == 4);
    CHECK(e.at(0, 0) == Catch::Approx(0.841471).epsilon(1e-5));
    CHECK(e.at(0, 1) == Catch::Approx(0.540302).epsilon(1e-5));
    CHECK(e.at(0, 2) == Catch::Approx(0.010000).epsilon(1e-4));
    CHECK(e.at(0, 3) == Catch::Approx(0.999950).epsilon(1e-5));
}

TEST_CASE("sinusoidal embedding of t=0 is the (0,1) pattern") {
    TimeEmbedding e = sinusoidal_embedding({0}, 8);
    for (int k = 0; k < 4; ++k) {
        CHECK(e.at(0, 2 * k) == 0.0f);
        CHECK(e.at(0, 2 * k + 1) == 1.0f);
    }
}

TEST_CASE("sinusoidal embedding stays in [-1,1]") {
    for (int dim : {2, 16, 128}) {
        std::vector<int> ts;
        for (int t = 1; t <= 10000; t += 97) ts.push_back(t);
        TimeEmbedding e = sinusoidal_embedding(ts, dim);
        for (float v : e.values) {
            CHECK(v >= -1.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("sinusoidal embedding rejects odd dims") {
    CHECK_THROWS_AS(sinusoidal_embedding({1}, 3), ConfigError);
    CHECK_THROWS_AS(sinusoidal_embedding({1}, 0), ConfigError);
}

TEST_CASE("sinusoidal embedding is injective over t in [1, T] for dim >= 16") {
    const int T = 1000, dim = 16;
    std::vector<int> ts(T);
    for (int t = 1; t <= T; ++t) ts[std::size_t(t - 1)] = t;
    TimeEmbedding e = sinusoidal_embedding(ts, dim);
    for (int i = 0; i < T; ++i)
        for (int j = i + 1; j < T; ++j) {
            float linf = 0.0f;
            for (int k = 0; k < dim; ++k)
                linf = std::max(linf, std::abs(e.at(i, k) - e.at(j, k)));
            if (linf <= 1e-6f) FAIL("timesteps " << i + 1 << " and " << j + 1 << " collide");
        }
    SUCCEED();
}

TEST_CASE("linear oracle denoiser inverts the closed form") {
    NoiseSchedule s = linear_schedule(50, 1e-4f, 0.02f);
    RngState rng(5);
    ImageBatch v = gaussian_like({1, 1, 8, 8}, rng);
    for (auto& x : v.data) x = std::clamp(x, -1.0f, 1.0f);

    ImageBatch x0({4, 1, 8, 8});
    for (int n = 0; n < 4; ++n)
        for (std::size_t i = 0; i < v.size(); ++i)
            x0.data[std::size_t(n) * v.size() + i] = v.data[i];
    std::vector<int> t{3, 17, 33, 50};
    ForwardSample fs = forward_closed_form(x0, t, s, rng);

    auto oracle = linear_oracle_denoiser(v, s);
    ImageBatch eps_hat = oracle->predict(fs.x_t, t);
    CHECK(eps_hat.shape == fs.x_t.shape);
    for (std::size_t i = 0; i < eps_hat.size(); ++i)
        CHECK(eps_hat.data[i] == Catch::Approx(fs.eps.data[i]).margin(1e-5));
}
