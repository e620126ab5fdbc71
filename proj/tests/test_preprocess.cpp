#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ddpm/preprocess.hpp"
#include "ddpm/synthetic.hpp"

using namespace ddpm;
namespace fs = std::filesystem;

namespace {

RawImage uniform_image(int h, int w, std::uint8_t value, int channels = 1) {
    RawImage img;
    img.h = h;
    img.w = w;
    img.channels = channels;
    img.pixels.assign(std::size_t(h) * w * channels, value);
    return img;
}

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("ddpm_test_" + std::to_string(::getpid()) + "_" +
                                                  std::to_string(counter++))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static inline int counter = 0;
};

}  // namespace

TEST_CASE("preprocess maps range endpoints") {
    PipelineConfig cfg;
    cfg.target_h = cfg.target_w = 16;

    ImageBatch black = preprocess(uniform_image(40, 40, 0), cfg);
    CHECK(black.shape == Shape{1, 1, 16, 16});
    for (float v : black.data) CHECK(v == -1.0f);

    ImageBatch white = preprocess(uniform_image(40, 40, 255), cfg);
    for (float v : white.data) CHECK(v == 1.0f);

    ImageBatch gray = preprocess(uniform_image(40, 40, 128), cfg);
    for (float v : gray.data) CHECK(v == Catch::Approx(0.003922).margin(1e-5));
}

TEST_CASE("preprocess handles RGB via BT.601 luma") {
    RawImage img = uniform_image(32, 32, 0, 3);
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        img.pixels[i] = 255;  // pure red
    }
    PipelineConfig cfg;
    cfg.target_h = cfg.target_w = 16;
    ImageBatch out = preprocess(img, cfg);
    float expect = float(0.299 * 255) / 127.5f - 1.0f;
    for (float v : out.data) CHECK(v == Catch::Approx(expect).margin(1e-3));
}

TEST_CASE("preprocess output is always inside [-1,1]") {
    RngState rng(8);
    PipelineConfig cfg;
    cfg.target_h = cfg.target_w = 16;
    for (int i = 0; i < 10; ++i) {
        RawImage img = uniform_image(20 + i, 33, 0);
        for (auto& p : img.pixels) p = std::uint8_t(rng.next_u64() & 0xff);
        ImageBatch out = preprocess(img, cfg);
        for (float v : out.data) {
            CHECK(v >= -1.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("preprocess rejects bad inputs") {
    PipelineConfig cfg;
    CHECK_THROWS_AS(preprocess(RawImage{}, cfg), DecodeError);
    PipelineConfig bad;
    bad.crop_fraction = 0.0f;
    CHECK_THROWS_AS(preprocess(uniform_image(16, 16, 0), bad), ConfigError);
    bad = PipelineConfig{};
    bad.target_h = 4;
    CHECK_THROWS_AS(preprocess(uniform_image(16, 16, 0), bad), ConfigError);
}

TEST_CASE("denormalize endpoints and rounding") {
    ImageBatch b({1, 1, 1, 3});
    b.data = {-1.0f, 0.0f, 1.0f};
    auto imgs = denormalize(b);
    REQUIRE(imgs.size() == 1);
    CHECK(imgs[0].pixels[0] == 0);
    CHECK(imgs[0].pixels[1] == 128);  // round half up
    CHECK(imgs[0].pixels[2] == 255);

    ImageBatch bad({1, 1, 1, 1});
    bad.data = {1.5f};
    CHECK_THROWS_AS(denormalize(bad), DomainError);
}

TEST_CASE("u8 -> float -> u8 round trip is exact for all 256 values") {
    ImageBatch b({1, 1, 16, 16});
    for (int g = 0; g < 256; ++g) b.data[std::size_t(g)] = float(g) / 127.5f - 1.0f;
    auto imgs = denormalize(b);
    for (int g = 0; g < 256; ++g) CHECK(int(imgs[0].pixels[std::size_t(g)]) == g);
}

TEST_CASE("load_corpus ordering, limit and skip policy") {
    TempDir dir;
    ImageBatch corpus = make_shape_corpus(3, 16, 16, 42);
    auto imgs = denormalize(corpus);
    write_png_gray((dir.path / "b.png").string(), imgs[0]);
    write_png_gray((dir.path / "a.png").string(), imgs[1]);
    write_png_gray((dir.path / "c.png").string(), imgs[2]);

    PipelineConfig cfg;
    cfg.target_h = cfg.target_w = 16;
    cfg.crop_fraction = 1.0f;

    ImageBatch all = load_corpus(dir.path.string(), cfg);
    CHECK(all.shape.n == 3);

    // limit=2 keeps the first two lexicographic names: a.png then b.png
    ImageBatch two = load_corpus(dir.path.string(), cfg, 2);
    REQUIRE(two.shape.n == 2);
    ImageBatch ref_a = preprocess(read_png((dir.path / "a.png").string()), cfg);
    for (std::size_t i = 0; i < ref_a.size(); ++i) CHECK(two.data[i] == ref_a.data[i]);

    // corrupt file is skipped with a warning, valid ones still load
    std::ofstream(dir.path / "0garbage.png") << "not a png";
    ImageBatch mixed = load_corpus(dir.path.string(), cfg);
    CHECK(mixed.shape.n == 3);
}

TEST_CASE("load_corpus on an empty directory fails") {
    TempDir dir;
    PipelineConfig cfg;
    CHECK_THROWS_AS(load_corpus(dir.path.string(), cfg), CorpusError);
    CHECK_THROWS_AS(load_corpus((dir.path / "missing").string(), cfg), CorpusError);
}

TEST_CASE("png write/read round trip") {
    TempDir dir;
    ImageBatch corpus = make_shape_corpus(1, 24, 24, 7);
    auto imgs = denormalize(corpus);
    std::string path = (dir.path / "img.png").string();
    write_png_gray(path, imgs[0]);
    RawImage back = read_png(path);
    CHECK(back.h == 24);
    CHECK(back.w == 24);
    CHECK(back.channels == 1);
    CHECK(back.pixels == imgs[0].pixels);
}
