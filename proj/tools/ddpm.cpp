// Command-line surface: train, sample, evaluate, noise-demo, make-data.
// Exit codes: 0 success, 2 usage/config error, 3 numeric failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ddpm/core.hpp"
#include "ddpm/diffusion.hpp"
#include "ddpm/eval.hpp"
#include "ddpm/preprocess.hpp"
#include "ddpm/synthetic.hpp"
#include "ddpm/train.hpp"
#include "ddpm/unet.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Minimal loss-curve plot: white canvas, black polyline, 10px margins.
ddpm::RawImage render_loss_curve(const std::vector<ddpm::EpochRecord>& records) {
    const int W = 640, H = 360, M = 10;
    ddpm::RawImage img;
    img.h = H;
    img.w = W;
    img.channels = 1;
    img.pixels.assign(std::size_t(H) * W, 255);
    if (records.empty()) return img;
    double lo = records[0].mean_loss, hi = records[0].mean_loss;
    for (const auto& r : records) {
        lo = std::min(lo, r.mean_loss);
        hi = std::max(hi, r.mean_loss);
    }
    if (hi <= lo) hi = lo + 1.0;
    auto px = [&](int i) {
        return M + int((W - 2 * M - 1) * double(i) / std::max<std::size_t>(records.size() - 1, 1));
    };
    auto py = [&](double v) { return H - M - 1 - int((H - 2 * M - 1) * (v - lo) / (hi - lo)); };
    for (std::size_t i = 1; i < records.size(); ++i) {
        int x0 = px(int(i - 1)), y0 = py(records[i - 1].mean_loss);
        int x1 = px(int(i)), y1 = py(records[i].mean_loss);
        int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
        for (int s = 0; s <= steps; ++s) {
            int x = x0 + (x1 - x0) * s / steps;
            int y = y0 + (y1 - y0) * s / steps;
            img.pixels[std::size_t(y) * W + x] = 0;
        }
    }
    return img;
}

struct TrainArgs {
    std::string config_file;
    std::string data;
    std::string out = "runs/train";
    int epochs = -1;
    double lr = -1.0;
    int batch_size = -1;
    std::int64_t seed = -1;
    int T = -1;
    double beta_start = -1.0, beta_end = -1.0;
    int image_size = -1;
    int base_width = -1;
    int blocks_per_level = -1;
    int time_embed_dim = -1;
    double crop_fraction = -1.0;
    int limit = 0;
};

// Flat JSON config file; explicit flags override file values.
void merge_config_file(TrainArgs& a) {
    if (a.config_file.empty()) return;
    std::ifstream in(a.config_file);
    if (!in) throw ddpm::ConfigError("cannot read config file " + a.config_file);
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ddpm::ConfigError("bad config file " + a.config_file + ": " + e.what());
    }
    auto set_i = [&](const char* k, int& dst) { if (dst < 0 && j.contains(k)) dst = j.at(k).get<int>(); };
    auto set_d = [&](const char* k, double& dst) { if (dst < 0 && j.contains(k)) dst = j.at(k).get<double>(); };
    if (a.data.empty() && j.contains("data")) a.data = j.at("data").get<std::string>();
    if (a.out == "runs/train" && j.contains("out")) a.out = j.at("out").get<std::string>();
    set_i("epochs", a.epochs);
    set_d("lr", a.lr);
    set_i("batch_size", a.batch_size);
    if (a.seed < 0 && j.contains("seed")) a.seed = j.at("seed").get<std::int64_t>();
    set_i("T", a.T);
    set_d("beta_start", a.beta_start);
    set_d("beta_end", a.beta_end);
    set_i("image_size", a.image_size);
    set_i("base_width", a.base_width);
    set_i("blocks_per_level", a.blocks_per_level);
    set_i("time_embed_dim", a.time_embed_dim);
    set_d("crop_fraction", a.crop_fraction);
    set_i("limit", a.limit);
}

int cmd_train(TrainArgs a) {
    merge_config_file(a);

    ddpm::TrainConfig cfg;
    cfg.epochs = a.epochs > 0 ? a.epochs : 50;
    cfg.learning_rate = a.lr > 0 ? float(a.lr) : 0.001f;
    cfg.batch_size = a.batch_size > 0 ? a.batch_size : 16;
    cfg.seed = a.seed >= 0 ? std::uint64_t(a.seed) : 0;
    cfg.T = a.T > 0 ? a.T : 1000;
    cfg.beta_start = a.beta_start > 0 ? float(a.beta_start) : 1e-4f;
    cfg.beta_end = a.beta_end > 0 ? float(a.beta_end) : 0.02f;

    int size = a.image_size > 0 ? a.image_size : 32;
    int bw = a.base_width > 0 ? a.base_width : 32;
    cfg.unet.image_h = cfg.unet.image_w = size;
    cfg.unet.base_width = bw;
    cfg.unet.level_widths = (size >= 16) ? std::vector<int>{bw, 2 * bw, 4 * bw}
                                         : std::vector<int>{bw, 2 * bw};
    if (a.blocks_per_level > 0) cfg.unet.blocks_per_level = a.blocks_per_level;
    if (a.time_embed_dim > 0) cfg.unet.time_embed_dim = a.time_embed_dim;
    cfg.checkpoint_dir = a.out;

    ddpm::PipelineConfig pipe;
    pipe.target_h = pipe.target_w = size;
    if (a.crop_fraction > 0) pipe.crop_fraction = float(a.crop_fraction);

    // validate everything before touching the filesystem
    cfg.validate();
    pipe.validate();
    ddpm::linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    if (a.data.empty() || !fs::is_directory(a.data))
        throw ddpm::ConfigError("data directory missing or not a directory: " + a.data);

    ddpm::log_info("loading corpus from " + a.data);
    ddpm::ImageBatch corpus = ddpm::load_corpus(a.data, pipe, a.limit);
    ddpm::log_info("training on " + std::to_string(corpus.shape.n) + " images");

    auto [ckpt, records] = ddpm::train(cfg, corpus);

    std::ofstream log(a.out + "/log.jsonl", std::ios::trunc);
    for (const auto& r : records) {
        // wall_time is deliberately omitted: the log must be bit-reproducible
        ordered_json j{{"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"is_best", r.is_best}};
        log << j.dump() << "\n";
    }
    ddpm::write_png_gray(a.out + "/loss_curve.png", render_loss_curve(records));

    ordered_json manifest{{"checkpoint", "best.ckpt"},
                          {"log", "log.jsonl"},
                          {"loss_curve", "loss_curve.png"},
                          {"best_epoch", ckpt.epoch},
                          {"best_loss", ckpt.loss}};
    std::ofstream(a.out + "/manifest.json") << manifest.dump(2) << "\n";

    ddpm::log_info("best epoch " + std::to_string(ckpt.epoch) + " loss " +
                   std::to_string(ckpt.loss));
    return 0;
}

int cmd_sample(const std::string& ckpt_path, int count, std::uint64_t seed,
               const std::string& out) {
    if (count < 1) throw ddpm::ConfigError("count must be >= 1");
    ddpm::Checkpoint ckpt = ddpm::checkpoint_load(ckpt_path);
    ddpm::NoiseSchedule schedule = ckpt.schedule();
    ddpm::UNetDenoiser denoiser(ckpt.unet, ckpt.params);

    ddpm::RngState rng(seed);
    ddpm::ImageBatch samples =
        ddpm::sample(denoiser, {count, 1, ckpt.unet.image_h, ckpt.unet.image_w}, schedule, rng);

    fs::create_directories(out);
    auto imgs = ddpm::denormalize(samples);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%03zu.png", i);
        ddpm::write_png_gray(out + "/" + name, imgs[i]);
    }
    ddpm::write_png_gray(out + "/grid.png", ddpm::compose_grid(imgs));
    ddpm::log_info("wrote " + std::to_string(count) + " samples to " + out);
    return 0;
}

int cmd_evaluate(const std::string& dir_a, const std::string& dir_b, const std::string& strategy,
                 int pairs, std::uint64_t seed, int size, const std::string& out_json) {
    ddpm::PipelineConfig pipe;
    pipe.target_h = pipe.target_w = size;
    ddpm::PairingStrategy strat = ddpm::pairing_strategy_from_string(strategy);

    ddpm::ImageBatch a = ddpm::load_corpus(dir_a, pipe);
    ddpm::ImageBatch b = ddpm::load_corpus(dir_b, pipe);
    ddpm::EvalReport rep = ddpm::evaluate_pair(a, b, strat, pairs, seed);
    rep.class_a = fs::path(dir_a).filename().string();
    rep.class_b = fs::path(dir_b).filename().string();

    std::printf("%-24s %-24s %10s %8s\n", "Class 1", "Class 2", "MSE", "SSIM");
    std::printf("%s\n", rep.to_table_row().c_str());
    if (!out_json.empty()) std::ofstream(out_json) << rep.to_json().dump(2) << "\n";
    return 0;
}

int cmd_noise_demo(const std::string& data, const std::string& fractions_csv, std::uint64_t seed,
                   const std::string& out, int size, int T, double beta_start, double beta_end) {
    std::vector<double> fractions;
    std::stringstream ss(fractions_csv);
    for (std::string tok; std::getline(ss, tok, ',');) {
        double f = std::stod(tok);
        if (!(f > 0.0) || f > 1.0)
            throw ddpm::ConfigError("fraction " + tok + " outside (0, 1]");
        fractions.push_back(f);
    }
    if (fractions.empty()) throw ddpm::ConfigError("no fractions given");

    ddpm::PipelineConfig pipe;
    pipe.target_h = pipe.target_w = size;
    ddpm::ImageBatch corpus = ddpm::load_corpus(data, pipe, 8);
    ddpm::NoiseSchedule schedule = ddpm::linear_schedule(T, float(beta_start), float(beta_end));

    // row 0 = originals, one extra row per fraction at t = round(f*T)
    std::vector<ddpm::RawImage> tiles = ddpm::denormalize(corpus);
    ddpm::RngState rng(seed);
    for (double f : fractions) {
        int t = std::max(1, int(std::lround(f * T)));
        std::vector<int> ts(std::size_t(corpus.shape.n), t);
        ddpm::ForwardSample fs = ddpm::forward_closed_form(corpus, ts, schedule, rng);
        for (auto& v : fs.x_t.data) v = std::clamp(v, -1.0f, 1.0f);
        auto noisy = ddpm::denormalize(fs.x_t);
        tiles.insert(tiles.end(), noisy.begin(), noisy.end());
    }
    if (!out.empty() && fs::path(out).has_parent_path())
        fs::create_directories(fs::path(out).parent_path());
    ddpm::write_png_gray(out, ddpm::compose_grid(tiles, int(fractions.size()) + 1));
    ddpm::log_info("wrote noise demo grid to " + out);
    return 0;
}

int cmd_make_data(const std::string& out, int count, int size, std::uint64_t seed) {
    ddpm::ImageBatch corpus = ddpm::make_shape_corpus(count, size, size, seed);
    ddpm::write_corpus_pngs(corpus, out);
    ddpm::log_info("wrote " + std::to_string(count) + " synthetic images to " + out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DDPM grayscale image synthesizer"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train a denoiser on a PNG corpus");
    train->add_option("--config", ta.config_file, "flat JSON config file");
    train->add_option("--data", ta.data, "training image directory");
    train->add_option("--out", ta.out, "run directory");
    train->add_option("--epochs", ta.epochs);
    train->add_option("--lr", ta.lr);
    train->add_option("--batch-size", ta.batch_size);
    train->add_option("--seed", ta.seed);
    train->add_option("--T", ta.T, "diffusion steps");
    train->add_option("--beta-start", ta.beta_start);
    train->add_option("--beta-end", ta.beta_end);
    train->add_option("--image-size", ta.image_size);
    train->add_option("--base-width", ta.base_width);
    train->add_option("--blocks-per-level", ta.blocks_per_level);
    train->add_option("--time-embed-dim", ta.time_embed_dim);
    train->add_option("--crop-fraction", ta.crop_fraction);
    train->add_option("--limit", ta.limit, "max corpus images");

    std::string ckpt_path, sample_out = "samples";
    int count = 16;
    std::int64_t seed = 0;
    auto* sample = app.add_subcommand("sample", "Generate images from a checkpoint");
    sample->add_option("--checkpoint", ckpt_path)->required();
    sample->add_option("--count", count);
    sample->add_option("--seed", seed);
    sample->add_option("--out", sample_out);

    std::string dir_a, dir_b, strategy = "random", eval_json = "eval_report.json";
    int pairs = 256, eval_size = 32;
    std::int64_t eval_seed = 0;
    auto* evaluate = app.add_subcommand("evaluate", "MSE/SSIM evaluation matrix row");
    evaluate->add_option("--class-a", dir_a)->required();
    evaluate->add_option("--class-b", dir_b)->required();
    evaluate->add_option("--strategy", strategy, "aligned|random");
    evaluate->add_option("--pairs", pairs);
    evaluate->add_option("--seed", eval_seed);
    evaluate->add_option("--image-size", eval_size);
    evaluate->add_option("--out", eval_json, "JSON report path");

    std::string nd_data, nd_fractions = "0.25,0.5,1.0", nd_out = "noise_demo.png";
    int nd_size = 32, nd_T = 1000;
    double nd_b0 = 1e-4, nd_b1 = 0.02;
    std::int64_t nd_seed = 0;
    auto* noise = app.add_subcommand("noise-demo", "Forward-noising comparison grid");
    noise->add_option("--data", nd_data)->required();
    noise->add_option("--fractions", nd_fractions, "comma-separated fractions of T");
    noise->add_option("--seed", nd_seed);
    noise->add_option("--out", nd_out);
    noise->add_option("--image-size", nd_size);
    noise->add_option("--T", nd_T);
    noise->add_option("--beta-start", nd_b0);
    noise->add_option("--beta-end", nd_b1);

    std::string md_out = "data/synthetic";
    int md_count = 16, md_size = 8;
    std::int64_t md_seed = 0;
    auto* make_data = app.add_subcommand("make-data", "Generate a synthetic shape corpus");
    make_data->add_option("--out", md_out);
    make_data->add_option("--count", md_count);
    make_data->add_option("--size", md_size);
    make_data->add_option("--seed", md_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (train->parsed()) return cmd_train(ta);
        if (sample->parsed()) return cmd_sample(ckpt_path, count, std::uint64_t(seed), sample_out);
        if (evaluate->parsed())
            return cmd_evaluate(dir_a, dir_b, strategy, pairs, std::uint64_t(eval_seed), eval_size,
                                eval_json);
        if (noise->parsed())
            return cmd_noise_demo(nd_data, nd_fractions, std::uint64_t(nd_seed), nd_out, nd_size,
                                  nd_T, nd_b0, nd_b1);
        if (make_data->parsed()) return cmd_make_data(md_out, md_count, md_size, std::uint64_t(md_seed));
    } catch (const ddpm::NumericError& e) {
        ddpm::log_line("error", e.what());
        return 3;
    } catch (const std::exception& e) {
        ddpm::log_line("error", e.what());
        return 2;
    }
    return 0;
}
