#pragma once

// Training loop: per item draw t ~ Uniform{1..T} and eps ~ N(0,I), noise via
// the closed form, predict eps_hat, one Adam step on the mean-squared noise
// prediction error. Tracks epoch losses and persists the best checkpoint.
//
// Checkpoint file layout: magic "DFCK", u32 LE version (=1), u32 LE JSON
// header length, UTF-8 JSON header (schedule, unet config, epoch, loss,
// seed, ordered parameter manifest with byte offsets), then raw LE float32
// parameter data in manifest order. save -> load -> save is bit-exact.

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddpm/core.hpp"
#include "ddpm/diffusion.hpp"
#include "ddpm/rng.hpp"
#include "ddpm/schedule.hpp"
#include "ddpm/unet.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace ddpm {

struct TrainConfig {
    int epochs = 50;
    float learning_rate = 0.001f;
    int batch_size = 16;
    std::uint64_t seed = 0;
    int T = 1000;
    float beta_start = 1e-4f;
    float beta_end = 0.02f;
    std::string checkpoint_dir;
    UNetConfig unet;

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (!(learning_rate > 0.0f)) throw ConfigError("train: learning_rate must be > 0");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        unet.validate();
    }
};

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    bool is_best = false;
    double wall_time = 0.0;
};

struct Checkpoint {
    std::uint32_t version = 1;
    std::string schedule_kind = "linear";
    int T = 1000;
    float beta_start = 1e-4f;
    float beta_end = 0.02f;
    UNetConfig unet;
    ParameterSet params;
    int epoch = 0;
    double loss = 0.0;
    std::uint64_t seed = 0;

    NoiseSchedule schedule() const { return linear_schedule(T, beta_start, beta_end); }
};

// Simplified objective: mean squared error between the drawn and the
// predicted noise.
inline double loss_simple(const ImageBatch& eps, const ImageBatch& eps_hat) {
    return batch_mse(eps, eps_hat);
}

class Adam {
  public:
    explicit Adam(float lr, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void update(ParameterSet& ps) {
        if (m_.empty()) {
            for (const auto& p : ps.params) {
                m_.emplace_back(p.size(), 0.0f);
                v_.emplace_back(p.size(), 0.0f);
            }
        }
        ++step_;
        double bc1 = 1.0 - std::pow(double(b1_), double(step_));
        double bc2 = 1.0 - std::pow(double(b2_), double(step_));
        for (std::size_t i = 0; i < ps.params.size(); ++i) {
            auto& p = ps.params[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                double g = p.grad[j];
                double m = double(b1_) * m_[i][j] + (1.0 - b1_) * g;
                double v = double(b2_) * v_[i][j] + (1.0 - b2_) * g * g;
                m_[i][j] = float(m);
                v_[i][j] = float(v);
                p.value[j] -= float(double(lr_) * (m / bc1) / (std::sqrt(v / bc2) + double(eps_)));
            }
        }
    }

  private:
    float lr_, b1_, b2_, eps_;
    long step_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

struct TrainState {
    UNet net;
    ParameterSet params;
    NoiseSchedule schedule;
    Adam opt;

    TrainState(const UNetConfig& cfg, const NoiseSchedule& s, float lr, RngState& init_rng)
        : net(cfg), params(net.init(init_rng)), schedule(s), opt(lr) {}
};

// One optimizer step; returns the pre-update loss. Gradients are zeroed
// before accumulation, never carried across steps.
inline double train_step(TrainState& st, const ImageBatch& x0_batch, RngState& rng) {
    std::vector<int> t(std::size_t(x0_batch.shape.n));
    for (auto& ti : t) ti = rng.next_int(1, st.schedule.T);
    ForwardSample fs = forward_closed_form(x0_batch, t, st.schedule, rng);

    UNet::Cache cache;
    ImageBatch eps_hat = st.net.forward(st.params, fs.x_t, t, cache);
    double loss = loss_simple(fs.eps, eps_hat);
    if (!std::isfinite(loss)) throw NumericError("train_step: non-finite loss");

    ImageBatch dl(eps_hat.shape);
    double inv_n = 2.0 / double(eps_hat.size());
    for (std::size_t i = 0; i < dl.data.size(); ++i)
        dl.data[i] = float(inv_n * (double(eps_hat.data[i]) - double(fs.eps.data[i])));

    st.params.zero_grad();
    st.net.backward(st.params, cache, dl);
    st.opt.update(st.params);
    return loss;
}

// -- checkpoint serialization ------------------------------------------------

namespace detail {

inline nlohmann::ordered_json unet_config_json(const UNetConfig& c) {
    return {{"in_channels", c.in_channels},
            {"base_width", c.base_width},
            {"level_widths", c.level_widths},
            {"blocks_per_level", c.blocks_per_level},
            {"time_embed_dim", c.time_embed_dim},
            {"image_h", c.image_h},
            {"image_w", c.image_w}};
}

inline UNetConfig unet_config_from_json(const nlohmann::ordered_json& j) {
    UNetConfig c;
    c.in_channels = j.at("in_channels").get<int>();
    c.base_width = j.at("base_width").get<int>();
    c.level_widths = j.at("level_widths").get<std::vector<int>>();
    c.blocks_per_level = j.at("blocks_per_level").get<int>();
    c.time_embed_dim = j.at("time_embed_dim").get<int>();
    c.image_h = j.at("image_h").get<int>();
    c.image_w = j.at("image_w").get<int>();
    return c;
}

}  // namespace detail

inline void checkpoint_save(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::ordered_json header;
    header["schedule"] = {{"kind", ckpt.schedule_kind},
                          {"T", ckpt.T},
                          {"beta_start", double(ckpt.beta_start)},
                          {"beta_end", double(ckpt.beta_end)}};
    header["unet"] = detail::unet_config_json(ckpt.unet);
    header["epoch"] = ckpt.epoch;
    header["loss"] = ckpt.loss;
    header["seed"] = ckpt.seed;
    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto& p : ckpt.params.params) {
        manifest.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", offset}});
        offset += p.size() * sizeof(float);
    }
    header["params"] = std::move(manifest);
    std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write("DFCK", 4);
    std::uint32_t version = ckpt.version;
    std::uint32_t hlen = std::uint32_t(hs.size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(hs.data(), std::streamsize(hs.size()));
    for (const auto& p : ckpt.params.params)
        out.write(reinterpret_cast<const char*>(p.value.data()),
                  std::streamsize(p.size() * sizeof(float)));
    if (!out) throw IoError("short write on checkpoint " + path);
}

inline Checkpoint checkpoint_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + path);

    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "DFCK", 4) != 0)
        throw FormatError("bad checkpoint magic at byte 0 in " + path);
    std::uint32_t version = 0, hlen = 0;
    if (!in.read(reinterpret_cast<char*>(&version), 4))
        throw FormatError("truncated checkpoint at byte 4 in " + path);
    if (version != 1)
        throw FormatError("unsupported checkpoint version at byte 4 in " + path);
    if (!in.read(reinterpret_cast<char*>(&hlen), 4))
        throw FormatError("truncated checkpoint at byte 8 in " + path);
    std::string hs(hlen, '\0');
    if (!in.read(hs.data(), hlen))
        throw FormatError("truncated checkpoint header at byte 12 in " + path);

    nlohmann::ordered_json header;
    try {
        header = nlohmann::ordered_json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("corrupt checkpoint header at byte 12 in " + path + ": " + e.what());
    }

    Checkpoint ckpt;
    ckpt.version = version;
    const auto& sj = header.at("schedule");
    ckpt.schedule_kind = sj.at("kind").get<std::string>();
    ckpt.T = sj.at("T").get<int>();
    ckpt.beta_start = float(sj.at("beta_start").get<double>());
    ckpt.beta_end = float(sj.at("beta_end").get<double>());
    ckpt.unet = detail::unet_config_from_json(header.at("unet"));
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.loss = header.at("loss").get<double>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();

    std::uint64_t data_start = 12 + std::uint64_t(hlen);
    for (const auto& pj : header.at("params")) {
        Param p;
        p.name = pj.at("name").get<std::string>();
        p.shape = pj.at("shape").get<std::vector<int>>();
        std::uint64_t offset = pj.at("offset").get<std::uint64_t>();
        p.value.resize(p.size());
        p.grad.assign(p.size(), 0.0f);
        in.seekg(std::streamoff(data_start + offset));
        if (!in.read(reinterpret_cast<char*>(p.value.data()),
                     std::streamsize(p.size() * sizeof(float))))
            throw FormatError("truncated checkpoint data at byte " +
                              std::to_string(data_start + offset) + " in " + path);
        ckpt.params.params.push_back(std::move(p));
    }
    return ckpt;
}

// -- full training run ---------------------------------------------------

inline std::pair<Checkpoint, std::vector<EpochRecord>> train(const TrainConfig& cfg,
                                                             const ImageBatch& corpus) {
    cfg.validate();
    if (corpus.shape.n < 1) throw CorpusError("train: empty corpus");

    std::string best_path;
    if (!cfg.checkpoint_dir.empty()) {
        std::filesystem::create_directories(cfg.checkpoint_dir);
        best_path = cfg.checkpoint_dir + "/best.ckpt";
        std::ofstream probe(best_path + ".probe", std::ios::binary | std::ios::trunc);
        if (!probe) throw IoError("checkpoint directory not writable: " + cfg.checkpoint_dir);
        probe.close();
        std::filesystem::remove(best_path + ".probe");
    }

    RngState master(cfg.seed);
    RngState init_rng = master.split();
    RngState shuffle_rng = master.split();
    RngState step_rng = master.split();

    NoiseSchedule schedule = linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    TrainState state(cfg.unet, schedule, cfg.learning_rate, init_rng);

    Checkpoint best;
    best.schedule_kind = "linear";
    best.T = cfg.T;
    best.beta_start = cfg.beta_start;
    best.beta_end = cfg.beta_end;
    best.unet = cfg.unet;
    best.seed = cfg.seed;
    best.loss = std::numeric_limits<double>::infinity();

    int n = corpus.shape.n;
    std::size_t per_item = corpus.size() / std::size_t(n);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::vector<EpochRecord> records;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < n; ++i) order[std::size_t(i)] = i;
        for (int i = n - 1; i > 0; --i)
            std::swap(order[std::size_t(i)], order[std::size_t(shuffle_rng.next_int(0, i))]);

        double loss_sum = 0.0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            int bn = std::min(cfg.batch_size, n - start);
            ImageBatch batch({bn, corpus.shape.c, corpus.shape.h, corpus.shape.w});
            for (int i = 0; i < bn; ++i)
                std::copy(corpus.data.begin() + order[std::size_t(start + i)] * per_item,
                          corpus.data.begin() + (order[std::size_t(start + i)] + 1) * per_item,
                          batch.data.begin() + std::size_t(i) * per_item);
            loss_sum += train_step(state, batch, step_rng) * bn;
        }
        double mean_loss = loss_sum / double(n);
        if (!std::isfinite(mean_loss))
            throw NumericError("train: non-finite epoch loss at epoch " + std::to_string(epoch));

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = mean_loss;
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (mean_loss < best.loss) {
            rec.is_best = true;
            best.loss = mean_loss;
            best.epoch = epoch;
            best.params = state.params;
            if (!best_path.empty()) checkpoint_save(best, best_path);
        }
        records.push_back(rec);
    }
    return {std::move(best), std::move(records)};
}

}  // namespace ddpm
