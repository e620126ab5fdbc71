#pragma once

// Time-conditioned UNet epsilon-predictor with a hand-written backward pass.
//
// Recipe: stem 3x3 conv; per resolution level, blocks_per_level residual
// blocks of [group norm -> SiLU -> 3x3 conv] twice with additive skip and a
// per-block time projection added channelwise after the first conv; stride-2
// conv downsampling; stride-2 transposed-conv upsampling with encoder
// features concatenated at matching resolutions; group norm + SiLU + 1x1
// conv (zero-initialized) down to one channel.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "ddpm/core.hpp"
#include "ddpm/denoiser.hpp"
#include "ddpm/nn.hpp"
#include "ddpm/rng.hpp"

namespace ddpm {

struct UNetConfig {
    int in_channels = 1;
    int base_width = 32;
    std::vector<int> level_widths = {32, 64, 128};
    int blocks_per_level = 2;
    int time_embed_dim = 64;
    int image_h = 32;
    int image_w = 32;

    int levels() const { return int(level_widths.size()); }

    void validate() const {
        if (in_channels != 1) throw ConfigError("unet: in_channels must be 1");
        if (level_widths.empty()) throw ConfigError("unet: level_widths must be non-empty");
        if (blocks_per_level < 1) throw ConfigError("unet: blocks_per_level must be >= 1");
        if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
            throw ConfigError("unet: time_embed_dim must be even and >= 2");
        int div = 1 << (levels() - 1);
        if (image_h % div != 0 || image_w % div != 0)
            throw ConfigError("unet: image size must be divisible by 2^(levels-1)");
        if (image_h / div < 2 || image_w / div < 2)
            throw ConfigError("unet: bottleneck resolution must be at least 2x2");
        for (int w : level_widths) {
            if (w < 1) throw ConfigError("unet: level widths must be >= 1");
            int g = std::min(8, w);
            if (w % g != 0 || (2 * w) % std::min(8, 2 * w) != 0)
                throw ConfigError("unet: level widths must be divisible by their group count");
        }
    }
};

// Named, ordered parameter arrays. Iteration order is fixed at construction
// and is the checkpoint contract.
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<float> value;
    std::vector<float> grad;

    std::size_t size() const {
        std::size_t s = 1;
        for (int d : shape) s *= std::size_t(d);
        return s;
    }
};

struct ParameterSet {
    std::vector<Param> params;

    std::size_t count() const {
        std::size_t s = 0;
        for (const auto& p : params) s += p.size();
        return s;
    }
    void zero_grad() {
        for (auto& p : params)
            std::fill(p.grad.begin(), p.grad.end(), 0.0f);
    }
    const Param* find(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return &p;
        return nullptr;
    }
};

class UNet {
  public:
    explicit UNet(UNetConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        build_layout();
    }

    const UNetConfig& config() const { return cfg_; }

    // Prototype with all shapes and canonical names, values zeroed.
    ParameterSet layout() const { return layout_; }

    // Total parameter count. Sum over the layout; per layer:
    //   conv (oc,ic,k,k): oc*ic*k*k + oc     dense (dout,din): dout*din + dout
    //   group norm: 2*c                      transposed conv (ic,oc,2,2): ic*oc*4 + oc
    std::size_t parameter_count() const { return layout_.count(); }

    // Kaiming-uniform fan-in init for conv/dense weights, unit gamma / zero
    // beta for norms, zeros for the output conv so the fresh model predicts 0.
    ParameterSet init(RngState& rng) const {
        ParameterSet ps = layout_;
        for (auto& p : ps.params) {
            bool is_weight = p.name.ends_with(".weight");
            if (p.name == "out.conv.weight" || p.name == "out.conv.bias") continue;
            if (p.name.ends_with(".gamma")) {
                std::fill(p.value.begin(), p.value.end(), 1.0f);
            } else if (is_weight) {
                std::size_t fan_in = 1;
                for (std::size_t d = 1; d < p.shape.size(); ++d) fan_in *= std::size_t(p.shape[d]);
                if (p.name.starts_with("up")) fan_in = std::size_t(p.shape[0]);  // (ic,oc,2,2), stride 2
                float bound = float(std::sqrt(6.0 / double(fan_in)));
                for (auto& v : p.value) v = (2.0f * float(rng.next_unit()) - 1.0f) * bound;
            }
            // biases and beta stay zero
        }
        return ps;
    }

    struct Cache;

    ImageBatch forward(const ParameterSet& ps, const ImageBatch& x, const std::vector<int>& t,
                       Cache& cache) const;
    void backward(ParameterSet& ps, const Cache& cache, const ImageBatch& dLdy) const;

    ImageBatch predict(const ParameterSet& ps, const ImageBatch& x, const std::vector<int>& t) const {
        Cache cache;
        return forward(ps, x, t, cache);
    }

  private:
    struct Conv {
        int w = -1, b = -1;
        int oc = 0, k = 3, stride = 1, pad = 1;
    };
    struct ConvT {
        int w = -1, b = -1;
        int oc = 0;
    };
    struct GN {
        int g = -1, b = -1;
        int groups = 1;
    };
    struct Lin {
        int w = -1, b = -1;
        int dout = 0;
    };
    struct Res {
        GN gn1;
        Conv conv1;
        Lin temb;
        GN gn2;
        Conv conv2;
        bool has_skip = false;
        Conv skip;
    };

  public:
    struct ResCache {
        ImageBatch x;
        nn::GroupNormCache gn1;
        ImageBatch g1, s1;
        nn::GroupNormCache gn2;
        ImageBatch g2, s2;
    };
    struct Cache {
        nn::Rows emb0, a1, a1s, temb;
        ImageBatch x;
        std::vector<std::vector<ResCache>> enc, dec;
        std::vector<ImageBatch> down_in;  // encoder level outputs (the skips)
        std::vector<ImageBatch> up_in;    // transposed-conv inputs per decoder stage
        nn::GroupNormCache out_gn;
        ImageBatch g_out, s_out;
    };

  private:
    static int group_count(int channels) { return std::min(8, channels); }

    int add_param(std::string name, std::vector<int> shape) {
        Param p;
        p.name = std::move(name);
        p.shape = std::move(shape);
        p.value.assign(p.size(), 0.0f);
        p.grad.assign(p.size(), 0.0f);
        layout_.params.push_back(std::move(p));
        return int(layout_.params.size()) - 1;
    }
    Conv add_conv(const std::string& name, int ic, int oc, int k, int stride, int pad) {
        Conv c;
        c.oc = oc;
        c.k = k;
        c.stride = stride;
        c.pad = pad;
        c.w = add_param(name + ".weight", {oc, ic, k, k});
        c.b = add_param(name + ".bias", {oc});
        return c;
    }
    ConvT add_convt(const std::string& name, int ic, int oc) {
        ConvT c;
        c.oc = oc;
        c.w = add_param(name + ".weight", {ic, oc, 2, 2});
        c.b = add_param(name + ".bias", {oc});
        return c;
    }
    GN add_gn(const std::string& name, int channels) {
        GN g;
        g.groups = group_count(channels);
        g.g = add_param(name + ".gamma", {channels});
        g.b = add_param(name + ".beta", {channels});
        return g;
    }
    Lin add_lin(const std::string& name, int din, int dout) {
        Lin l;
        l.dout = dout;
        l.w = add_param(name + ".weight", {dout, din});
        l.b = add_param(name + ".bias", {dout});
        return l;
    }
    Res add_res(const std::string& name, int ic, int oc) {
        Res r;
        r.gn1 = add_gn(name + ".gn1", ic);
        r.conv1 = add_conv(name + ".conv1", ic, oc, 3, 1, 1);
        r.temb = add_lin(name + ".temb", cfg_.time_embed_dim, oc);
        r.gn2 = add_gn(name + ".gn2", oc);
        r.conv2 = add_conv(name + ".conv2", oc, oc, 3, 1, 1);
        if (ic != oc) {
            r.has_skip = true;
            r.skip = add_conv(name + ".skip", ic, oc, 1, 1, 0);
        }
        return r;
    }

    void build_layout() {
        int D = cfg_.time_embed_dim;
        int L = cfg_.levels();
        const auto& W = cfg_.level_widths;

        mlp1_ = add_lin("time_mlp.fc1", D, D);
        mlp2_ = add_lin("time_mlp.fc2", D, D);
        stem_ = add_conv("stem", cfg_.in_channels, W[0], 3, 1, 1);

        enc_.resize(L);
        for (int l = 0; l < L; ++l) {
            int ic = (l == 0) ? W[0] : W[l - 1];
            for (int b = 0; b < cfg_.blocks_per_level; ++b) {
                std::string name = "enc" + std::to_string(l) + ".block" + std::to_string(b);
                enc_[l].push_back(add_res(name, b == 0 ? ic : W[l], W[l]));
            }
            if (l < L - 1)
                down_.push_back(add_conv("down" + std::to_string(l), W[l], W[l], 3, 2, 1));
        }
        for (int l = L - 2; l >= 0; --l) {
            up_.push_back(add_convt("up" + std::to_string(l), (l == L - 2) ? W[L - 1] : W[l + 1], W[l]));
            std::vector<Res> blocks;
            for (int b = 0; b < cfg_.blocks_per_level; ++b) {
                std::string name = "dec" + std::to_string(l) + ".block" + std::to_string(b);
                blocks.push_back(add_res(name, b == 0 ? 2 * W[l] : W[l], W[l]));
            }
            dec_.push_back(std::move(blocks));
        }
        out_gn_ = add_gn("out.gn", W[0]);
        out_conv_ = add_conv("out.conv", W[0], cfg_.in_channels, 1, 1, 0);
    }

    // -- forward/backward helpers -------------------------------------------

    const std::vector<float>& val(const ParameterSet& ps, int i) const { return ps.params[i].value; }
    std::vector<float>& grad(ParameterSet& ps, int i) const { return ps.params[i].grad; }

    ImageBatch conv_fwd(const ParameterSet& ps, const Conv& c, const ImageBatch& x) const {
        return nn::conv2d(x, val(ps, c.w), val(ps, c.b), c.oc, c.k, c.stride, c.pad);
    }
    ImageBatch conv_bwd(ParameterSet& ps, const Conv& c, const ImageBatch& x,
                        const ImageBatch& dy) const {
        ImageBatch dx;
        nn::conv2d_backward(x, val(ps, c.w), c.oc, c.k, c.stride, c.pad, dy, dx, grad(ps, c.w),
                            grad(ps, c.b));
        return dx;
    }

    ImageBatch res_fwd(const ParameterSet& ps, const Res& r, const ImageBatch& x,
                       const nn::Rows& temb, ResCache& cc) const {
        cc.x = x;
        cc.g1 = nn::group_norm(x, val(ps, r.gn1.g), val(ps, r.gn1.b), r.gn1.groups, &cc.gn1);
        cc.s1 = nn::silu(cc.g1);
        ImageBatch h = conv_fwd(ps, r.conv1, cc.s1);
        nn::Rows tp = nn::linear(temb, val(ps, r.temb.w), val(ps, r.temb.b), r.temb.dout);
        for (int n = 0; n < h.shape.n; ++n)
            for (int c = 0; c < h.shape.c; ++c) {
                float add = tp.at(n, c);
                for (int y = 0; y < h.shape.h; ++y)
                    for (int x2 = 0; x2 < h.shape.w; ++x2) h.at(n, c, y, x2) += add;
            }
        cc.g2 = nn::group_norm(h, val(ps, r.gn2.g), val(ps, r.gn2.b), r.gn2.groups, &cc.gn2);
        cc.s2 = nn::silu(cc.g2);
        ImageBatch out = conv_fwd(ps, r.conv2, cc.s2);
        if (r.has_skip) {
            ImageBatch sk = conv_fwd(ps, r.skip, x);
            for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += sk.data[i];
        } else {
            for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += x.data[i];
        }
        return out;
    }

    ImageBatch res_bwd(ParameterSet& ps, const Res& r, const ResCache& cc, const nn::Rows& temb,
                       const ImageBatch& dout, nn::Rows& dtemb) const {
        ImageBatch ds2 = conv_bwd(ps, r.conv2, cc.s2, dout);
        ImageBatch dg2 = nn::silu_backward(ds2, cc.g2);
        ImageBatch dh = nn::group_norm_backward(dg2, cc.gn2, val(ps, r.gn2.g), grad(ps, r.gn2.g),
                                                grad(ps, r.gn2.b));
        nn::Rows dtp(dh.shape.n, dh.shape.c);
        for (int n = 0; n < dh.shape.n; ++n)
            for (int c = 0; c < dh.shape.c; ++c) {
                double acc = 0.0;
                for (int y = 0; y < dh.shape.h; ++y)
                    for (int x2 = 0; x2 < dh.shape.w; ++x2) acc += dh.at(n, c, y, x2);
                dtp.at(n, c) = float(acc);
            }
        nn::Rows dt = nn::linear_backward(temb, val(ps, r.temb.w), r.temb.dout, dtp,
                                          grad(ps, r.temb.w), grad(ps, r.temb.b));
        for (std::size_t i = 0; i < dtemb.v.size(); ++i) dtemb.v[i] += dt.v[i];

        ImageBatch ds1 = conv_bwd(ps, r.conv1, cc.s1, dh);
        ImageBatch dg1 = nn::silu_backward(ds1, cc.g1);
        ImageBatch dx = nn::group_norm_backward(dg1, cc.gn1, val(ps, r.gn1.g), grad(ps, r.gn1.g),
                                                grad(ps, r.gn1.b));
        if (r.has_skip) {
            ImageBatch dxs = conv_bwd(ps, r.skip, cc.x, dout);
            for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dxs.data[i];
        } else {
            for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dout.data[i];
        }
        return dx;
    }

    UNetConfig cfg_;
    ParameterSet layout_;
    Lin mlp1_, mlp2_;
    Conv stem_;
    std::vector<std::vector<Res>> enc_;
    std::vector<Conv> down_;
    std::vector<ConvT> up_;            // stage s handles level L-2-s
    std::vector<std::vector<Res>> dec_;
    GN out_gn_;
    Conv out_conv_;
};

inline ImageBatch UNet::forward(const ParameterSet& ps, const ImageBatch& x,
                                const std::vector<int>& t, Cache& cache) const {
    if (x.shape.h != cfg_.image_h || x.shape.w != cfg_.image_w || x.shape.c != cfg_.in_channels)
        throw ShapeError("unet: input shape " + x.shape.str() + " does not match config");
    if (int(t.size()) != x.shape.n)
        throw ShapeError("unet: need one timestep per batch item");
    if (ps.count() != layout_.count())
        throw ConfigError("unet: parameter set does not match this config");

    int L = cfg_.levels();
    TimeEmbedding emb = sinusoidal_embedding(t, cfg_.time_embed_dim);
    cache.emb0 = nn::Rows(emb.n, emb.dim);
    cache.emb0.v = emb.values;
    cache.a1 = nn::linear(cache.emb0, val(ps, mlp1_.w), val(ps, mlp1_.b), mlp1_.dout);
    cache.a1s = nn::silu_rows(cache.a1);
    cache.temb = nn::linear(cache.a1s, val(ps, mlp2_.w), val(ps, mlp2_.b), mlp2_.dout);

    cache.x = x;
    ImageBatch h = conv_fwd(ps, stem_, x);

    cache.enc.assign(L, {});
    cache.down_in.clear();
    for (int l = 0; l < L; ++l) {
        for (const Res& r : enc_[l]) {
            cache.enc[l].emplace_back();
            h = res_fwd(ps, r, h, cache.temb, cache.enc[l].back());
        }
        if (l < L - 1) {
            cache.down_in.push_back(h);
            h = conv_fwd(ps, down_[l], h);
        }
    }

    cache.dec.assign(dec_.size(), {});
    cache.up_in.clear();
    for (std::size_t s = 0; s < up_.size(); ++s) {
        int l = L - 2 - int(s);
        cache.up_in.push_back(h);
        ImageBatch u = nn::conv_transpose2d(h, val(ps, up_[s].w), val(ps, up_[s].b), up_[s].oc);
        const ImageBatch& skip = cache.down_in[l];
        ImageBatch cat({u.shape.n, u.shape.c + skip.shape.c, u.shape.h, u.shape.w});
        for (int n = 0; n < cat.shape.n; ++n) {
            for (int c = 0; c < u.shape.c; ++c)
                for (int y = 0; y < cat.shape.h; ++y)
                    for (int x2 = 0; x2 < cat.shape.w; ++x2)
                        cat.at(n, c, y, x2) = u.at(n, c, y, x2);
            for (int c = 0; c < skip.shape.c; ++c)
                for (int y = 0; y < cat.shape.h; ++y)
                    for (int x2 = 0; x2 < cat.shape.w; ++x2)
                        cat.at(n, u.shape.c + c, y, x2) = skip.at(n, c, y, x2);
        }
        h = cat;
        for (const Res& r : dec_[s]) {
            cache.dec[s].emplace_back();
            h = res_fwd(ps, r, h, cache.temb, cache.dec[s].back());
        }
    }

    cache.g_out = nn::group_norm(h, val(ps, out_gn_.g), val(ps, out_gn_.b), out_gn_.groups,
                                 &cache.out_gn);
    cache.s_out = nn::silu(cache.g_out);
    return conv_fwd(ps, out_conv_, cache.s_out);
}

inline void UNet::backward(ParameterSet& ps, const Cache& cache, const ImageBatch& dLdy) const {
    int L = cfg_.levels();
    nn::Rows dtemb(cache.temb.n, cache.temb.d);

    ImageBatch ds = conv_bwd(ps, out_conv_, cache.s_out, dLdy);
    ImageBatch dg = nn::silu_backward(ds, cache.g_out);
    ImageBatch dh = nn::group_norm_backward(dg, cache.out_gn, val(ps, out_gn_.g),
                                            grad(ps, out_gn_.g), grad(ps, out_gn_.b));

    std::vector<ImageBatch> dskip(std::size_t(L > 0 ? L - 1 : 0));
    for (int s = int(up_.size()) - 1; s >= 0; --s) {
        int l = L - 2 - s;
        for (int b = int(dec_[s].size()) - 1; b >= 0; --b)
            dh = res_bwd(ps, dec_[s][b], cache.dec[s][b], cache.temb, dh, dtemb);
        // split the concat gradient: first half -> transposed conv, second -> skip
        int uc = up_[s].oc;
        ImageBatch du({dh.shape.n, uc, dh.shape.h, dh.shape.w});
        ImageBatch dsk({dh.shape.n, dh.shape.c - uc, dh.shape.h, dh.shape.w});
        for (int n = 0; n < dh.shape.n; ++n)
            for (int y = 0; y < dh.shape.h; ++y)
                for (int x2 = 0; x2 < dh.shape.w; ++x2) {
                    for (int c = 0; c < uc; ++c) du.at(n, c, y, x2) = dh.at(n, c, y, x2);
                    for (int c = 0; c < dsk.shape.c; ++c)
                        dsk.at(n, c, y, x2) = dh.at(n, uc + c, y, x2);
                }
        dskip[l] = std::move(dsk);
        ImageBatch dup;
        nn::conv_transpose2d_backward(cache.up_in[s], val(ps, up_[s].w), up_[s].oc, du, dup,
                                      grad(ps, up_[s].w), grad(ps, up_[s].b));
        dh = std::move(dup);
    }

    for (int l = L - 1; l >= 0; --l) {
        if (l < L - 1) {
            dh = conv_bwd(ps, down_[l], cache.down_in[l], dh);
            for (std::size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += dskip[l].data[i];
        }
        for (int b = int(enc_[l].size()) - 1; b >= 0; --b)
            dh = res_bwd(ps, enc_[l][b], cache.enc[l][b], cache.temb, dh, dtemb);
    }
    conv_bwd(ps, stem_, cache.x, dh);

    nn::Rows da1s = nn::linear_backward(cache.a1s, val(ps, mlp2_.w), mlp2_.dout, dtemb,
                                        grad(ps, mlp2_.w), grad(ps, mlp2_.b));
    nn::Rows da1 = nn::silu_rows_backward(da1s, cache.a1);
    nn::linear_backward(cache.emb0, val(ps, mlp1_.w), mlp1_.dout, da1, grad(ps, mlp1_.w),
                        grad(ps, mlp1_.b));
}

inline ParameterSet unet_init(const UNetConfig& cfg, RngState& rng) {
    return UNet(cfg).init(rng);
}

inline ImageBatch unet_predict(const ParameterSet& ps, const UNetConfig& cfg, const ImageBatch& x,
                               const std::vector<int>& t) {
    return UNet(cfg).predict(ps, x, t);
}

// Denoiser adapter over a frozen parameter set.
class UNetDenoiser : public Denoiser {
  public:
    UNetDenoiser(UNetConfig cfg, ParameterSet params)
        : net_(std::move(cfg)), params_(std::move(params)) {}

    ImageBatch predict(const ImageBatch& x_t, const std::vector<int>& t) const override {
        return net_.predict(params_, x_t, t);
    }

    const UNet& net() const { return net_; }
    const ParameterSet& params() const { return params_; }

  private:
    UNet net_;
    ParameterSet params_;
};

}  // namespace ddpm
