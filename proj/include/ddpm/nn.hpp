#pragma once

// Layer primitives with hand-written backward passes: convolution,
// transposed convolution, group normalization, SiLU and dense layers.
// Naive loops; desk-scale shapes keep this fast enough. Inner reductions
// accumulate in double.

#include <cmath>
#include <cstddef>
#include <vector>

#include "ddpm/core.hpp"

namespace ddpm::nn {

// ---- conv2d, weight (oc, ic, k, k) -------------------------------------

inline ImageBatch conv2d(const ImageBatch& x, const std::vector<float>& w,
                         const std::vector<float>& b, int oc, int k, int stride, int pad) {
    int n = x.shape.n, ic = x.shape.c, h = x.shape.h, wd = x.shape.w;
    int oh = (h + 2 * pad - k) / stride + 1;
    int ow = (wd + 2 * pad - k) / stride + 1;
    ImageBatch y({n, oc, oh, ow});
    for (int ni = 0; ni < n; ++ni)
        for (int co = 0; co < oc; ++co)
            for (int yo = 0; yo < oh; ++yo)
                for (int xo = 0; xo < ow; ++xo) {
                    double acc = b[co];
                    for (int ci = 0; ci < ic; ++ci)
                        for (int ky = 0; ky < k; ++ky) {
                            int yi = yo * stride - pad + ky;
                            if (yi < 0 || yi >= h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                int xi = xo * stride - pad + kx;
                                if (xi < 0 || xi >= wd) continue;
                                acc += double(x.at(ni, ci, yi, xi)) *
                                       double(w[((std::size_t(co) * ic + ci) * k + ky) * k + kx]);
                            }
                        }
                    y.at(ni, co, yo, xo) = float(acc);
                }
    return y;
}

inline void conv2d_backward(const ImageBatch& x, const std::vector<float>& w, int oc, int k,
                            int stride, int pad, const ImageBatch& dy, ImageBatch& dx,
                            std::vector<float>& dw, std::vector<float>& db) {
    int n = x.shape.n, ic = x.shape.c, h = x.shape.h, wd = x.shape.w;
    int oh = dy.shape.h, ow = dy.shape.w;
    dx = ImageBatch(x.shape);
    for (int ni = 0; ni < n; ++ni)
        for (int co = 0; co < oc; ++co)
            for (int yo = 0; yo < oh; ++yo)
                for (int xo = 0; xo < ow; ++xo) {
                    float g = dy.at(ni, co, yo, xo);
                    db[co] += g;
                    for (int ci = 0; ci < ic; ++ci)
                        for (int ky = 0; ky < k; ++ky) {
                            int yi = yo * stride - pad + ky;
                            if (yi < 0 || yi >= h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                int xi = xo * stride - pad + kx;
                                if (xi < 0 || xi >= wd) continue;
                                std::size_t wi = ((std::size_t(co) * ic + ci) * k + ky) * k + kx;
                                dw[wi] += x.at(ni, ci, yi, xi) * g;
                                dx.at(ni, ci, yi, xi) += w[wi] * g;
                            }
                        }
                }
}

// ---- transposed conv2d, kernel 2, stride 2, weight (ic, oc, 2, 2) -------

inline ImageBatch conv_transpose2d(const ImageBatch& x, const std::vector<float>& w,
                                   const std::vector<float>& b, int oc) {
    int n = x.shape.n, ic = x.shape.c, h = x.shape.h, wd = x.shape.w;
    ImageBatch y({n, oc, h * 2, wd * 2});
    for (int ni = 0; ni < n; ++ni)
        for (int co = 0; co < oc; ++co)
            for (std::size_t i = 0; i < std::size_t(y.shape.h) * y.shape.w; ++i)
                y.data[((std::size_t(ni) * oc + co) * y.shape.h * y.shape.w) + i] = b[co];
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < ic; ++ci)
            for (int yi = 0; yi < h; ++yi)
                for (int xi = 0; xi < wd; ++xi) {
                    float v = x.at(ni, ci, yi, xi);
                    for (int co = 0; co < oc; ++co)
                        for (int ky = 0; ky < 2; ++ky)
                            for (int kx = 0; kx < 2; ++kx)
                                y.at(ni, co, yi * 2 + ky, xi * 2 + kx) +=
                                    v * w[((std::size_t(ci) * oc + co) * 2 + ky) * 2 + kx];
                }
    return y;
}

inline void conv_transpose2d_backward(const ImageBatch& x, const std::vector<float>& w, int oc,
                                      const ImageBatch& dy, ImageBatch& dx,
                                      std::vector<float>& dw, std::vector<float>& db) {
    int n = x.shape.n, ic = x.shape.c, h = x.shape.h, wd = x.shape.w;
    dx = ImageBatch(x.shape);
    for (int ni = 0; ni < n; ++ni)
        for (int co = 0; co < oc; ++co)
            for (int yo = 0; yo < dy.shape.h; ++yo)
                for (int xo = 0; xo < dy.shape.w; ++xo)
                    db[co] += dy.at(ni, co, yo, xo);
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < ic; ++ci)
            for (int yi = 0; yi < h; ++yi)
                for (int xi = 0; xi < wd; ++xi) {
                    double acc = 0.0;
                    for (int co = 0; co < oc; ++co)
                        for (int ky = 0; ky < 2; ++ky)
                            for (int kx = 0; kx < 2; ++kx) {
                                std::size_t wi = ((std::size_t(ci) * oc + co) * 2 + ky) * 2 + kx;
                                float g = dy.at(ni, co, yi * 2 + ky, xi * 2 + kx);
                                dw[wi] += x.at(ni, ci, yi, xi) * g;
                                acc += double(w[wi]) * double(g);
                            }
                    dx.at(ni, ci, yi, xi) = float(acc);
                }
}

// ---- group normalization -------------------------------------------------

struct GroupNormCache {
    ImageBatch xhat;
    std::vector<float> invstd;  // n * groups
    int groups = 1;
};

inline ImageBatch group_norm(const ImageBatch& x, const std::vector<float>& gamma,
                             const std::vector<float>& beta, int groups, GroupNormCache* cache) {
    int n = x.shape.n, c = x.shape.c, h = x.shape.h, w = x.shape.w;
    if (c % groups != 0) throw ConfigError("group_norm: channels not divisible by groups");
    int cpg = c / groups;
    std::size_t m = std::size_t(cpg) * h * w;
    const double eps = 1e-5;

    ImageBatch y(x.shape);
    ImageBatch xhat(x.shape);
    std::vector<float> invstd(std::size_t(n) * groups);
    for (int ni = 0; ni < n; ++ni)
        for (int g = 0; g < groups; ++g) {
            double mean = 0.0;
            for (int ci = g * cpg; ci < (g + 1) * cpg; ++ci)
                for (int yi = 0; yi < h; ++yi)
                    for (int xi = 0; xi < w; ++xi) mean += x.at(ni, ci, yi, xi);
            mean /= double(m);
            double var = 0.0;
            for (int ci = g * cpg; ci < (g + 1) * cpg; ++ci)
                for (int yi = 0; yi < h; ++yi)
                    for (int xi = 0; xi < w; ++xi) {
                        double d = x.at(ni, ci, yi, xi) - mean;
                        var += d * d;
                    }
            var /= double(m);
            double is = 1.0 / std::sqrt(var + eps);
            invstd[std::size_t(ni) * groups + g] = float(is);
            for (int ci = g * cpg; ci < (g + 1) * cpg; ++ci)
                for (int yi = 0; yi < h; ++yi)
                    for (int xi = 0; xi < w; ++xi) {
                        float xh = float((x.at(ni, ci, yi, xi) - mean) * is);
                        xhat.at(ni, ci, yi, xi) = xh;
                        y.at(ni, ci, yi, xi) = gamma[ci] * xh + beta[ci];
                    }
        }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->invstd = std::move(invstd);
        cache->groups = groups;
    }
    return y;
}

inline ImageBatch group_norm_backward(const ImageBatch& dy, const GroupNormCache& cache,
                                      const std::vector<float>& gamma, std::vector<float>& dgamma,
                                      std::vector<float>& dbeta) {
    const ImageBatch& xhat = cache.xhat;
    int n = xhat.shape.n, c = xhat.shape.c, h = xhat.shape.h, w = xhat.shape.w;
    int groups = cache.groups, cpg = c / groups;
    double m = double(cpg) * h * w;

    ImageBatch dx(xhat.shape);
    for (int ni = 0; ni < n; ++ni)
        for (int g = 0; g < groups; ++g) {
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int ci = g * cpg; ci < (g + 1) * cpg; ++ci)
                for (int yi = 0; yi < h; ++yi)
                    for (int xi = 0; xi < w; ++xi) {
                        float gy = dy.at(ni, ci, yi, xi);
                        float xh = xhat.at(ni, ci, yi, xi);
                        dgamma[ci] += gy * xh;
                        dbeta[ci] += gy;
                        double dxh = double(gy) * gamma[ci];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh;
                    }
            double is = cache.invstd[std::size_t(ni) * groups + g];
            for (int ci = g * cpg; ci < (g + 1) * cpg; ++ci)
                for (int yi = 0; yi < h; ++yi)
                    for (int xi = 0; xi < w; ++xi) {
                        double dxh = double(dy.at(ni, ci, yi, xi)) * gamma[ci];
                        double xh = xhat.at(ni, ci, yi, xi);
                        dx.at(ni, ci, yi, xi) =
                            float(is / m * (m * dxh - sum_dxhat - xh * sum_dxhat_xhat));
                    }
        }
    return dx;
}

// ---- SiLU -----------------------------------------------------------------

inline ImageBatch silu(const ImageBatch& x) {
    ImageBatch y(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-double(x.data[i])));
        y.data[i] = float(double(x.data[i]) * s);
    }
    return y;
}

// dy/dx = s(x) * (1 + x * (1 - s(x))), x is the pre-activation input.
inline ImageBatch silu_backward(const ImageBatch& dy, const ImageBatch& x) {
    ImageBatch dx(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-double(x.data[i])));
        dx.data[i] = float(double(dy.data[i]) * s * (1.0 + double(x.data[i]) * (1.0 - s)));
    }
    return dx;
}

// ---- dense layer on (n, d) rows, weight (dout, din) -----------------------

struct Rows {
    int n = 0, d = 0;
    std::vector<float> v;

    Rows() = default;
    Rows(int n_, int d_) : n(n_), d(d_), v(std::size_t(n_) * d_, 0.0f) {}
    float& at(int i, int j) { return v[std::size_t(i) * d + j]; }
    float at(int i, int j) const { return v[std::size_t(i) * d + j]; }
};

inline Rows linear(const Rows& x, const std::vector<float>& w, const std::vector<float>& b, int dout) {
    Rows y(x.n, dout);
    for (int i = 0; i < x.n; ++i)
        for (int o = 0; o < dout; ++o) {
            double acc = b[o];
            for (int j = 0; j < x.d; ++j)
                acc += double(x.at(i, j)) * double(w[std::size_t(o) * x.d + j]);
            y.at(i, o) = float(acc);
        }
    return y;
}

inline Rows linear_backward(const Rows& x, const std::vector<float>& w, int dout, const Rows& dy,
                            std::vector<float>& dw, std::vector<float>& db) {
    Rows dx(x.n, x.d);
    for (int i = 0; i < x.n; ++i)
        for (int o = 0; o < dout; ++o) {
            float g = dy.at(i, o);
            db[o] += g;
            for (int j = 0; j < x.d; ++j) {
                dw[std::size_t(o) * x.d + j] += x.at(i, j) * g;
                dx.at(i, j) += w[std::size_t(o) * x.d + j] * g;
            }
        }
    return dx;
}

inline Rows silu_rows(const Rows& x) {
    Rows y(x.n, x.d);
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-double(x.v[i])));
        y.v[i] = float(double(x.v[i]) * s);
    }
    return y;
}

inline Rows silu_rows_backward(const Rows& dy, const Rows& x) {
    Rows dx(x.n, x.d);
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-double(x.v[i])));
        dx.v[i] = float(double(dy.v[i]) * s * (1.0 + double(x.v[i]) * (1.0 - s)));
    }
    return dx;
}

}  // namespace ddpm::nn
