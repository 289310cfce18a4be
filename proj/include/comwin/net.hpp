#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "comwin/core.hpp"
#include "comwin/dsbe.hpp"
#include "comwin/rng.hpp"

namespace comwin {

// Small NCHW tensor/layer stack purpose-built for the segmentation backbone.
// Every layer keeps what its hand-written backward pass needs; everything is
// templated on the scalar so training runs in f32 and gradient checks in f64.

template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

    size_t plane() const { return static_cast<size_t>(h) * w; }
    size_t size() const { return v.size(); }
    T* p(int in, int ic) { return v.data() + (static_cast<size_t>(in) * c + ic) * plane(); }
    const T* p(int in, int ic) const {
        return v.data() + (static_cast<size_t>(in) * c + ic) * plane();
    }
    T& at(int in, int ic, int y, int x) { return p(in, ic)[static_cast<size_t>(y) * w + x]; }
    const T& at(int in, int ic, int y, int x) const {
        return p(in, ic)[static_cast<size_t>(y) * w + x];
    }
    void zero() { std::fill(v.begin(), v.end(), T(0)); }
    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

enum class Mode { train, eval };

template <typename T>
struct ParamView {
    std::string name;
    std::vector<T>* value = nullptr;
    std::vector<T>* grad = nullptr;  // null for non-trainable state arrays
    std::vector<int> shape;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename T>
struct Conv2d {
    int cin = 0, cout = 0, ksize = 3;
    bool has_bias = false;
    std::vector<T> weight, wgrad;
    std::vector<T> bias, bgrad;
    Tensor4<T> x_;  // saved input

    void init(int cin_, int cout_, int ksize_, bool bias_, Rng& rng) {
        cin = cin_;
        cout = cout_;
        ksize = ksize_;
        has_bias = bias_;
        const size_t nw = static_cast<size_t>(cout) * cin * ksize * ksize;
        weight.resize(nw);
        wgrad.assign(nw, T(0));
        const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * ksize * ksize));
        for (auto& x : weight) x = static_cast<T>(rng.uniform(-bound, bound));
        if (has_bias) {
            bias.assign(static_cast<size_t>(cout), T(0));
            bgrad.assign(static_cast<size_t>(cout), T(0));
        }
    }

    Tensor4<T> forward(const Tensor4<T>& x, bool save) {
        if (x.c != cin) throw std::invalid_argument("conv input channel mismatch");
        if (save) x_ = x;
        Tensor4<T> y(x.n, cout, x.h, x.w);
        if (ksize == 1) {
            const size_t plane = x.plane();
            for (int in = 0; in < x.n; ++in)
                for (int co = 0; co < cout; ++co) {
                    T* yp = y.p(in, co);
                    if (has_bias)
                        std::fill(yp, yp + plane, bias[co]);
                    for (int ci = 0; ci < cin; ++ci) {
                        const T wv = weight[static_cast<size_t>(co) * cin + ci];
                        const T* xp = x.p(in, ci);
                        for (size_t k = 0; k < plane; ++k) yp[k] += wv * xp[k];
                    }
                }
            return y;
        }
        // 3x3, padding 1: fused row kernel, one write pass per (co, ci).
        const int h = x.h, w = x.w;
        for (int in = 0; in < x.n; ++in)
            for (int co = 0; co < cout; ++co) {
                T* yp = y.p(in, co);
                if (has_bias)
                    std::fill(yp, yp + x.plane(), bias[co]);
                for (int ci = 0; ci < cin; ++ci) {
                    const T* xp = x.p(in, ci);
                    const T* w9 = weight.data() + (static_cast<size_t>(co) * cin + ci) * 9;
                    accumulate_correlation(xp, w9, yp, h, w);
                }
            }
        return y;
    }

    /// y += correlate(x, w3x3) with zero padding, single pass per row.
    static void accumulate_correlation(const T* xp, const T* w9, T* yp, int h, int w) {
        for (int yy = 0; yy < h; ++yy) {
            const T* r0 = yy > 0 ? xp + static_cast<size_t>(yy - 1) * w : nullptr;
            const T* r1 = xp + static_cast<size_t>(yy) * w;
            const T* r2 = yy + 1 < h ? xp + static_cast<size_t>(yy + 1) * w : nullptr;
            T* yrow = yp + static_cast<size_t>(yy) * w;
            // interior columns
            if (r0 && r2) {
                for (int xx = 1; xx < w - 1; ++xx)
                    yrow[xx] += w9[0] * r0[xx - 1] + w9[1] * r0[xx] + w9[2] * r0[xx + 1] +
                                w9[3] * r1[xx - 1] + w9[4] * r1[xx] + w9[5] * r1[xx + 1] +
                                w9[6] * r2[xx - 1] + w9[7] * r2[xx] + w9[8] * r2[xx + 1];
            } else {
                // top (no r0) or bottom (no r2) row: two source rows
                const T* s0 = r0 ? r0 : r1;
                const T* s1 = r0 ? r1 : r2;
                const T* w_top = r0 ? w9 : w9 + 3;
                const T* w_bot = r0 ? w9 + 3 : w9 + 6;
                for (int xx = 1; xx < w - 1; ++xx)
                    yrow[xx] += w_top[0] * s0[xx - 1] + w_top[1] * s0[xx] + w_top[2] * s0[xx + 1] +
                                w_bot[0] * s1[xx - 1] + w_bot[1] * s1[xx] + w_bot[2] * s1[xx + 1];
            }
            // edge columns
            for (int xx : {0, w - 1}) {
                T acc = T(0);
                for (int ky = 0; ky < 3; ++ky) {
                    const T* row = ky == 0 ? r0 : (ky == 1 ? r1 : r2);
                    if (!row) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int sx = xx + kx - 1;
                        if (sx < 0 || sx >= w) continue;
                        acc += w9[ky * 3 + kx] * row[sx];
                    }
                }
                yrow[xx] += acc;
            }
        }
    }

    Tensor4<T> backward(const Tensor4<T>& dy) {
        Tensor4<T> dx(x_.n, cin, x_.h, x_.w);
        const int h = x_.h, w = x_.w;
        const size_t plane = x_.plane();
        if (ksize == 1) {
            for (int in = 0; in < x_.n; ++in)
                for (int co = 0; co < cout; ++co) {
                    const T* dyp = dy.p(in, co);
                    if (has_bias) {
                        T acc = T(0);
                        for (size_t k = 0; k < plane; ++k) acc += dyp[k];
                        bgrad[co] += acc;
                    }
                    for (int ci = 0; ci < cin; ++ci) {
                        const T* xp = x_.p(in, ci);
                        T* dxp = dx.p(in, ci);
                        const T wv = weight[static_cast<size_t>(co) * cin + ci];
                        T acc = T(0);
                        for (size_t k = 0; k < plane; ++k) {
                            acc += dyp[k] * xp[k];
                            dxp[k] += wv * dyp[k];
                        }
                        wgrad[static_cast<size_t>(co) * cin + ci] += acc;
                    }
                }
            return dx;
        }
        for (int in = 0; in < x_.n; ++in)
            for (int co = 0; co < cout; ++co) {
                const T* dyp = dy.p(in, co);
                if (has_bias) {
                    T acc = T(0);
                    for (size_t k = 0; k < plane; ++k) acc += dyp[k];
                    bgrad[co] += acc;
                }
                for (int ci = 0; ci < cin; ++ci) {
                    const T* xp = x_.p(in, ci);
                    const T* w9 = weight.data() + (static_cast<size_t>(co) * cin + ci) * 9;
                    T* g9 = wgrad.data() + (static_cast<size_t>(co) * cin + ci) * 9;

                    // dx += correlate(dy, rot180(w))
                    T wrot[9];
                    for (int k = 0; k < 9; ++k) wrot[k] = w9[8 - k];
                    accumulate_correlation(dyp, wrot, dx.p(in, ci), h, w);

                    // dw[ky][kx] += sum dy[y][x] * x[y+ky-1][x+kx-1]
                    for (int ky = 0; ky < 3; ++ky) {
                        const int sy = ky - 1;
                        const int ylo = std::max(0, -sy), yhi = h - 1 - std::max(0, sy);
                        T a0 = T(0), a1 = T(0), a2 = T(0);
                        for (int yy = ylo; yy <= yhi; ++yy) {
                            const T* xrow = xp + static_cast<size_t>(yy + sy) * w;
                            const T* dyrow = dyp + static_cast<size_t>(yy) * w;
                            T s0 = T(0), s1 = T(0), s2 = T(0);
                            for (int xx = 1; xx < w - 1; ++xx) {
                                const T d = dyrow[xx];
                                s0 += d * xrow[xx - 1];
                                s1 += d * xrow[xx];
                                s2 += d * xrow[xx + 1];
                            }
                            // edge columns
                            s1 += dyrow[0] * xrow[0] + dyrow[w - 1] * xrow[w - 1];
                            s2 += dyrow[0] * xrow[1];
                            s0 += dyrow[w - 1] * xrow[w - 2];
                            a0 += s0;
                            a1 += s1;
                            a2 += s2;
                        }
                        g9[ky * 3] += a0;
                        g9[ky * 3 + 1] += a1;
                        g9[ky * 3 + 2] += a2;
                    }
                }
            }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamView<T>>& out) {
        out.push_back({prefix + ".weight", &weight, &wgrad, {cout, cin, ksize, ksize}});
        if (has_bias) out.push_back({prefix + ".bias", &bias, &bgrad, {cout}});
    }
};

template <typename T>
struct BatchNorm2d {
    int ch = 0;
    T eps = static_cast<T>(1e-5);
    T momentum = static_cast<T>(0.9);  // running = m*running + (1-m)*batch
    std::vector<T> gamma, beta, ggrad, bgrad;
    std::vector<T> run_mean, run_var;
    Tensor4<T> xhat_;
    std::vector<T> inv_std_;

    void init(int ch_) {
        ch = ch_;
        gamma.assign(static_cast<size_t>(ch), T(1));
        beta.assign(static_cast<size_t>(ch), T(0));
        ggrad.assign(static_cast<size_t>(ch), T(0));
        bgrad.assign(static_cast<size_t>(ch), T(0));
        run_mean.assign(static_cast<size_t>(ch), T(0));
        run_var.assign(static_cast<size_t>(ch), T(1));
    }

    Tensor4<T> forward(const Tensor4<T>& x, Mode mode, bool save) {
        Tensor4<T> y(x.n, x.c, x.h, x.w);
        const size_t plane = x.plane();
        if (mode == Mode::eval) {
            for (int c = 0; c < ch; ++c) {
                const T a = gamma[c] / std::sqrt(run_var[c] + eps);
                const T b = beta[c] - a * run_mean[c];
                for (int in = 0; in < x.n; ++in) {
                    const T* xp = x.p(in, c);
                    T* yp = y.p(in, c);
                    for (size_t k = 0; k < plane; ++k) yp[k] = a * xp[k] + b;
                }
            }
            return y;
        }

        const T count = static_cast<T>(static_cast<double>(x.n) * plane);
        if (save) {
            xhat_ = Tensor4<T>(x.n, x.c, x.h, x.w);
            inv_std_.assign(static_cast<size_t>(ch), T(0));
        }
        for (int c = 0; c < ch; ++c) {
            T sum = T(0);
            for (int in = 0; in < x.n; ++in) {
                const T* xp = x.p(in, c);
                for (size_t k = 0; k < plane; ++k) sum += xp[k];
            }
            const T mean = sum / count;
            T varsum = T(0);
            for (int in = 0; in < x.n; ++in) {
                const T* xp = x.p(in, c);
                for (size_t k = 0; k < plane; ++k) {
                    const T d = xp[k] - mean;
                    varsum += d * d;
                }
            }
            const T var = varsum / count;
            const T inv = T(1) / std::sqrt(var + eps);
            run_mean[c] = momentum * run_mean[c] + (T(1) - momentum) * mean;
            run_var[c] = momentum * run_var[c] + (T(1) - momentum) * var;
            for (int in = 0; in < x.n; ++in) {
                const T* xp = x.p(in, c);
                T* yp = y.p(in, c);
                T* hp = save ? xhat_.p(in, c) : nullptr;
                for (size_t k = 0; k < plane; ++k) {
                    const T hx = (xp[k] - mean) * inv;
                    if (save) hp[k] = hx;
                    yp[k] = gamma[c] * hx + beta[c];
                }
            }
            if (save) inv_std_[c] = inv;
        }
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& dy) {
        Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
        const size_t plane = dy.plane();
        const T count = static_cast<T>(static_cast<double>(dy.n) * plane);
        for (int c = 0; c < ch; ++c) {
            T sum_dy = T(0), sum_dy_h = T(0);
            for (int in = 0; in < dy.n; ++in) {
                const T* dp = dy.p(in, c);
                const T* hp = xhat_.p(in, c);
                for (size_t k = 0; k < plane; ++k) {
                    sum_dy += dp[k];
                    sum_dy_h += dp[k] * hp[k];
                }
            }
            ggrad[c] += sum_dy_h;
            bgrad[c] += sum_dy;
            const T a = gamma[c] * inv_std_[c] / count;
            for (int in = 0; in < dy.n; ++in) {
                const T* dp = dy.p(in, c);
                const T* hp = xhat_.p(in, c);
                T* xp = dx.p(in, c);
                for (size_t k = 0; k < plane; ++k)
                    xp[k] = a * (count * dp[k] - sum_dy - hp[k] * sum_dy_h);
            }
        }
        return dx;
    }

    void collect(const std::string& prefix, std::vector<ParamView<T>>& out) {
        out.push_back({prefix + ".gamma", &gamma, &ggrad, {ch}});
        out.push_back({prefix + ".beta", &beta, &bgrad, {ch}});
    }

    void collect_state(const std::string& prefix, std::vector<ParamView<T>>& out) {
        out.push_back({prefix + ".run_mean", &run_mean, nullptr, {ch}});
        out.push_back({prefix + ".run_var", &run_var, nullptr, {ch}});
    }
};

template <typename T>
struct Relu {
    Tensor4<T> y_;

    Tensor4<T> forward(const Tensor4<T>& x, bool save) {
        Tensor4<T> y(x.n, x.c, x.h, x.w);
        for (size_t k = 0; k < x.size(); ++k) y.v[k] = x.v[k] > T(0) ? x.v[k] : T(0);
        if (save) y_ = y;
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& dy) {
        Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
        for (size_t k = 0; k < dy.size(); ++k) dx.v[k] = y_.v[k] > T(0) ? dy.v[k] : T(0);
        return dx;
    }
};

template <typename T>
struct MaxPool2 {
    int in_h = 0, in_w = 0;
    std::vector<int> idx_;  // per output element: flat offset within the input plane

    Tensor4<T> forward(const Tensor4<T>& x, bool save) {
        if (x.h % 2 != 0 || x.w % 2 != 0)
            throw std::invalid_argument("max pool needs even extents");
        in_h = x.h;
        in_w = x.w;
        Tensor4<T> y(x.n, x.c, x.h / 2, x.w / 2);
        if (save) idx_.assign(y.size(), 0);
        size_t out_k = 0;
        for (int in = 0; in < x.n; ++in)
            for (int c = 0; c < x.c; ++c) {
                const T* xp = x.p(in, c);
                T* yp = y.p(in, c);
                for (int yy = 0; yy < y.h; ++yy)
                    for (int xx = 0; xx < y.w; ++xx) {
                        const int base = 2 * yy * x.w + 2 * xx;
                        int best = base;
                        T bv = xp[base];
                        const int cands[3] = {base + 1, base + x.w, base + x.w + 1};
                        for (int cand : cands)
                            if (xp[cand] > bv) {
                                bv = xp[cand];
                                best = cand;
                            }
                        yp[static_cast<size_t>(yy) * y.w + xx] = bv;
                        if (save) idx_[out_k] = best;
                        ++out_k;
                    }
            }
        return y;
    }

    Tensor4<T> backward(const Tensor4<T>& dy) {
        Tensor4<T> dx(dy.n, dy.c, in_h, in_w);
        size_t out_k = 0;
        for (int in = 0; in < dy.n; ++in)
            for (int c = 0; c < dy.c; ++c) {
                T* dxp = dx.p(in, c);
                const T* dyp = dy.p(in, c);
                const size_t plane = dy.plane();
                for (size_t k = 0; k < plane; ++k) {
                    dxp[idx_[out_k]] += dyp[k];
                    ++out_k;
                }
            }
        return dx;
    }
};

// Nearest-neighbor 2x upsampling.
template <typename T>
Tensor4<T> upsample2(const Tensor4<T>& x) {
    Tensor4<T> y(x.n, x.c, x.h * 2, x.w * 2);
    for (int in = 0; in < x.n; ++in)
        for (int c = 0; c < x.c; ++c) {
            const T* xp = x.p(in, c);
            T* yp = y.p(in, c);
            for (int yy = 0; yy < y.h; ++yy) {
                const T* xrow = xp + static_cast<size_t>(yy / 2) * x.w;
                T* yrow = yp + static_cast<size_t>(yy) * y.w;
                for (int xx = 0; xx < y.w; ++xx) yrow[xx] = xrow[xx / 2];
            }
        }
    return y;
}

template <typename T>
Tensor4<T> upsample2_backward(const Tensor4<T>& dy) {
    Tensor4<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
    for (int in = 0; in < dy.n; ++in)
        for (int c = 0; c < dy.c; ++c) {
            const T* dyp = dy.p(in, c);
            T* dxp = dx.p(in, c);
            for (int yy = 0; yy < dy.h; ++yy) {
                const T* dyrow = dyp + static_cast<size_t>(yy) * dy.w;
                T* dxrow = dxp + static_cast<size_t>(yy / 2) * dx.w;
                for (int xx = 0; xx < dy.w; ++xx) dxrow[xx / 2] += dyrow[xx];
            }
        }
    return dx;
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
    Tensor4<T> y(a.n, a.c + b.c, a.h, a.w);
    for (int in = 0; in < a.n; ++in) {
        for (int c = 0; c < a.c; ++c)
            std::copy(a.p(in, c), a.p(in, c) + a.plane(), y.p(in, c));
        for (int c = 0; c < b.c; ++c)
            std::copy(b.p(in, c), b.p(in, c) + b.plane(), y.p(in, a.c + c));
    }
    return y;
}

template <typename T>
void split_channels(const Tensor4<T>& dz, Tensor4<T>& da, Tensor4<T>& db) {
    for (int in = 0; in < dz.n; ++in) {
        for (int c = 0; c < da.c; ++c)
            std::copy(dz.p(in, c), dz.p(in, c) + dz.plane(), da.p(in, c));
        for (int c = 0; c < db.c; ++c)
            std::copy(dz.p(in, da.c + c), dz.p(in, da.c + c) + dz.plane(), db.p(in, c));
    }
}

/// Channelwise softmax per pixel.
template <typename T>
Tensor4<T> softmax_channel(const Tensor4<T>& z) {
    Tensor4<T> p(z.n, z.c, z.h, z.w);
    const size_t plane = z.plane();
    for (int in = 0; in < z.n; ++in) {
        const T* zp = z.p(in, 0);
        T* pp = p.p(in, 0);
        for (size_t k = 0; k < plane; ++k) {
            T mx = zp[k];
            for (int c = 1; c < z.c; ++c) mx = std::max(mx, zp[c * plane + k]);
            T sum = T(0);
            for (int c = 0; c < z.c; ++c) {
                const T e = std::exp(zp[c * plane + k] - mx);
                pp[c * plane + k] = e;
                sum += e;
            }
            for (int c = 0; c < z.c; ++c) pp[c * plane + k] /= sum;
        }
    }
    return p;
}

/// dL/dlogits from dL/dprobs for a channelwise softmax.
template <typename T>
Tensor4<T> softmax_channel_backward(const Tensor4<T>& probs, const Tensor4<T>& dprobs) {
    Tensor4<T> dz(probs.n, probs.c, probs.h, probs.w);
    const size_t plane = probs.plane();
    for (int in = 0; in < probs.n; ++in) {
        const T* pp = probs.p(in, 0);
        const T* dp = dprobs.p(in, 0);
        T* zp = dz.p(in, 0);
        for (size_t k = 0; k < plane; ++k) {
            T dot = T(0);
            for (int c = 0; c < probs.c; ++c) dot += pp[c * plane + k] * dp[c * plane + k];
            for (int c = 0; c < probs.c; ++c)
                zp[c * plane + k] = pp[c * plane + k] * (dp[c * plane + k] - dot);
        }
    }
    return dz;
}

// ---------------------------------------------------------------------------
// Backbone
// ---------------------------------------------------------------------------

template <typename T>
struct ConvBlock {
    Conv2d<T> c1, c2;
    BatchNorm2d<T> b1, b2;
    Relu<T> r1, r2;

    void init(int cin, int cout, Rng& rng) {
        c1.init(cin, cout, 3, false, rng);
        b1.init(cout);
        c2.init(cout, cout, 3, false, rng);
        b2.init(cout);
    }

    Tensor4<T> forward(const Tensor4<T>& x, Mode mode, bool save) {
        auto t = r1.forward(b1.forward(c1.forward(x, save), mode, save), save);
        return r2.forward(b2.forward(c2.forward(t, save), mode, save), save);
    }

    Tensor4<T> backward(const Tensor4<T>& dy) {
        auto t = c2.backward(b2.backward(r2.backward(dy)));
        return c1.backward(b1.backward(r1.backward(t)));
    }

    void collect(const std::string& prefix, std::vector<ParamView<T>>& out) {
        c1.collect(prefix + ".c1", out);
        b1.collect(prefix + ".b1", out);
        c2.collect(prefix + ".c2", out);
        b2.collect(prefix + ".b2", out);
    }

    void collect_state(const std::string& prefix, std::vector<ParamView<T>>& out) {
        b1.collect_state(prefix + ".b1", out);
        b2.collect_state(prefix + ".b2", out);
    }
};

struct NetConfig {
    int in_channels = 1;
    int classes = 2;
    int base_channels = 6;
    int stages = 2;    // pooling steps; input extents must be divisible by 2^stages
    bool dsbe = true;  // boundary attention + half-scale deep supervision
    int window = 4;
};

inline void validate_net_config(const NetConfig& cfg) {
    if (cfg.in_channels < 1) throw std::invalid_argument("net config: in_channels must be >= 1");
    if (cfg.classes < 2) throw std::invalid_argument("net config: classes must be >= 2");
    if (cfg.base_channels < 1)
        throw std::invalid_argument("net config: base_channels must be >= 1");
    if (cfg.stages < 2 || cfg.stages > 8)
        throw std::invalid_argument("net config: stages must lie in [2, 8]");
    if (cfg.window < 2) throw std::invalid_argument("net config: window must be >= 2");
}

/// Encoder-decoder with skip concatenation, a full-resolution 1x1 head, a
/// half-scale light head (1x1 conv, BN, ReLU, 1x1 conv) on the penultimate
/// decoder features, and optional residual boundary attention applied to
/// those features before both consumers.
template <typename T>
class SegNet {
public:
    SegNet(const NetConfig& cfg, uint64_t seed) : cfg_(cfg) {
        validate_net_config(cfg);
        Rng rng(derive_seed(seed, 0x6e657477ULL));  // per-net init stream

        enc_.resize(cfg.stages);
        pool_.resize(cfg.stages);
        dec_.resize(cfg.stages);
        int ch = cfg.in_channels;
        for (int s = 0; s < cfg.stages; ++s) {
            const int out = cfg.base_channels << s;
            enc_[s].init(ch, out, rng);
            ch = out;
        }
        const int bott = cfg.base_channels << cfg.stages;
        bott_.init(ch, bott, rng);
        int prev = bott;
        for (int s = cfg.stages - 1; s >= 0; --s) {
            const int skip = cfg.base_channels << s;
            dec_[s].init(prev + skip, skip, rng);
            prev = skip;
        }
        const int half_ch = cfg.base_channels << 1;  // dec_[1] output channels
        attn_.init(half_ch, rng);
        light_c1_.init(half_ch, half_ch, 1, false, rng);
        light_bn_.init(half_ch);
        light_c2_.init(half_ch, cfg.classes, 1, true, rng);
        head_.init(cfg.base_channels, cfg.classes, 1, true, rng);
        // Class heads start small so fresh models emit near-uniform
        // probabilities and the winning-confidence trace starts around 1/C.
        for (auto& v : light_c2_.weight) v *= T(0.1);
        for (auto& v : head_.weight) v *= T(0.1);
    }

    struct Output {
        Tensor4<T> prob_full;
        Tensor4<T> prob_half;
        Tensor4<T> feat_half;  // post-attention penultimate features
    };

    /// masks: one BoundaryMask per batch item at the half-scale tiling, or
    /// nullptr for no attention. Gradients are tracked only in train mode.
    Output forward(const Tensor4<T>& x, const std::vector<BoundaryMask>* masks, Mode mode) {
        if (x.c != cfg_.in_channels) throw std::invalid_argument("net input channel mismatch");
        if (x.h % (1 << cfg_.stages) != 0 || x.w % (1 << cfg_.stages) != 0)
            throw std::invalid_argument("net input extents must be divisible by 2^stages");
        if (masks && static_cast<int>(masks->size()) != x.n)
            throw std::invalid_argument("need one boundary mask per batch item");
        if (masks && !cfg_.dsbe)
            throw std::invalid_argument("boundary masks passed to a net with dsbe disabled");

        const bool save = mode == Mode::train;
        saved_valid_ = save;

        Tensor4<T> a = x;
        std::vector<Tensor4<T>> skips(cfg_.stages);
        for (int s = 0; s < cfg_.stages; ++s) {
            skips[s] = enc_[s].forward(a, mode, save);
            a = pool_[s].forward(skips[s], save);
        }
        Tensor4<T> d = bott_.forward(a, mode, save);

        Output out;
        for (int s = cfg_.stages - 1; s >= 0; --s) {
            Tensor4<T> up = upsample2(d);
            Tensor4<T> z = concat_channels(up, skips[s]);
            if (save) {
                up_ch_[s] = up.c;
                skip_ch_[s] = skips[s].c;
            }
            d = dec_[s].forward(z, mode, save);
            if (s == 1) {
                // Penultimate (half-scale) stage: attention, then light head.
                if (masks && cfg_.dsbe) {
                    Tensor4<T> dp(d.n, d.c, d.h, d.w);
                    if (save) {
                        tapes_.assign(d.n, AttentionTape<T>());
                        masks_ = *masks;
                    }
                    for (int in = 0; in < d.n; ++in)
                        attention_forward(attn_, (*masks)[in], d.p(in, 0), dp.p(in, 0), d.c,
                                          d.h, d.w, save ? &tapes_[in] : nullptr);
                    attn_applied_ = true;
                    d = std::move(dp);
                } else {
                    attn_applied_ = false;
                }
                out.feat_half = d;
                Tensor4<T> lh = light_c2_.forward(
                    light_relu_.forward(
                        light_bn_.forward(light_c1_.forward(d, save), mode, save), save),
                    save);
                out.prob_half = softmax_channel(lh);
                if (save) prob_half_ = out.prob_half;
            }
        }
        Tensor4<T> logits = head_.forward(d, save);
        out.prob_full = softmax_channel(logits);
        if (save) prob_full_ = out.prob_full;
        return out;
    }

    /// Backward from gradients w.r.t. the two probability outputs. Parameter
    /// gradients accumulate until zero_grad().
    void backward(const Tensor4<T>& dprob_full, const Tensor4<T>& dprob_half) {
        if (!saved_valid_) throw std::logic_error("backward without a train-mode forward");

        Tensor4<T> g = head_.backward(softmax_channel_backward(prob_full_, dprob_full));

        std::vector<Tensor4<T>> skip_grads(cfg_.stages);
        for (int s = 0; s < cfg_.stages; ++s) {
            Tensor4<T> dz = dec_[s].backward(g);
            Tensor4<T> dup(dz.n, up_ch_[s], dz.h, dz.w);
            Tensor4<T> dskip(dz.n, skip_ch_[s], dz.h, dz.w);
            split_channels(dz, dup, dskip);
            skip_grads[s] = std::move(dskip);
            g = upsample2_backward(dup);
            if (s == 0) {
                // g is now the decoder-path gradient at the post-attention
                // half-scale features; add the light-head path, then undo
                // attention.
                Tensor4<T> lg = light_c1_.backward(light_bn_.backward(
                    light_relu_.backward(light_c2_.backward(
                        softmax_channel_backward(prob_half_, dprob_half)))));
                for (size_t k = 0; k < g.size(); ++k) g.v[k] += lg.v[k];
                if (attn_applied_) {
                    Tensor4<T> da(g.n, g.c, g.h, g.w);
                    for (int in = 0; in < g.n; ++in)
                        attention_backward(attn_, masks_[in], tapes_[in], g.p(in, 0),
                                           da.p(in, 0), g.c, g.h, g.w);
                    g = std::move(da);
                }
            }
        }

        Tensor4<T> ga = bott_.backward(g);
        for (int s = cfg_.stages - 1; s >= 0; --s) {
            Tensor4<T> ge = pool_[s].backward(ga);
            for (size_t k = 0; k < ge.size(); ++k) ge.v[k] += skip_grads[s].v[k];
            ga = enc_[s].backward(ge);
        }
    }

    void zero_grad() {
        for (auto& pv : params()) std::fill(pv.grad->begin(), pv.grad->end(), T(0));
    }

    std::vector<ParamView<T>> params() {
        std::vector<ParamView<T>> out;
        for (int s = 0; s < cfg_.stages; ++s) enc_[s].collect("enc" + std::to_string(s), out);
        bott_.collect("bott", out);
        for (int s = cfg_.stages - 1; s >= 0; --s)
            dec_[s].collect("dec" + std::to_string(s), out);
        out.push_back({"attn.wq", &attn_.wq, &attn_.gq, {attn_.ch, attn_.ch}});
        out.push_back({"attn.wk", &attn_.wk, &attn_.gk, {attn_.ch, attn_.ch}});
        out.push_back({"attn.wv", &attn_.wv, &attn_.gv, {attn_.ch, attn_.ch}});
        out.push_back({"attn.wo", &attn_.wo, &attn_.go, {attn_.ch, attn_.ch}});
        light_c1_.collect("light.c1", out);
        light_bn_.collect("light.bn", out);
        light_c2_.collect("light.c2", out);
        head_.collect("head", out);
        return out;
    }

    std::vector<ParamView<T>> state() {
        std::vector<ParamView<T>> out;
        for (int s = 0; s < cfg_.stages; ++s)
            enc_[s].collect_state("enc" + std::to_string(s), out);
        bott_.collect_state("bott", out);
        for (int s = cfg_.stages - 1; s >= 0; --s)
            dec_[s].collect_state("dec" + std::to_string(s), out);
        light_bn_.collect_state("light.bn", out);
        return out;
    }

    const NetConfig& config() const { return cfg_; }
    int half_channels() const { return cfg_.base_channels << 1; }
    AttentionParams<T>& attention() { return attn_; }

private:
    NetConfig cfg_;
    std::vector<ConvBlock<T>> enc_;
    std::vector<MaxPool2<T>> pool_;
    ConvBlock<T> bott_;
    std::vector<ConvBlock<T>> dec_;
    AttentionParams<T> attn_;
    Conv2d<T> light_c1_, light_c2_;
    BatchNorm2d<T> light_bn_;
    Relu<T> light_relu_;
    Conv2d<T> head_;

    // saved forward state
    bool saved_valid_ = false;
    bool attn_applied_ = false;
    std::vector<AttentionTape<T>> tapes_;
    std::vector<BoundaryMask> masks_;
    Tensor4<T> prob_full_, prob_half_;
    int up_ch_[16] = {0};
    int skip_ch_[16] = {0};
};

// ---------------------------------------------------------------------------
// Ensemble and checkpoints
// ---------------------------------------------------------------------------

template <typename T>
struct ModelEnsemble {
    std::vector<std::unique_ptr<SegNet<T>>> models;
    std::vector<uint64_t> seeds;

    static ModelEnsemble create(const NetConfig& cfg, int m, uint64_t master_seed,
                                bool force_equal_init) {
        if (m < 2) throw std::invalid_argument("ensemble needs M >= 2 models");
        ModelEnsemble e;
        for (int i = 0; i < m; ++i) {
            const uint64_t s = derive_seed(
                derive_seed(master_seed, static_cast<uint64_t>(Stream::model_init)),
                force_equal_init ? 0 : static_cast<uint64_t>(i));
            e.seeds.push_back(s);
            e.models.push_back(std::make_unique<SegNet<T>>(cfg, s));
        }
        return e;
    }

    int size() const { return static_cast<int>(models.size()); }
};

/// Extract one item's probability map from a batched output.
inline ProbMap prob_slice(const Tensor4<float>& probs, int item) {
    ProbMap p(probs.c, probs.h, probs.w);
    std::copy(probs.p(item, 0), probs.p(item, 0) + p.size(), p.v.begin());
    return p;
}

/// Per-pixel argmax with lowest-index tie break.
inline LabelMap argmax_labels(const ProbMap& p) {
    LabelMap out(p.h, p.w);
    const size_t plane = p.plane();
    for (size_t k = 0; k < plane; ++k) {
        int best = 0;
        float bv = p.v[k];
        for (int c = 1; c < p.c; ++c)
            if (p.v[c * plane + k] > bv) {
                bv = p.v[c * plane + k];
                best = c;
            }
        out.v[k] = static_cast<uint8_t>(best);
    }
    return out;
}

void save_checkpoint(SegNet<float>& net, const std::filesystem::path& dir, int64_t iteration);
void load_checkpoint(SegNet<float>& net, const std::filesystem::path& dir);
NetConfig checkpoint_net_config(const std::filesystem::path& dir);

nlohmann::json net_config_to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const nlohmann::json& j);

}  // namespace comwin
