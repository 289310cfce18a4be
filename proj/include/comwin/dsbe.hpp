#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "comwin/core.hpp"
#include "comwin/rng.hpp"

namespace comwin {

// Deeply supervised boundary enhancement: window-level boundary detection on
// half-scale labels plus residual within-window self-attention on the
// penultimate feature map.

/// Per-window boolean grid over a feature map of extent h x w, tiled with
/// non-overlapping windows anchored at (0, 0). Edge tiles keep their actual
/// (smaller) extent.
struct BoundaryMask {
    int h = 0;        // label/feature extent the mask was built for
    int w = 0;
    int window = 0;   // tile size
    int gh = 0;       // grid rows = ceil(h / window)
    int gw = 0;
    std::vector<uint8_t> win;  // row-major grid, nonzero = boundary window

    bool at(int i, int j) const { return win[static_cast<size_t>(i) * gw + j] != 0; }
    bool any() const {
        for (uint8_t b : win)
            if (b) return true;
        return false;
    }
};

/// A window is a boundary window iff its label tile contains at least two
/// distinct class values.
BoundaryMask detect_boundary_windows(const LabelMap& labels, int window);

/// Number of attended token pairs: sum over true windows of (tile pixels)^2.
uint64_t attention_cost(const BoundaryMask& mask);

/// Single-head QKV projections plus output projection, all ch x ch, row-major.
/// The output projection starts at zero so the module begins as an identity.
template <typename T>
struct AttentionParams {
    int ch = 0;
    std::vector<T> wq, wk, wv, wo;
    std::vector<T> gq, gk, gv, go;

    void init(int channels, Rng& rng) {
        ch = channels;
        const size_t n = static_cast<size_t>(ch) * ch;
        wq.resize(n);
        wk.resize(n);
        wv.resize(n);
        wo.assign(n, T(0));
        gq.assign(n, T(0));
        gk.assign(n, T(0));
        gv.assign(n, T(0));
        go.assign(n, T(0));
        const double bound = std::sqrt(3.0 / ch);
        for (auto* m : {&wq, &wk, &wv})
            for (auto& x : *m) x = static_cast<T>(rng.uniform(-bound, bound));
    }

    void zero_grad() {
        std::fill(gq.begin(), gq.end(), T(0));
        std::fill(gk.begin(), gk.end(), T(0));
        std::fill(gv.begin(), gv.end(), T(0));
        std::fill(go.begin(), go.end(), T(0));
    }
};

/// Saved per-window intermediates for the backward pass.
template <typename T>
struct AttentionTape {
    struct Window {
        int y0, x0, th, tw;          // tile origin and extent
        std::vector<T> x, q, k, v;   // tokens x channels, token-major
        std::vector<T> attn;         // tokens x tokens softmax rows
        std::vector<T> o;            // attention output before wo
    };
    std::vector<Window> windows;
};

namespace detail {

template <typename T>
void matvec(const std::vector<T>& m, const T* x, T* y, int ch) {
    for (int i = 0; i < ch; ++i) {
        T acc = T(0);
        const T* row = m.data() + static_cast<size_t>(i) * ch;
        for (int j = 0; j < ch; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

template <typename T>
void matvec_t(const std::vector<T>& m, const T* x, T* y, int ch) {
    for (int i = 0; i < ch; ++i) y[i] = T(0);
    for (int j = 0; j < ch; ++j) {
        const T* row = m.data() + static_cast<size_t>(j) * ch;
        const T xj = x[j];
        for (int i = 0; i < ch; ++i) y[i] += row[i] * xj;
    }
}

template <typename T>
void outer_acc(std::vector<T>& m, const T* a, const T* b, int ch) {
    for (int i = 0; i < ch; ++i) {
        T* row = m.data() + static_cast<size_t>(i) * ch;
        const T ai = a[i];
        for (int j = 0; j < ch; ++j) row[j] += ai * b[j];
    }
}

}  // namespace detail

/// Residual windowed self-attention over one C x H x W feature map. False
/// windows pass through bitwise unchanged. When `tape` is non-null the
/// intermediates needed by attention_backward are recorded.
template <typename T>
void attention_forward(const AttentionParams<T>& p, const BoundaryMask& mask, const T* x, T* y,
                       int c, int h, int w, AttentionTape<T>* tape = nullptr) {
    if (mask.h != h || mask.w != w)
        throw std::invalid_argument("boundary mask grid does not match feature extent");
    if (p.ch != c) throw std::invalid_argument("attention channel mismatch");

    const size_t plane = static_cast<size_t>(h) * w;
    std::copy(x, x + static_cast<size_t>(c) * plane, y);
    if (tape) tape->windows.clear();

    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(c)));
    std::vector<T> tok, q, k, v, scores, attn, o, out;
    for (int gi = 0; gi < mask.gh; ++gi) {
        for (int gj = 0; gj < mask.gw; ++gj) {
            if (!mask.at(gi, gj)) continue;
            const int y0 = gi * mask.window, x0 = gj * mask.window;
            const int th = std::min(mask.window, h - y0);
            const int tw = std::min(mask.window, w - x0);
            const int nt = th * tw;

            tok.assign(static_cast<size_t>(nt) * c, T(0));
            for (int t = 0; t < nt; ++t) {
                const int yy = y0 + t / tw, xx = x0 + t % tw;
                for (int ch = 0; ch < c; ++ch)
                    tok[static_cast<size_t>(t) * c + ch] = x[ch * plane + yy * w + xx];
            }

            q.resize(tok.size());
            k.resize(tok.size());
            v.resize(tok.size());
            for (int t = 0; t < nt; ++t) {
                detail::matvec(p.wq, tok.data() + static_cast<size_t>(t) * c,
                               q.data() + static_cast<size_t>(t) * c, c);
                detail::matvec(p.wk, tok.data() + static_cast<size_t>(t) * c,
                               k.data() + static_cast<size_t>(t) * c, c);
                detail::matvec(p.wv, tok.data() + static_cast<size_t>(t) * c,
                               v.data() + static_cast<size_t>(t) * c, c);
            }

            scores.assign(static_cast<size_t>(nt) * nt, T(0));
            for (int i = 0; i < nt; ++i)
                for (int j = 0; j < nt; ++j) {
                    T acc = T(0);
                    for (int ch = 0; ch < c; ++ch)
                        acc += q[static_cast<size_t>(i) * c + ch] *
                               k[static_cast<size_t>(j) * c + ch];
                    scores[static_cast<size_t>(i) * nt + j] = acc * scale;
                }

            attn.assign(scores.size(), T(0));
            for (int i = 0; i < nt; ++i) {
                const T* srow = scores.data() + static_cast<size_t>(i) * nt;
                T* arow = attn.data() + static_cast<size_t>(i) * nt;
                T mx = srow[0];
                for (int j = 1; j < nt; ++j) mx = std::max(mx, srow[j]);
                T sum = T(0);
                for (int j = 0; j < nt; ++j) {
                    arow[j] = std::exp(srow[j] - mx);
                    sum += arow[j];
                }
                for (int j = 0; j < nt; ++j) arow[j] /= sum;
            }

            o.assign(static_cast<size_t>(nt) * c, T(0));
            for (int i = 0; i < nt; ++i)
                for (int j = 0; j < nt; ++j) {
                    const T a = attn[static_cast<size_t>(i) * nt + j];
                    const T* vj = v.data() + static_cast<size_t>(j) * c;
                    T* oi = o.data() + static_cast<size_t>(i) * c;
                    for (int ch = 0; ch < c; ++ch) oi[ch] += a * vj[ch];
                }

            out.resize(static_cast<size_t>(nt) * c);
            for (int t = 0; t < nt; ++t)
                detail::matvec(p.wo, o.data() + static_cast<size_t>(t) * c,
                               out.data() + static_cast<size_t>(t) * c, c);

            for (int t = 0; t < nt; ++t) {
                const int yy = y0 + t / tw, xx = x0 + t % tw;
                for (int ch = 0; ch < c; ++ch)
                    y[ch * plane + yy * w + xx] += out[static_cast<size_t>(t) * c + ch];
            }

            if (tape) {
                typename AttentionTape<T>::Window rec;
                rec.y0 = y0;
                rec.x0 = x0;
                rec.th = th;
                rec.tw = tw;
                rec.x = tok;
                rec.q = q;
                rec.k = k;
                rec.v = v;
                rec.attn = attn;
                rec.o = o;
                tape->windows.push_back(std::move(rec));
            }
        }
    }
}

/// Backward of attention_forward. Adds into dx and into the parameter grads.
template <typename T>
void attention_backward(AttentionParams<T>& p, const BoundaryMask& mask,
                        const AttentionTape<T>& tape, const T* dy, T* dx, int c, int h, int w) {
    const size_t plane = static_cast<size_t>(h) * w;
    for (size_t i = 0; i < static_cast<size_t>(c) * plane; ++i) dx[i] += dy[i];

    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(c)));
    std::vector<T> du, dov, da, ds, dq, dk, dv, dtok;
    for (const auto& win : tape.windows) {
        const int nt = win.th * win.tw;

        du.assign(static_cast<size_t>(nt) * c, T(0));
        for (int t = 0; t < nt; ++t) {
            const int yy = win.y0 + t / win.tw, xx = win.x0 + t % win.tw;
            for (int ch = 0; ch < c; ++ch)
                du[static_cast<size_t>(t) * c + ch] = dy[ch * plane + yy * w + xx];
        }

        // u = wo * o
        dov.assign(static_cast<size_t>(nt) * c, T(0));
        for (int t = 0; t < nt; ++t) {
            detail::outer_acc(p.go, du.data() + static_cast<size_t>(t) * c,
                              win.o.data() + static_cast<size_t>(t) * c, c);
            detail::matvec_t(p.wo, du.data() + static_cast<size_t>(t) * c,
                             dov.data() + static_cast<size_t>(t) * c, c);
        }

        // o_i = sum_j attn_ij v_j
        da.assign(static_cast<size_t>(nt) * nt, T(0));
        dv.assign(static_cast<size_t>(nt) * c, T(0));
        for (int i = 0; i < nt; ++i)
            for (int j = 0; j < nt; ++j) {
                const T a = win.attn[static_cast<size_t>(i) * nt + j];
                T acc = T(0);
                const T* doi = dov.data() + static_cast<size_t>(i) * c;
                const T* vj = win.v.data() + static_cast<size_t>(j) * c;
                T* dvj = dv.data() + static_cast<size_t>(j) * c;
                for (int ch = 0; ch < c; ++ch) {
                    acc += doi[ch] * vj[ch];
                    dvj[ch] += a * doi[ch];
                }
                da[static_cast<size_t>(i) * nt + j] = acc;
            }

        // softmax rows
        ds.assign(static_cast<size_t>(nt) * nt, T(0));
        for (int i = 0; i < nt; ++i) {
            const T* arow = win.attn.data() + static_cast<size_t>(i) * nt;
            const T* darow = da.data() + static_cast<size_t>(i) * nt;
            T dot = T(0);
            for (int j = 0; j < nt; ++j) dot += arow[j] * darow[j];
            T* dsrow = ds.data() + static_cast<size_t>(i) * nt;
            for (int j = 0; j < nt; ++j) dsrow[j] = arow[j] * (darow[j] - dot);
        }

        // s_ij = scale * q_i . k_j
        dq.assign(static_cast<size_t>(nt) * c, T(0));
        dk.assign(static_cast<size_t>(nt) * c, T(0));
        for (int i = 0; i < nt; ++i)
            for (int j = 0; j < nt; ++j) {
                const T g = ds[static_cast<size_t>(i) * nt + j] * scale;
                const T* qi = win.q.data() + static_cast<size_t>(i) * c;
                const T* kj = win.k.data() + static_cast<size_t>(j) * c;
                T* dqi = dq.data() + static_cast<size_t>(i) * c;
                T* dkj = dk.data() + static_cast<size_t>(j) * c;
                for (int ch = 0; ch < c; ++ch) {
                    dqi[ch] += g * kj[ch];
                    dkj[ch] += g * qi[ch];
                }
            }

        // projections back to tokens
        dtok.assign(static_cast<size_t>(nt) * c, T(0));
        for (int t = 0; t < nt; ++t) {
            const T* xt = win.x.data() + static_cast<size_t>(t) * c;
            detail::outer_acc(p.gq, dq.data() + static_cast<size_t>(t) * c, xt, c);
            detail::outer_acc(p.gk, dk.data() + static_cast<size_t>(t) * c, xt, c);
            detail::outer_acc(p.gv, dv.data() + static_cast<size_t>(t) * c, xt, c);
            std::vector<T> tmp(static_cast<size_t>(c));
            detail::matvec_t(p.wq, dq.data() + static_cast<size_t>(t) * c, tmp.data(), c);
            for (int ch = 0; ch < c; ++ch) dtok[static_cast<size_t>(t) * c + ch] += tmp[ch];
            detail::matvec_t(p.wk, dk.data() + static_cast<size_t>(t) * c, tmp.data(), c);
            for (int ch = 0; ch < c; ++ch) dtok[static_cast<size_t>(t) * c + ch] += tmp[ch];
            detail::matvec_t(p.wv, dv.data() + static_cast<size_t>(t) * c, tmp.data(), c);
            for (int ch = 0; ch < c; ++ch) dtok[static_cast<size_t>(t) * c + ch] += tmp[ch];
        }

        for (int t = 0; t < nt; ++t) {
            const int yy = win.y0 + t / win.tw, xx = win.x0 + t % win.tw;
            for (int ch = 0; ch < c; ++ch)
                dx[ch * plane + yy * w + xx] += dtok[static_cast<size_t>(t) * c + ch];
        }
    }
}

}  // namespace comwin
