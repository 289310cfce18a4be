#pragma once

// Brute-force reference implementations, deliberately written as direct loop
// transcriptions independent of the library code paths they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "comwin/core.hpp"
#include "comwin/dsbe.hpp"

namespace oracle {

using comwin::LabelMap;
using comwin::ProbMap;

/// Eq.-by-the-book compete-to-win: double loop over classes and peers.
inline LabelMap comwin(const std::vector<const ProbMap*>& peers) {
    const ProbMap& first = *peers.front();
    LabelMap out(first.h, first.w);
    for (int y = 0; y < first.h; ++y)
        for (int x = 0; x < first.w; ++x) {
            int best_class = 0;
            double best = -1.0;
            for (int c = 0; c < first.c; ++c) {
                double peak = -1.0;
                for (const ProbMap* p : peers)
                    peak = std::max(peak, static_cast<double>(p->at(c, y, x)));
                if (peak > best) {
                    best = peak;
                    best_class = c;
                }
            }
            out.at(y, x) = static_cast<uint8_t>(best_class);
        }
    return out;
}

inline LabelMap argmax(const ProbMap& p) {
    LabelMap out(p.h, p.w);
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) {
            int best_class = 0;
            float best = p.at(0, y, x);
            for (int c = 1; c < p.c; ++c)
                if (p.at(c, y, x) > best) {
                    best = p.at(c, y, x);
                    best_class = c;
                }
            out.at(y, x) = static_cast<uint8_t>(best_class);
        }
    return out;
}

inline LabelMap mean_argmax(const std::vector<const ProbMap*>& maps) {
    const ProbMap& first = *maps.front();
    LabelMap out(first.h, first.w);
    for (int y = 0; y < first.h; ++y)
        for (int x = 0; x < first.w; ++x) {
            int best_class = 0;
            double best = -1.0;
            for (int c = 0; c < first.c; ++c) {
                double sum = 0.0;
                for (const ProbMap* p : maps) sum += p->at(c, y, x);
                const double mean = sum / static_cast<double>(maps.size());
                if (mean > best) {
                    best = mean;
                    best_class = c;
                }
            }
            out.at(y, x) = static_cast<uint8_t>(best_class);
        }
    return out;
}

inline LabelMap vote(const std::vector<const ProbMap*>& maps) {
    const ProbMap& first = *maps.front();
    LabelMap out(first.h, first.w);
    for (int y = 0; y < first.h; ++y)
        for (int x = 0; x < first.w; ++x) {
            std::vector<int> counts(first.c, 0);
            for (const ProbMap* p : maps) {
                int best_class = 0;
                float best = p->at(0, y, x);
                for (int c = 1; c < p->c; ++c)
                    if (p->at(c, y, x) > best) {
                        best = p->at(c, y, x);
                        best_class = c;
                    }
                ++counts[best_class];
            }
            int winner = 0;
            for (int c = 1; c < first.c; ++c)
                if (counts[c] > counts[winner]) winner = c;
            out.at(y, x) = static_cast<uint8_t>(winner);
        }
    return out;
}

/// Per-tile distinct-count boundary rule.
inline std::vector<uint8_t> boundary_windows(const LabelMap& labels, int w) {
    const int gh = (labels.h + w - 1) / w;
    const int gw = (labels.w + w - 1) / w;
    std::vector<uint8_t> out(static_cast<size_t>(gh) * gw, 0);
    for (int gi = 0; gi < gh; ++gi)
        for (int gj = 0; gj < gw; ++gj) {
            std::set<int> distinct;
            for (int y = gi * w; y < std::min((gi + 1) * w, labels.h); ++y)
                for (int x = gj * w; x < std::min((gj + 1) * w, labels.w); ++x)
                    distinct.insert(labels.at(y, x));
            out[static_cast<size_t>(gi) * gw + gj] = distinct.size() >= 2 ? 1 : 0;
        }
    return out;
}

/// Dense single-window attention in f64: tokens are all pixels of the window
/// in row-major order, channel vectors gathered from a C x H x W field.
inline std::vector<double> dense_window_attention(
    const std::vector<double>& x, int c, int h, int w, int y0, int x0, int th, int tw,
    const std::vector<double>& wq, const std::vector<double>& wk, const std::vector<double>& wv,
    const std::vector<double>& wo) {
    const int nt = th * tw;
    const size_t plane = static_cast<size_t>(h) * w;
    auto mat = [&](const std::vector<double>& m, const std::vector<double>& v) {
        std::vector<double> r(c, 0.0);
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < c; ++j) r[i] += m[static_cast<size_t>(i) * c + j] * v[j];
        return r;
    };

    std::vector<std::vector<double>> tok(nt), q(nt), k(nt), v(nt);
    for (int t = 0; t < nt; ++t) {
        tok[t].resize(c);
        const int yy = y0 + t / tw, xx = x0 + t % tw;
        for (int ch = 0; ch < c; ++ch) tok[t][ch] = x[ch * plane + yy * w + xx];
        q[t] = mat(wq, tok[t]);
        k[t] = mat(wk, tok[t]);
        v[t] = mat(wv, tok[t]);
    }

    std::vector<double> out = x;
    for (int i = 0; i < nt; ++i) {
        std::vector<double> scores(nt);
        for (int j = 0; j < nt; ++j) {
            double dot = 0.0;
            for (int ch = 0; ch < c; ++ch) dot += q[i][ch] * k[j][ch];
            scores[j] = dot / std::sqrt(static_cast<double>(c));
        }
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double denom = 0.0;
        std::vector<double> e(nt);
        for (int j = 0; j < nt; ++j) {
            e[j] = std::exp(scores[j] - mx);
            denom += e[j];
        }
        std::vector<double> attended(c, 0.0);
        for (int j = 0; j < nt; ++j)
            for (int ch = 0; ch < c; ++ch) attended[ch] += (e[j] / denom) * v[j][ch];
        const auto projected = mat(wo, attended);
        const int yy = y0 + i / tw, xx = x0 + i % tw;
        for (int ch = 0; ch < c; ++ch) out[ch * plane + yy * w + xx] += projected[ch];
    }
    return out;
}

struct Overlap {
    double dice, jaccard;
};

inline Overlap overlap(const LabelMap& pred, const LabelMap& truth, int cls) {
    std::set<int> ps, ts;
    for (int y = 0; y < pred.h; ++y)
        for (int x = 0; x < pred.w; ++x) {
            if (pred.at(y, x) == cls) ps.insert(y * pred.w + x);
            if (truth.at(y, x) == cls) ts.insert(y * pred.w + x);
        }
    std::vector<int> inter, uni;
    std::set_intersection(ps.begin(), ps.end(), ts.begin(), ts.end(), std::back_inserter(inter));
    std::set_union(ps.begin(), ps.end(), ts.begin(), ts.end(), std::back_inserter(uni));
    if (ps.empty() && ts.empty()) return {1.0, 1.0};
    return {2.0 * inter.size() / static_cast<double>(ps.size() + ts.size()),
            static_cast<double>(inter.size()) / static_cast<double>(uni.size())};
}

/// Border pixels by the 4-adjacency-or-edge rule.
inline std::vector<std::pair<int, int>> surface(const LabelMap& mask, int cls) {
    std::vector<std::pair<int, int>> out;
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x) {
            if (mask.at(y, x) != cls) continue;
            bool border = y == 0 || y == mask.h - 1 || x == 0 || x == mask.w - 1;
            if (!border)
                border = mask.at(y - 1, x) != cls || mask.at(y + 1, x) != cls ||
                         mask.at(y, x - 1) != cls || mask.at(y, x + 1) != cls;
            if (border) out.emplace_back(y, x);
        }
    return out;
}

struct Surface {
    double asd, hd95;
    bool defined;
};

/// All-pairs directed distances, pooled; the percentile uses linear
/// interpolation on the sorted pooled set.
inline Surface surface_metrics(const LabelMap& pred, const LabelMap& truth, int cls) {
    const auto sp = surface(pred, cls);
    const auto st = surface(truth, cls);
    if (sp.empty() && st.empty()) return {0.0, 0.0, true};
    if (sp.empty() || st.empty()) return {0.0, 0.0, false};
    std::vector<double> pooled;
    auto directed = [&](const auto& from, const auto& to) {
        for (auto [y, x] : from) {
            double best = std::numeric_limits<double>::infinity();
            for (auto [ty, tx] : to) {
                const double d = std::sqrt(static_cast<double>((y - ty) * (y - ty)) +
                                           static_cast<double>((x - tx) * (x - tx)));
                best = std::min(best, d);
            }
            pooled.push_back(best);
        }
    };
    directed(sp, st);
    directed(st, sp);
    double sum = 0.0;
    for (double d : pooled) sum += d;
    std::sort(pooled.begin(), pooled.end());
    const size_t n = pooled.size();
    double hd95;
    if (n == 1) {
        hd95 = pooled[0];
    } else {
        const double pos = 0.95 * static_cast<double>(n - 1);
        const size_t lo = static_cast<size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        hd95 = lo + 1 >= n ? pooled[n - 1] : pooled[lo] + frac * (pooled[lo + 1] - pooled[lo]);
    }
    return {sum / static_cast<double>(n), hd95, true};
}

struct Confusion {
    size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion(const LabelMap& pred, const LabelMap& truth, int cls) {
    Confusion c;
    for (size_t k = 0; k < pred.v.size(); ++k) {
        const bool p = pred.v[k] == cls;
        const bool t = truth.v[k] == cls;
        c.tp += p && t;
        c.fp += p && !t;
        c.fn += !p && t;
        c.tn += !p && !t;
    }
    return c;
}

/// Independent f64 re-derivation of 0.5*CE + 0.5*Dice with the same guards.
inline double seg_loss(const std::vector<double>& probs, int c, int h, int w,
                       const std::vector<uint8_t>& target) {
    const int plane = h * w;
    double ce = 0.0;
    for (int k = 0; k < plane; ++k) {
        double p = probs[target[k] * plane + k];
        if (p < 1e-7) p = 1e-7;
        ce += -std::log(p);
    }
    ce /= plane;

    double dice_acc = 0.0;
    for (int cls = 0; cls < c; ++cls) {
        double inter = 0.0, psum = 0.0, ysum = 0.0;
        for (int k = 0; k < plane; ++k) {
            inter += probs[cls * plane + k] * (target[k] == cls ? 1.0 : 0.0);
            psum += probs[cls * plane + k];
            ysum += target[k] == cls ? 1.0 : 0.0;
        }
        dice_acc += (2.0 * inter + 1e-5) / (psum + ysum + 1e-5);
    }
    const double dice_loss = 1.0 - dice_acc / c;
    return 0.5 * ce + 0.5 * dice_loss;
}

}  // namespace oracle
