#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "comwin/core.hpp"
#include "comwin/net.hpp"

namespace comwin {

// Segmentation objective: L_seg = 0.5 * cross-entropy + 0.5 * soft Dice, the
// per-model sum over labeled (weight 1) and unlabeled (weight lambda) items at
// the active scales, and the plain sum over models.

constexpr double kCeClamp = 1e-7;    // probability floor inside the log
constexpr double kDiceEps = 1e-5;    // Dice smoothing

template <typename T>
struct SegLossParts {
    double ce = 0.0;
    double dice = 0.0;
    double total() const { return 0.5 * ce + 0.5 * dice; }
};

/// Per-item loss on a C x H x W probability field. CE is the mean over pixels
/// of -log p_target (clamped); Dice is macro-averaged over all classes with
/// one-hot targets.
template <typename T>
SegLossParts<T> seg_loss_core(const T* probs, int c, int h, int w, const uint8_t* target) {
    const size_t plane = static_cast<size_t>(h) * w;
    SegLossParts<T> out;

    double ce = 0.0;
    for (size_t k = 0; k < plane; ++k) {
        const int cls = target[k];
        if (cls < 0 || cls >= c) throw std::invalid_argument("target class out of range");
        const double p = std::max(static_cast<double>(probs[cls * plane + k]), kCeClamp);
        ce -= std::log(p);
    }
    out.ce = ce / static_cast<double>(plane);

    double dice_sum = 0.0;
    for (int cls = 0; cls < c; ++cls) {
        double inter = 0.0, psum = 0.0, ysum = 0.0;
        const T* pc = probs + static_cast<size_t>(cls) * plane;
        for (size_t k = 0; k < plane; ++k) {
            const double p = static_cast<double>(pc[k]);
            const double y = target[k] == cls ? 1.0 : 0.0;
            inter += p * y;
            psum += p;
            ysum += y;
        }
        dice_sum += (2.0 * inter + kDiceEps) / (psum + ysum + kDiceEps);
    }
    out.dice = 1.0 - dice_sum / static_cast<double>(c);
    return out;
}

/// Gradient of weight * (0.5 CE + 0.5 Dice) w.r.t. the probabilities, added
/// into dprobs. Clamped CE pixels contribute zero gradient.
template <typename T>
void seg_loss_backward_core(const T* probs, int c, int h, int w, const uint8_t* target,
                            double weight, T* dprobs) {
    const size_t plane = static_cast<size_t>(h) * w;
    const double ce_scale = 0.5 * weight / static_cast<double>(plane);
    for (size_t k = 0; k < plane; ++k) {
        const int cls = target[k];
        const double p = static_cast<double>(probs[cls * plane + k]);
        if (p > kCeClamp)
            dprobs[cls * plane + k] -= static_cast<T>(ce_scale / p);
    }

    const double dice_scale = 0.5 * weight / static_cast<double>(c);
    for (int cls = 0; cls < c; ++cls) {
        double inter = 0.0, psum = 0.0, ysum = 0.0;
        const T* pc = probs + static_cast<size_t>(cls) * plane;
        for (size_t k = 0; k < plane; ++k) {
            const double p = static_cast<double>(pc[k]);
            const double y = target[k] == cls ? 1.0 : 0.0;
            inter += p * y;
            psum += p;
            ysum += y;
        }
        const double num = 2.0 * inter + kDiceEps;
        const double den = psum + ysum + kDiceEps;
        T* dc = dprobs + static_cast<size_t>(cls) * plane;
        for (size_t k = 0; k < plane; ++k) {
            const double y = target[k] == cls ? 1.0 : 0.0;
            const double ddice = (2.0 * y * den - num) / (den * den);
            dc[k] -= static_cast<T>(dice_scale * ddice);
        }
    }
}

/// ProbMap convenience used by tests and the eval tooling.
inline SegLossParts<float> seg_loss(const ProbMap& probs, const LabelMap& target) {
    if (probs.h != target.h || probs.w != target.w)
        throw std::invalid_argument("seg_loss shape mismatch");
    return seg_loss_core(probs.v.data(), probs.c, probs.h, probs.w, target.v.data());
}

// ---------------------------------------------------------------------------
// Loss bookkeeping
// ---------------------------------------------------------------------------

/// Per-model ledger: raw (unweighted) CE/Dice sums per scale and term, plus
/// the grand total accumulated independently while the loss was evaluated.
struct LossBreakdown {
    static constexpr int kSup = 0;
    static constexpr int kPseudo = 1;

    double ce[2][2] = {{0, 0}, {0, 0}};    // [scale half|full][term sup|pseudo]
    double dice[2][2] = {{0, 0}, {0, 0}};
    double lambda = 0.0;
    bool has_half = true;
    double grand_total = 0.0;

    static int scale_index(Scale s) { return s == Scale::half ? 0 : 1; }

    /// Weighted recomposition of the parts; must match grand_total.
    double recompose() const;

    // CSV-facing weighted contributions; their sum equals recompose().
    double sup_ce() const;
    double sup_dice() const;
    double pseudo_ce() const;
    double pseudo_dice() const;
};

/// Adds one item's loss into the breakdown and (optionally) its gradient into
/// dprobs. `term` is LossBreakdown::kSup or kPseudo; pseudo terms are weighted
/// by breakdown.lambda.
template <typename T>
void accumulate_item_loss(LossBreakdown& b, Scale scale, int term, const Tensor4<T>& probs,
                          int item, const uint8_t* target, Tensor4<T>* dprobs) {
    const T* p = probs.p(item, 0);
    const auto parts = seg_loss_core(p, probs.c, probs.h, probs.w, target);
    const int si = LossBreakdown::scale_index(scale);
    b.ce[si][term] += parts.ce;
    b.dice[si][term] += parts.dice;
    const double weight = term == LossBreakdown::kPseudo ? b.lambda : 1.0;
    b.grand_total += weight * parts.total();
    if (dprobs && weight != 0.0)
        seg_loss_backward_core(p, probs.c, probs.h, probs.w, target, weight,
                               dprobs->p(item, 0));
}

/// Eq.-style ensemble total: plain sum of the per-model grand totals.
double total_objective(const std::vector<LossBreakdown>& breakdowns);

}  // namespace comwin
