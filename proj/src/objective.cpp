#include "comwin/objective.hpp"

namespace comwin {

double LossBreakdown::recompose() const {
    double total = 0.0;
    for (int si = 0; si < 2; ++si) {
        if (si == 0 && !has_half) continue;
        total += 0.5 * (ce[si][kSup] + dice[si][kSup]);
        total += lambda * 0.5 * (ce[si][kPseudo] + dice[si][kPseudo]);
    }
    return total;
}

double LossBreakdown::sup_ce() const {
    return 0.5 * (ce[1][kSup] + (has_half ? ce[0][kSup] : 0.0));
}

double LossBreakdown::sup_dice() const {
    return 0.5 * (dice[1][kSup] + (has_half ? dice[0][kSup] : 0.0));
}

double LossBreakdown::pseudo_ce() const {
    return lambda * 0.5 * (ce[1][kPseudo] + (has_half ? ce[0][kPseudo] : 0.0));
}

double LossBreakdown::pseudo_dice() const {
    return lambda * 0.5 * (dice[1][kPseudo] + (has_half ? dice[0][kPseudo] : 0.0));
}

double total_objective(const std::vector<LossBreakdown>& breakdowns) {
    double total = 0.0;
    for (const auto& b : breakdowns) total += b.grand_total;
    return total;
}

}  // namespace comwin
