#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "comwin/core.hpp"

namespace comwin {

// Pseudo-label aggregation strategies. All functions are pure: probability
// maps in, hard labels out, no gradient attachment anywhere. Ties are broken
// toward the lowest class index throughout.

enum class Strategy { comwin, cps, threshold, avg, vote };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

/// Provenance-carrying pseudo label as stored by the trainer.
struct PseudoLabel {
    LabelMap labels;
    Strategy strategy = Strategy::comwin;
    int64_t iteration = -1;
    Scale scale = Scale::full;
};

/// Compete-to-win: at each pixel, argmax over classes of the per-class
/// maximum across all peer maps.
LabelMap comwin_aggregate(const std::vector<const ProbMap*>& peers);

/// Binary special case: foreground iff the best peer foreground confidence
/// strictly exceeds the best peer background confidence. Requires C == 2 and
/// agrees with comwin_aggregate under the shared tie rule.
LabelMap comwin_binary(const std::vector<const ProbMap*>& peers);

/// Copy-and-paste: per-pixel argmax of a single peer map.
LabelMap cps_aggregate(const ProbMap& peer);

/// Fixed confidence threshold, binary only: foreground iff p_fg > tau.
/// Requires tau in [0.5, 1).
LabelMap threshold_aggregate(const ProbMap& peer, double tau);

/// Argmax of the elementwise mean over all M maps.
LabelMap average_ensemble(const std::vector<const ProbMap*>& all_probs);

/// Per-pixel majority over the per-map argmax labels.
LabelMap voting_ensemble(const std::vector<const ProbMap*>& all_probs);

/// Dispatch used by the trainer and the CLI. `maps` holds the peer maps for
/// comwin/cps/threshold and all M maps for the ensembles.
LabelMap aggregate_with(Strategy s, const std::vector<const ProbMap*>& maps, double tau);

}  // namespace comwin
