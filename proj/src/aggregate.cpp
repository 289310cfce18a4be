#include "comwin/aggregate.hpp"

#include <stdexcept>

namespace comwin {

namespace {

void check_peers(const std::vector<const ProbMap*>& peers, size_t min_count) {
    if (peers.size() < min_count)
        throw std::invalid_argument("aggregation needs at least " + std::to_string(min_count) +
                                    " probability maps, got " + std::to_string(peers.size()));
    for (const ProbMap* p : peers) {
        if (p == nullptr) throw std::invalid_argument("null probability map");
        if (!p->same_shape(*peers.front()))
            throw std::invalid_argument("probability map shape mismatch among peers");
    }
    if (peers.front()->c < 2) throw std::invalid_argument("probability maps need C >= 2");
}

}  // namespace

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::comwin: return "comwin";
        case Strategy::cps: return "cps";
        case Strategy::threshold: return "threshold";
        case Strategy::avg: return "avg";
        case Strategy::vote: return "vote";
    }
    return "?";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "comwin") return Strategy::comwin;
    if (name == "cps") return Strategy::cps;
    if (name == "threshold") return Strategy::threshold;
    if (name == "avg") return Strategy::avg;
    if (name == "vote") return Strategy::vote;
    throw std::invalid_argument("unknown aggregation strategy: " + name);
}

LabelMap comwin_aggregate(const std::vector<const ProbMap*>& peers) {
    check_peers(peers, 1);
    const int c = peers.front()->c, h = peers.front()->h, w = peers.front()->w;
    const size_t plane = peers.front()->plane();
    LabelMap out(h, w);
    for (size_t k = 0; k < plane; ++k) {
        int best_class = 0;
        float best_conf = -1.0f;
        for (int cls = 0; cls < c; ++cls) {
            float conf = peers[0]->v[cls * plane + k];
            for (size_t m = 1; m < peers.size(); ++m)
                conf = std::max(conf, peers[m]->v[cls * plane + k]);
            if (conf > best_conf) {
                best_conf = conf;
                best_class = cls;
            }
        }
        out.v[k] = static_cast<uint8_t>(best_class);
    }
    return out;
}

LabelMap comwin_binary(const std::vector<const ProbMap*>& peers) {
    check_peers(peers, 1);
    if (peers.front()->c != 2)
        throw std::invalid_argument("comwin_binary requires exactly 2 classes");
    const size_t plane = peers.front()->plane();
    LabelMap out(peers.front()->h, peers.front()->w);
    for (size_t k = 0; k < plane; ++k) {
        float bg = peers[0]->v[k];
        float fg = peers[0]->v[plane + k];
        for (size_t m = 1; m < peers.size(); ++m) {
            bg = std::max(bg, peers[m]->v[k]);
            fg = std::max(fg, peers[m]->v[plane + k]);
        }
        out.v[k] = fg > bg ? 1 : 0;
    }
    return out;
}

LabelMap cps_aggregate(const ProbMap& peer) {
    return comwin_aggregate({&peer});
}

LabelMap threshold_aggregate(const ProbMap& peer, double tau) {
    if (peer.c != 2) throw std::invalid_argument("threshold_aggregate requires exactly 2 classes");
    if (!(tau >= 0.5 && tau < 1.0))
        throw std::invalid_argument("tau must lie in [0.5, 1)");
    const size_t plane = peer.plane();
    LabelMap out(peer.h, peer.w);
    for (size_t k = 0; k < plane; ++k)
        out.v[k] = peer.v[plane + k] > tau ? 1 : 0;
    return out;
}

LabelMap average_ensemble(const std::vector<const ProbMap*>& all_probs) {
    check_peers(all_probs, 2);
    const int c = all_probs.front()->c;
    const size_t plane = all_probs.front()->plane();
    LabelMap out(all_probs.front()->h, all_probs.front()->w);
    for (size_t k = 0; k < plane; ++k) {
        int best_class = 0;
        double best_mean = -1.0;
        for (int cls = 0; cls < c; ++cls) {
            double sum = 0.0;
            for (const ProbMap* p : all_probs) sum += p->v[cls * plane + k];
            const double mean = sum / static_cast<double>(all_probs.size());
            if (mean > best_mean) {
                best_mean = mean;
                best_class = cls;
            }
        }
        out.v[k] = static_cast<uint8_t>(best_class);
    }
    return out;
}

LabelMap voting_ensemble(const std::vector<const ProbMap*>& all_probs) {
    check_peers(all_probs, 2);
    const int c = all_probs.front()->c;
    const size_t plane = all_probs.front()->plane();
    LabelMap out(all_probs.front()->h, all_probs.front()->w);
    std::vector<int> votes(static_cast<size_t>(c));
    for (size_t k = 0; k < plane; ++k) {
        std::fill(votes.begin(), votes.end(), 0);
        for (const ProbMap* p : all_probs) {
            int best_class = 0;
            float best = p->v[k];
            for (int cls = 1; cls < c; ++cls)
                if (p->v[cls * plane + k] > best) {
                    best = p->v[cls * plane + k];
                    best_class = cls;
                }
            ++votes[best_class];
        }
        int winner = 0;
        for (int cls = 1; cls < c; ++cls)
            if (votes[cls] > votes[winner]) winner = cls;
        out.v[k] = static_cast<uint8_t>(winner);
    }
    return out;
}

LabelMap aggregate_with(Strategy s, const std::vector<const ProbMap*>& maps, double tau) {
    switch (s) {
        case Strategy::comwin: return comwin_aggregate(maps);
        case Strategy::cps:
            if (maps.size() != 1)
                throw std::invalid_argument("cps aggregation expects exactly one peer map");
            return cps_aggregate(*maps.front());
        case Strategy::threshold:
            if (maps.size() != 1)
                throw std::invalid_argument("threshold aggregation expects exactly one peer map");
            return threshold_aggregate(*maps.front(), tau);
        case Strategy::avg: return average_ensemble(maps);
        case Strategy::vote: return voting_ensemble(maps);
    }
    throw std::invalid_argument("unknown strategy");
}

}  // namespace comwin
