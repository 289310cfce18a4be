#include "comwin/dsbe.hpp"

namespace comwin {

BoundaryMask detect_boundary_windows(const LabelMap& labels, int window) {
    if (window < 2) throw std::invalid_argument("window size must be >= 2");
    BoundaryMask m;
    m.h = labels.h;
    m.w = labels.w;
    m.window = window;
    m.gh = (labels.h + window - 1) / window;
    m.gw = (labels.w + window - 1) / window;
    m.win.assign(static_cast<size_t>(m.gh) * m.gw, 0);

    for (int gi = 0; gi < m.gh; ++gi)
        for (int gj = 0; gj < m.gw; ++gj) {
            const int y0 = gi * window, x0 = gj * window;
            const int y1 = std::min(y0 + window, labels.h);
            const int x1 = std::min(x0 + window, labels.w);
            const uint8_t first = labels.at(y0, x0);
            bool mixed = false;
            for (int y = y0; y < y1 && !mixed; ++y)
                for (int x = x0; x < x1; ++x)
                    if (labels.at(y, x) != first) {
                        mixed = true;
                        break;
                    }
            m.win[static_cast<size_t>(gi) * m.gw + gj] = mixed ? 1 : 0;
        }
    return m;
}

uint64_t attention_cost(const BoundaryMask& mask) {
    uint64_t cost = 0;
    for (int gi = 0; gi < mask.gh; ++gi)
        for (int gj = 0; gj < mask.gw; ++gj) {
            if (!mask.at(gi, gj)) continue;
            const int th = std::min(mask.window, mask.h - gi * mask.window);
            const int tw = std::min(mask.window, mask.w - gj * mask.window);
            const uint64_t nt = static_cast<uint64_t>(th) * tw;
            cost += nt * nt;
        }
    return cost;
}

}  // namespace comwin
