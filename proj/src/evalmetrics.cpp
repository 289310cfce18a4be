#include "comwin/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace comwin {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_dims(const LabelMap& a, const LabelMap& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("label map shape mismatch");
}

/// 1D squared-distance lower envelope (Felzenszwalb-Huttenlocher).
void dt1d(const std::vector<double>& f, int n, std::vector<double>& d, std::vector<int>& v,
          std::vector<double>& z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = (q - v[k]) * (double)(q - v[k]) + f[v[k]];
    }
}

/// Exact squared Euclidean distance transform to a non-empty feature set.
/// Feature-free columns are capped at h + w row units, which exceeds any true
/// distance, so capping never changes a reachable result.
std::vector<double> edt_squared(const std::vector<uint8_t>& feature, int h, int w) {
    const double cap = static_cast<double>(h + w);
    std::vector<double> g(static_cast<size_t>(h) * w, cap);

    // Vertical pass: row distance to the nearest feature in the same column.
    for (int x = 0; x < w; ++x) {
        double d = cap;
        for (int y = 0; y < h; ++y) {
            d = feature[static_cast<size_t>(y) * w + x] ? 0.0 : std::min(d + 1.0, cap);
            g[static_cast<size_t>(y) * w + x] = d;
        }
        d = cap;
        for (int y = h - 1; y >= 0; --y) {
            d = feature[static_cast<size_t>(y) * w + x] ? 0.0 : std::min(d + 1.0, cap);
            g[static_cast<size_t>(y) * w + x] = std::min(g[static_cast<size_t>(y) * w + x], d);
        }
    }

    // Horizontal pass over squared row distances.
    std::vector<double> out(g.size());
    std::vector<double> f(static_cast<size_t>(w)), drow(static_cast<size_t>(w));
    std::vector<int> v(static_cast<size_t>(w) + 1);
    std::vector<double> z(static_cast<size_t>(w) + 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gv = g[static_cast<size_t>(y) * w + x];
            f[x] = gv * gv;
        }
        dt1d(f, w, drow, v, z);
        for (int x = 0; x < w; ++x) out[static_cast<size_t>(y) * w + x] = drow[x];
    }
    return out;
}

double percentile95(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n == 1) return values[0];
    const double pos = 0.95 * static_cast<double>(n - 1);
    const size_t lo = static_cast<size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= n) return values[n - 1];
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

}  // namespace

OverlapMetrics overlap_metrics(const LabelMap& pred, const LabelMap& truth, int cls) {
    check_dims(pred, truth);
    size_t np = 0, nt = 0, ni = 0;
    const uint8_t c = static_cast<uint8_t>(cls);
    for (size_t k = 0; k < pred.v.size(); ++k) {
        const bool p = pred.v[k] == c;
        const bool t = truth.v[k] == c;
        np += p;
        nt += t;
        ni += p && t;
    }
    if (np == 0 && nt == 0) return {1.0, 1.0};
    OverlapMetrics m;
    m.dice = 2.0 * static_cast<double>(ni) / static_cast<double>(np + nt);
    m.jaccard = static_cast<double>(ni) / static_cast<double>(np + nt - ni);
    return m;
}

std::vector<std::pair<int, int>> surface_pixels(const LabelMap& mask, int cls) {
    const uint8_t c = static_cast<uint8_t>(cls);
    std::vector<std::pair<int, int>> out;
    auto inside = [&](int y, int x) {
        return y >= 0 && y < mask.h && x >= 0 && x < mask.w && mask.at(y, x) == c;
    };
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x) {
            if (mask.at(y, x) != c) continue;
            if (!inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) || !inside(y, x + 1))
                out.emplace_back(y, x);
        }
    return out;
}

SurfaceMetrics surface_metrics(const LabelMap& pred, const LabelMap& truth, int cls) {
    check_dims(pred, truth);
    const auto sp = surface_pixels(pred, cls);
    const auto st = surface_pixels(truth, cls);

    if (sp.empty() && st.empty()) return {0.0, 0.0, true};
    if (sp.empty() || st.empty()) return {0.0, 0.0, false};

    auto mark = [&](const std::vector<std::pair<int, int>>& pts) {
        std::vector<uint8_t> m(static_cast<size_t>(pred.h) * pred.w, 0);
        for (auto [y, x] : pts) m[static_cast<size_t>(y) * pred.w + x] = 1;
        return m;
    };
    const auto dist2_to_t = edt_squared(mark(st), pred.h, pred.w);
    const auto dist2_to_p = edt_squared(mark(sp), pred.h, pred.w);

    std::vector<double> pooled;
    pooled.reserve(sp.size() + st.size());
    for (auto [y, x] : sp) pooled.push_back(std::sqrt(dist2_to_t[static_cast<size_t>(y) * pred.w + x]));
    for (auto [y, x] : st) pooled.push_back(std::sqrt(dist2_to_p[static_cast<size_t>(y) * pred.w + x]));

    SurfaceMetrics m;
    double sum = 0.0;
    for (double d : pooled) sum += d;
    m.asd = sum / static_cast<double>(pooled.size());
    m.hd95 = percentile95(pooled);
    return m;
}

ClassQuality pseudo_quality(const LabelMap& pseudo, const LabelMap& truth, int cls) {
    check_dims(pseudo, truth);
    const uint8_t c = static_cast<uint8_t>(cls);
    size_t tp = 0, fp = 0, fn = 0;
    for (size_t k = 0; k < pseudo.v.size(); ++k) {
        const bool p = pseudo.v[k] == c;
        const bool t = truth.v[k] == c;
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
    }
    ClassQuality q;
    if (tp + fp > 0) q.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) q.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return q;
}

AggregateStat aggregate_stat(const std::vector<double>& values) {
    AggregateStat s;
    s.count = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

MetricReport::MetricReport(int classes) : classes_(classes) {
    if (classes < 2) throw std::invalid_argument("MetricReport needs classes >= 2");
}

void MetricReport::add_sample(const std::string& id, const LabelMap& pred,
                              const LabelMap& truth) {
    Row row;
    for (int c = 1; c < classes_; ++c) {
        const auto ov = overlap_metrics(pred, truth, c);
        row.dice.push_back(ov.dice);
        row.jaccard.push_back(ov.jaccard);
        const auto sf = surface_metrics(pred, truth, c);
        row.asd.push_back(sf.defined ? std::optional<double>(sf.asd) : std::nullopt);
        row.hd95.push_back(sf.defined ? std::optional<double>(sf.hd95) : std::nullopt);
    }
    ids_.push_back(id);
    rows_.push_back(std::move(row));
}

namespace {

nlohmann::json stat_json(const AggregateStat& s) {
    nlohmann::json j;
    j["mean"] = s.mean;
    j["std"] = s.stddev;
    j["n"] = s.count;
    return j;
}

}  // namespace

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j;
    j["classes"] = classes_;
    j["samples"] = nlohmann::json::array();
    for (size_t i = 0; i < rows_.size(); ++i) {
        nlohmann::json js;
        js["id"] = ids_[i];
        for (int c = 1; c < classes_; ++c) {
            nlohmann::json jc;
            jc["dice"] = rows_[i].dice[c - 1];
            jc["jaccard"] = rows_[i].jaccard[c - 1];
            if (rows_[i].asd[c - 1]) jc["asd"] = *rows_[i].asd[c - 1];
            if (rows_[i].hd95[c - 1]) jc["hd95"] = *rows_[i].hd95[c - 1];
            js["class_" + std::to_string(c)] = std::move(jc);
        }
        j["samples"].push_back(std::move(js));
    }

    auto collect = [&](auto getter) {
        nlohmann::json agg;
        std::vector<double> pooled;
        for (int c = 1; c < classes_; ++c) {
            std::vector<double> vals;
            for (const auto& row : rows_) {
                auto v = getter(row, c - 1);
                if (v) {
                    vals.push_back(*v);
                    pooled.push_back(*v);
                }
            }
            agg["class_" + std::to_string(c)] = stat_json(aggregate_stat(vals));
        }
        agg["mean"] = stat_json(aggregate_stat(pooled));
        return agg;
    };
    j["aggregate"]["dice"] = collect(
        [](const Row& r, int i) { return std::optional<double>(r.dice[i]); });
    j["aggregate"]["jaccard"] = collect(
        [](const Row& r, int i) { return std::optional<double>(r.jaccard[i]); });
    j["aggregate"]["asd"] = collect([](const Row& r, int i) { return r.asd[i]; });
    j["aggregate"]["hd95"] = collect([](const Row& r, int i) { return r.hd95[i]; });
    return j;
}

std::string MetricReport::to_csv() const {
    std::string out = "id";
    for (int c = 1; c < classes_; ++c) {
        const std::string suffix = "_c" + std::to_string(c);
        out += ",dice" + suffix + ",jaccard" + suffix + ",asd" + suffix + ",hd95" + suffix;
    }
    out += "\n";
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        return std::string(buf);
    };
    for (size_t i = 0; i < rows_.size(); ++i) {
        out += ids_[i];
        for (int c = 1; c < classes_; ++c) {
            out += "," + fmt(rows_[i].dice[c - 1]);
            out += "," + fmt(rows_[i].jaccard[c - 1]);
            out += rows_[i].asd[c - 1] ? "," + fmt(*rows_[i].asd[c - 1]) : ",";
            out += rows_[i].hd95[c - 1] ? "," + fmt(*rows_[i].hd95[c - 1]) : ",";
        }
        out += "\n";
    }
    return out;
}

double MetricReport::mean_dice() const {
    std::vector<double> pooled;
    for (const auto& row : rows_)
        for (double d : row.dice) pooled.push_back(d);
    return aggregate_stat(pooled).mean;
}

}  // namespace comwin
