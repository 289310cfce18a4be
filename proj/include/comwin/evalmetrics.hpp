#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "comwin/core.hpp"

namespace comwin {

// Segmentation quality metrics with unit pixel spacing. Class masks are
// pred == c vs truth == c; metrics are reported per foreground class.

struct OverlapMetrics {
    double dice = 0.0;
    double jaccard = 0.0;
};

/// Both masks empty yields (1, 1) by convention.
OverlapMetrics overlap_metrics(const LabelMap& pred, const LabelMap& truth, int cls);

struct SurfaceMetrics {
    double asd = 0.0;
    double hd95 = 0.0;
    bool defined = true;  // false when exactly one mask is empty
};

/// Surfaces are mask pixels 4-adjacent to a non-mask pixel or the image edge.
/// Directed nearest-surface Euclidean distances from both sides are pooled;
/// ASD is their mean, HD95 the linearly interpolated 95th percentile.
/// Both masks empty yields (0, 0); one-sided empty yields defined == false.
SurfaceMetrics surface_metrics(const LabelMap& pred, const LabelMap& truth, int cls);

struct ClassQuality {
    std::optional<double> precision;  // TP/(TP+FP); empty when TP+FP == 0
    std::optional<double> recall;     // TP/(TP+FN); empty when TP+FN == 0
};

/// Foreground precision/recall of a pseudo label against ground truth.
ClassQuality pseudo_quality(const LabelMap& pseudo, const LabelMap& truth, int cls);

/// Mask pixels that form the surface of class `cls` (exposed for tests).
std::vector<std::pair<int, int>> surface_pixels(const LabelMap& mask, int cls);

/// mean +- std (population) over the defined entries of a value list.
struct AggregateStat {
    double mean = 0.0;
    double stddev = 0.0;
    size_t count = 0;
};
AggregateStat aggregate_stat(const std::vector<double>& values);

/// Accumulates per-sample metrics over a test split and serializes the
/// mean +- std report.
class MetricReport {
public:
    explicit MetricReport(int classes);

    void add_sample(const std::string& id, const LabelMap& pred, const LabelMap& truth);

    nlohmann::json to_json() const;
    std::string to_csv() const;

    /// Mean Dice across foreground classes and samples (acceptance hook).
    double mean_dice() const;

    int classes() const { return classes_; }
    size_t sample_count() const { return ids_.size(); }

private:
    struct Row {
        std::vector<double> dice, jaccard;          // per foreground class
        std::vector<std::optional<double>> asd, hd95;
    };

    int classes_;
    std::vector<std::string> ids_;
    std::vector<Row> rows_;
};

}  // namespace comwin
