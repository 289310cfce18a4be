#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "comwin/aggregate.hpp"
#include "comwin/arrayio.hpp"
#include "comwin/core.hpp"
#include "comwin/net.hpp"
#include "comwin/objective.hpp"

namespace comwin {

// M-model co-training loop: batch assembly, peer inference in eval mode,
// pseudo-label aggregation at both scales, boundary-mask construction, one
// joint SGD step per iteration, CSV logging and periodic checkpoints.

struct TrainConfig {
    std::string manifest;  // dataset manifest path
    int models = 3;        // M
    Strategy strategy = Strategy::comwin;
    double tau = 0.7;      // threshold strategy only
    double lambda = 0.5;
    int window = 4;
    int batch_labeled = 2;
    int batch_unlabeled = 2;
    int iterations = 6000;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::string schedule = "step";  // "step" or "poly"
    int step_every = 2500;
    double step_gamma = 0.1;
    double poly_power = 0.9;
    uint64_t seed = 1;
    bool dsbe = true;
    bool force_equal_init = false;  // degeneracy experiments
    bool aug_flip = true;
    bool aug_rot90 = true;
    int base_channels = 6;
    int stages = 2;
    int checkpoint_every = 500;
};

void validate_train_config(const TrainConfig& cfg);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Learning rate at a 0-based iteration index.
double schedule_lr(const TrainConfig& cfg, int64_t iter);

struct ModelRecord {
    LossBreakdown loss;
    double pl_precision = std::numeric_limits<double>::quiet_NaN();
    double pl_recall = std::numeric_limits<double>::quiet_NaN();
    double win_conf = std::numeric_limits<double>::quiet_NaN();
};

struct IterationRecord {
    int64_t iter = 0;
    double lr = 0.0;
    std::vector<ModelRecord> models;
};

std::string csv_header(int models);
std::string csv_row(const IterationRecord& rec);

// Augmentations, applied identically to images and labels.
template <typename T>
Image<T> flip_horizontal(const Image<T>& in) {
    Image<T> out(in.h, in.w);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) out.at(y, x) = in.at(y, in.w - 1 - x);
    return out;
}

/// Counter-clockwise quarter turns; requires a square grid.
template <typename T>
Image<T> rotate90(const Image<T>& in, int quarter_turns) {
    if (in.h != in.w) throw std::invalid_argument("rotate90 requires square grids");
    Image<T> cur = in;
    for (int t = 0; t < ((quarter_turns % 4) + 4) % 4; ++t) {
        Image<T> next(cur.h, cur.w);
        for (int y = 0; y < cur.h; ++y)
            for (int x = 0; x < cur.w; ++x) next.at(cur.w - 1 - x, y) = cur.at(y, x);
        cur = std::move(next);
    }
    return cur;
}

class Trainer {
public:
    Trainer(TrainConfig cfg, std::filesystem::path run_dir);
    ~Trainer();

    /// Loads the dataset, builds the ensemble, writes the config snapshot and
    /// the CSV header.
    void init();

    /// One training iteration; appends a CSV row. Valid after init().
    IterationRecord step();

    /// Full loop with periodic checkpoints and the divergence guard.
    void run();

    int64_t iteration() const { return iter_; }
    const TrainConfig& config() const { return cfg_; }

    /// Debug capture of iteration-level pseudo labels (degeneracy tests).
    struct Capture {
        bool enabled = false;
        // [model][unlabeled batch item]
        std::vector<std::vector<LabelMap>> pseudo_full;
        std::vector<std::vector<LabelMap>> own_argmax_full;
    };
    void enable_capture() { capture_.enabled = true; }
    const Capture& capture() const { return capture_; }

    /// Trainable parameter bytes of every model, for paired-run comparisons.
    std::string param_digest();

    void save_checkpoints(const std::string& tag);

private:
    struct Sample {
        Image<float> image;
        LabelMap truth;      // empty when absent
        bool has_truth = false;
    };
    struct AugmentedItem {
        Image<float> image;
        LabelMap truth;
        bool has_truth = false;
    };

    AugmentedItem load_augmented(size_t sample_idx, Rng& aug_rng);

    TrainConfig cfg_;
    std::filesystem::path run_dir_;
    DatasetManifest manifest_;
    std::filesystem::path data_root_;
    std::vector<Sample> samples_;
    std::vector<size_t> labeled_idx_, unlabeled_idx_;

    ModelEnsemble<float> ensemble_;
    std::vector<std::vector<std::vector<float>>> velocity_;  // [model][param]

    std::unique_ptr<class CyclicSampler> labeled_sampler_, unlabeled_sampler_;
    Rng aug_labeled_rng_{0}, aug_unlabeled_rng_{0};

    int64_t iter_ = 0;
    bool initialized_ = false;
    std::unique_ptr<std::ofstream> log_;
    Capture capture_;
};

// ---------------------------------------------------------------------------
// Prediction from checkpoints
// ---------------------------------------------------------------------------

enum class PredictMode { first, ensemble };
PredictMode predict_mode_from_name(const std::string& name);

struct LoadedEnsemble {
    std::vector<std::unique_ptr<SegNet<float>>> models;
    NetConfig net;
    int64_t iteration = 0;
};

LoadedEnsemble load_ensemble_checkpoint(const std::filesystem::path& checkpoint_dir);

/// Full-resolution probability map with the model's own half-scale prediction
/// supplying the boundary mask (two forward passes when DSBE is enabled).
ProbMap predict_prob(SegNet<float>& model, const Image<float>& image);

LabelMap predict(LoadedEnsemble& ensemble, const Image<float>& image, PredictMode mode);

}  // namespace comwin
