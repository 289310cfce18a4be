#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "comwin/arrayio.hpp"
#include "comwin/core.hpp"

namespace comwin {

/// Parameters of the synthetic 2D segmentation corpus: textured background,
/// axis-aligned ellipse foreground objects with per-object intensity jitter,
/// additive Gaussian pixel noise.
struct SynthConfig {
    std::string name = "synth";
    int height = 32;
    int width = 32;
    int classes = 2;
    int train_count = 200;
    int test_count = 40;
    double labeled_fraction = 0.05;
    int objects_min = 1;
    int objects_max = 3;
    double radius_min = 3.0;
    double radius_max = 7.0;
    std::vector<double> intensity_means = {0.35, 0.75};  // one per class, background first
    double intensity_jitter = 0.10;                      // uniform +- per object
    double noise_std = 0.12;
    double texture_amp = 0.10;  // background cosine-grating amplitude
    uint64_t seed = 1;
};

/// Throws std::invalid_argument on degenerate settings.
void validate_synth_config(const SynthConfig& cfg);

nlohmann::json synth_config_to_json(const SynthConfig& cfg);
/// Unknown keys are an error (catches config typos).
SynthConfig synth_config_from_json(const nlohmann::json& j);

/// Writes images (f32 in [0,1]) and labels (u8) in CWT1 format under
/// out_dir/images and out_dir/labels, plus out_dir/manifest.json. Sample i is
/// generated from derive_seed(master, i), so content is independent of
/// generation order. Label files are written for every sample; the manifest
/// references them only for labeled and test entries.
DatasetManifest generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir);

/// Generates one sample in isolation (used by tests and by generate_dataset).
void generate_sample(const SynthConfig& cfg, uint64_t sample_index, Image<float>& image,
                     LabelMap& labels);

/// Nearest-neighbor label downscaling: output(y, x) = input(y*factor, x*factor).
/// Requires H and W divisible by factor.
LabelMap downscale_labels(const LabelMap& labels, int factor);

/// Ground-truth sidecar convention: the generator stores a label file for
/// every sample at <dir>/labels/<stem>, also for unlabeled entries whose
/// manifest rows reference no label. Returns empty path when the convention
/// does not apply.
std::filesystem::path sidecar_label_path(const std::filesystem::path& image_path);

}  // namespace comwin
