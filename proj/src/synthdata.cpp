#include "comwin/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "comwin/jsonutil.hpp"
#include "comwin/rng.hpp"

namespace comwin {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::string sample_stem(uint64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%05llu.cwt", static_cast<unsigned long long>(index));
    return buf;
}

}  // namespace

void validate_synth_config(const SynthConfig& cfg) {
    if (cfg.height < 32 || cfg.width < 32)
        throw std::invalid_argument("synth config: height and width must be >= 32");
    if (cfg.classes < 2) throw std::invalid_argument("synth config: classes must be >= 2");
    if (!(cfg.labeled_fraction > 0.0 && cfg.labeled_fraction <= 1.0))
        throw std::invalid_argument("synth config: labeled_fraction must be in (0, 1]");
    if (cfg.train_count < 1) throw std::invalid_argument("synth config: train_count must be >= 1");
    if (cfg.test_count < 0) throw std::invalid_argument("synth config: test_count must be >= 0");
    if (cfg.objects_min < 1 || cfg.objects_max < cfg.objects_min)
        throw std::invalid_argument("synth config: bad objects range");
    if (cfg.radius_min < 1.0 || cfg.radius_max < cfg.radius_min)
        throw std::invalid_argument("synth config: bad radius range");
    if (2.0 * cfg.radius_max >= std::min(cfg.height, cfg.width))
        throw std::invalid_argument("synth config: object radius larger than image");
    if (static_cast<int>(cfg.intensity_means.size()) != cfg.classes)
        throw std::invalid_argument("synth config: intensity_means must have one entry per class");
    if (cfg.noise_std < 0.0) throw std::invalid_argument("synth config: noise_std must be >= 0");
}

nlohmann::json synth_config_to_json(const SynthConfig& cfg) {
    nlohmann::json j;
    j["name"] = cfg.name;
    j["height"] = cfg.height;
    j["width"] = cfg.width;
    j["classes"] = cfg.classes;
    j["train_count"] = cfg.train_count;
    j["test_count"] = cfg.test_count;
    j["labeled_fraction"] = cfg.labeled_fraction;
    j["objects_min"] = cfg.objects_min;
    j["objects_max"] = cfg.objects_max;
    j["radius_min"] = cfg.radius_min;
    j["radius_max"] = cfg.radius_max;
    j["intensity_means"] = cfg.intensity_means;
    j["intensity_jitter"] = cfg.intensity_jitter;
    j["noise_std"] = cfg.noise_std;
    j["texture_amp"] = cfg.texture_amp;
    j["seed"] = cfg.seed;
    return j;
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
    SynthConfig def;
    JsonReader r(j, "synth config");
    SynthConfig cfg;
    cfg.name = r.get("name", def.name);
    cfg.height = r.get("height", def.height);
    cfg.width = r.get("width", def.width);
    cfg.classes = r.get("classes", def.classes);
    cfg.train_count = r.get("train_count", def.train_count);
    cfg.test_count = r.get("test_count", def.test_count);
    cfg.labeled_fraction = r.get("labeled_fraction", def.labeled_fraction);
    cfg.objects_min = r.get("objects_min", def.objects_min);
    cfg.objects_max = r.get("objects_max", def.objects_max);
    cfg.radius_min = r.get("radius_min", def.radius_min);
    cfg.radius_max = r.get("radius_max", def.radius_max);
    cfg.intensity_means = r.get("intensity_means", def.intensity_means);
    cfg.intensity_jitter = r.get("intensity_jitter", def.intensity_jitter);
    cfg.noise_std = r.get("noise_std", def.noise_std);
    cfg.texture_amp = r.get("texture_amp", def.texture_amp);
    cfg.seed = r.get("seed", def.seed);
    r.finish();
    validate_synth_config(cfg);
    return cfg;
}

void generate_sample(const SynthConfig& cfg, uint64_t sample_index, Image<float>& image,
                     LabelMap& labels) {
    const int h = cfg.height, w = cfg.width;
    image = Image<float>(h, w);
    labels = LabelMap(h, w, 0);

    Rng rng = stream_rng(cfg.seed, Stream::synth_sample, sample_index);

    // Background: class-0 mean plus two random cosine gratings.
    struct Grating {
        double fx, fy, phase, amp;
    };
    Grating g[2];
    for (auto& gr : g) {
        gr.fx = rng.uniform(0.5, 2.5) / w;
        gr.fy = rng.uniform(0.5, 2.5) / h;
        gr.phase = rng.uniform(0.0, kTwoPi);
        gr.amp = rng.uniform(0.5, 1.0);
    }
    const double bg = cfg.intensity_means[0];
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double t = 0.0;
            for (const auto& gr : g)
                t += gr.amp * std::cos(kTwoPi * (gr.fx * x + gr.fy * y) + gr.phase);
            image.at(y, x) = static_cast<float>(bg + cfg.texture_amp * 0.5 * t);
        }

    // Foreground: axis-aligned ellipses, later objects drawn on top.
    const int n_obj = static_cast<int>(rng.uniform_int(cfg.objects_min, cfg.objects_max));
    for (int i = 0; i < n_obj; ++i) {
        const int cls =
            cfg.classes == 2 ? 1 : static_cast<int>(rng.uniform_int(1, cfg.classes - 1));
        const double a = rng.uniform(cfg.radius_min, cfg.radius_max);
        const double b = rng.uniform(cfg.radius_min, cfg.radius_max);
        const double cx = rng.uniform(a, w - 1 - a);
        const double cy = rng.uniform(b, h - 1 - b);
        const double intensity = cfg.intensity_means[cls] +
                                 rng.uniform(-cfg.intensity_jitter, cfg.intensity_jitter);

        const int y0 = std::max(0, static_cast<int>(std::floor(cy - b)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + b)));
        const int x0 = std::max(0, static_cast<int>(std::floor(cx - a)));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + a)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = (x - cx) / a;
                const double dy = (y - cy) / b;
                if (dx * dx + dy * dy <= 1.0) {
                    labels.at(y, x) = static_cast<uint8_t>(cls);
                    image.at(y, x) = static_cast<float>(intensity);
                }
            }
    }

    // Per-pixel noise, then clamp to [0, 1].
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double val = image.at(y, x) + rng.normal(0.0, cfg.noise_std);
            image.at(y, x) = static_cast<float>(std::clamp(val, 0.0, 1.0));
        }
}

DatasetManifest generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
    validate_synth_config(cfg);

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    fs::create_directories(out_dir / "labels", ec);
    if (!fs::is_directory(out_dir / "images") || !fs::is_directory(out_dir / "labels"))
        throw std::runtime_error("cannot create dataset directories under " + out_dir.string());

    // Split assignment: seeded shuffle of the train indices, labeled first.
    std::vector<uint64_t> train_order(static_cast<size_t>(cfg.train_count));
    for (size_t i = 0; i < train_order.size(); ++i) train_order[i] = i;
    Rng split_rng = stream_rng(cfg.seed, Stream::synth_split);
    split_rng.shuffle(train_order);
    size_t n_labeled = static_cast<size_t>(
        std::llround(cfg.labeled_fraction * static_cast<double>(cfg.train_count)));
    n_labeled = std::clamp<size_t>(n_labeled, 1, train_order.size());

    std::vector<SplitTag> split(static_cast<size_t>(cfg.train_count + cfg.test_count),
                                SplitTag::test);
    for (size_t rank = 0; rank < train_order.size(); ++rank)
        split[train_order[rank]] = rank < n_labeled ? SplitTag::labeled : SplitTag::unlabeled;

    DatasetManifest m;
    m.name = cfg.name;
    m.classes = cfg.classes;
    m.seed = cfg.seed;
    m.synth_config_json = synth_config_to_json(cfg).dump();

    const uint64_t total = static_cast<uint64_t>(cfg.train_count + cfg.test_count);
    Image<float> image;
    LabelMap labels;
    for (uint64_t i = 0; i < total; ++i) {
        generate_sample(cfg, i, image, labels);
        const std::string stem = sample_stem(i);
        write_image(out_dir / "images" / stem, image);
        write_label(out_dir / "labels" / stem, labels);

        SampleEntry e;
        e.image = "images/" + stem;
        e.split = split[i];
        if (e.split != SplitTag::unlabeled) e.label = "labels/" + stem;
        m.samples.push_back(std::move(e));
    }

    save_manifest(m, out_dir / "manifest.json");
    return m;
}

LabelMap downscale_labels(const LabelMap& labels, int factor) {
    if (factor < 1) throw std::invalid_argument("downscale factor must be >= 1");
    if (labels.h % factor != 0 || labels.w % factor != 0)
        throw std::invalid_argument("label dims not divisible by downscale factor");
    LabelMap out(labels.h / factor, labels.w / factor);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) out.at(y, x) = labels.at(y * factor, x * factor);
    return out;
}

std::filesystem::path sidecar_label_path(const std::filesystem::path& image_path) {
    const auto parent = image_path.parent_path();
    if (parent.filename() != "images") return {};
    return parent.parent_path() / "labels" / image_path.filename();
}

}  // namespace comwin
