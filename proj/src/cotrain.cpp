#include "comwin/cotrain.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "comwin/dsbe.hpp"
#include "comwin/evalmetrics.hpp"
#include "comwin/jsonutil.hpp"
#include "comwin/synthdata.hpp"

namespace comwin {

namespace {

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

uint64_t fnv1a(uint64_t h, const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.manifest.empty()) throw std::invalid_argument("train config: manifest path required");
    if (cfg.models < 2) throw std::invalid_argument("train config: models must be >= 2");
    if (cfg.lambda < 0.0) throw std::invalid_argument("train config: lambda must be >= 0");
    if (cfg.window < 2) throw std::invalid_argument("train config: window must be >= 2");
    if (cfg.batch_labeled < 1 || cfg.batch_unlabeled < 1)
        throw std::invalid_argument("train config: batch sizes must be >= 1");
    if (cfg.iterations < 1) throw std::invalid_argument("train config: iterations must be >= 1");
    if (cfg.lr <= 0.0) throw std::invalid_argument("train config: lr must be > 0");
    if (cfg.schedule != "step" && cfg.schedule != "poly")
        throw std::invalid_argument("train config: schedule must be 'step' or 'poly'");
    if (cfg.step_every < 1) throw std::invalid_argument("train config: step_every must be >= 1");
    if (cfg.strategy == Strategy::threshold && !(cfg.tau >= 0.5 && cfg.tau < 1.0))
        throw std::invalid_argument("train config: tau must lie in [0.5, 1)");
    if (cfg.base_channels < 1)
        throw std::invalid_argument("train config: base_channels must be >= 1");
    if (cfg.stages < 2 || cfg.stages > 8)
        throw std::invalid_argument("train config: stages must lie in [2, 8]");
    if (cfg.checkpoint_every < 0)
        throw std::invalid_argument("train config: checkpoint_every must be >= 0");
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["manifest"] = cfg.manifest;
    j["models"] = cfg.models;
    j["strategy"] = strategy_name(cfg.strategy);
    j["tau"] = cfg.tau;
    j["lambda"] = cfg.lambda;
    j["window"] = cfg.window;
    j["batch_labeled"] = cfg.batch_labeled;
    j["batch_unlabeled"] = cfg.batch_unlabeled;
    j["iterations"] = cfg.iterations;
    j["lr"] = cfg.lr;
    j["momentum"] = cfg.momentum;
    j["weight_decay"] = cfg.weight_decay;
    j["schedule"] = cfg.schedule;
    j["step_every"] = cfg.step_every;
    j["step_gamma"] = cfg.step_gamma;
    j["poly_power"] = cfg.poly_power;
    j["seed"] = cfg.seed;
    j["dsbe"] = cfg.dsbe;
    j["force_equal_init"] = cfg.force_equal_init;
    j["aug_flip"] = cfg.aug_flip;
    j["aug_rot90"] = cfg.aug_rot90;
    j["base_channels"] = cfg.base_channels;
    j["stages"] = cfg.stages;
    j["checkpoint_every"] = cfg.checkpoint_every;
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig def;
    JsonReader r(j, "train config");
    TrainConfig cfg;
    cfg.manifest = r.require<std::string>("manifest");
    cfg.models = r.get("models", def.models);
    cfg.strategy = strategy_from_name(r.get<std::string>("strategy", "comwin"));
    cfg.tau = r.get("tau", def.tau);
    cfg.lambda = r.get("lambda", def.lambda);
    cfg.window = r.get("window", def.window);
    cfg.batch_labeled = r.get("batch_labeled", def.batch_labeled);
    cfg.batch_unlabeled = r.get("batch_unlabeled", def.batch_unlabeled);
    cfg.iterations = r.get("iterations", def.iterations);
    cfg.lr = r.get("lr", def.lr);
    cfg.momentum = r.get("momentum", def.momentum);
    cfg.weight_decay = r.get("weight_decay", def.weight_decay);
    cfg.schedule = r.get("schedule", def.schedule);
    cfg.step_every = r.get("step_every", def.step_every);
    cfg.step_gamma = r.get("step_gamma", def.step_gamma);
    cfg.poly_power = r.get("poly_power", def.poly_power);
    cfg.seed = r.get("seed", def.seed);
    cfg.dsbe = r.get("dsbe", def.dsbe);
    cfg.force_equal_init = r.get("force_equal_init", def.force_equal_init);
    cfg.aug_flip = r.get("aug_flip", def.aug_flip);
    cfg.aug_rot90 = r.get("aug_rot90", def.aug_rot90);
    cfg.base_channels = r.get("base_channels", def.base_channels);
    cfg.stages = r.get("stages", def.stages);
    cfg.checkpoint_every = r.get("checkpoint_every", def.checkpoint_every);
    r.finish();
    validate_train_config(cfg);
    return cfg;
}

double schedule_lr(const TrainConfig& cfg, int64_t iter) {
    if (cfg.schedule == "poly") {
        const double frac = static_cast<double>(iter) / static_cast<double>(cfg.iterations);
        return cfg.lr * std::pow(1.0 - frac, cfg.poly_power);
    }
    return cfg.lr * std::pow(cfg.step_gamma, static_cast<double>(iter / cfg.step_every));
}

std::string csv_header(int models) {
    std::string out = "iter,lr";
    for (int m = 1; m <= models; ++m) {
        const std::string p = ",m" + std::to_string(m) + "_";
        out += p + "loss_total" + p + "loss_sup_ce" + p + "loss_sup_dice" + p + "loss_pseudo_ce" +
               p + "loss_pseudo_dice" + p + "pl_precision" + p + "pl_recall" + p + "win_conf";
    }
    return out;
}

std::string csv_row(const IterationRecord& rec) {
    std::string out = std::to_string(rec.iter) + "," + fmt_g(rec.lr);
    for (const auto& m : rec.models) {
        out += "," + fmt_g(m.loss.grand_total);
        out += "," + fmt_g(m.loss.sup_ce());
        out += "," + fmt_g(m.loss.sup_dice());
        out += "," + fmt_g(m.loss.pseudo_ce());
        out += "," + fmt_g(m.loss.pseudo_dice());
        out += "," + fmt_g(m.pl_precision);
        out += "," + fmt_g(m.pl_recall);
        out += "," + fmt_g(m.win_conf);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sampler
// ---------------------------------------------------------------------------

/// Epoch-reshuffled cyclic index stream.
class CyclicSampler {
public:
    CyclicSampler(size_t n, Rng rng) : rng_(rng), order_(n), pos_(n) {
        std::iota(order_.begin(), order_.end(), size_t{0});
    }

    size_t next() {
        if (pos_ >= order_.size()) {
            rng_.shuffle(order_);
            pos_ = 0;
        }
        return order_[pos_++];
    }

private:
    Rng rng_;
    std::vector<size_t> order_;
    size_t pos_;
};

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, std::filesystem::path run_dir)
    : cfg_(std::move(cfg)), run_dir_(std::move(run_dir)) {
    validate_train_config(cfg_);
}

Trainer::~Trainer() = default;

Trainer::AugmentedItem Trainer::load_augmented(size_t sample_idx, Rng& aug_rng) {
    const Sample& s = samples_[sample_idx];
    AugmentedItem out;
    out.image = s.image;
    out.truth = s.truth;
    out.has_truth = s.has_truth;
    if (cfg_.aug_flip && aug_rng.uniform() < 0.5) {
        out.image = flip_horizontal(out.image);
        if (out.has_truth) out.truth = flip_horizontal(out.truth);
    }
    if (cfg_.aug_rot90 && aug_rng.uniform() < 0.5) {
        const int k = static_cast<int>(aug_rng.uniform_int(1, 3));
        out.image = rotate90(out.image, k);
        if (out.has_truth) out.truth = rotate90(out.truth, k);
    }
    return out;
}

void Trainer::init() {
    if (initialized_) return;

    manifest_ = load_manifest(cfg_.manifest);
    data_root_ = std::filesystem::path(cfg_.manifest).parent_path();

    samples_.resize(manifest_.samples.size());
    labeled_idx_ = manifest_.indices(SplitTag::labeled);
    unlabeled_idx_ = manifest_.indices(SplitTag::unlabeled);
    if (labeled_idx_.empty()) throw std::runtime_error("empty labeled split in manifest");

    auto load_one = [&](size_t idx, bool want_truth) {
        const auto& e = manifest_.samples[idx];
        Sample& s = samples_[idx];
        s.image = read_image_f32(data_root_ / e.image);
        if (e.label) {
            s.truth = read_label_u8(data_root_ / *e.label);
            s.has_truth = true;
        } else if (want_truth) {
            // Metrics-only ground truth via the generator's sidecar convention.
            const auto sidecar = sidecar_label_path(data_root_ / e.image);
            if (!sidecar.empty() && std::filesystem::exists(sidecar)) {
                s.truth = read_label_u8(sidecar);
                s.has_truth = true;
            }
        }
        if (s.image.h % (1 << cfg_.stages) != 0 || s.image.w % (1 << cfg_.stages) != 0)
            throw std::runtime_error("sample extents must be divisible by 2^stages: " + e.image);
        if (s.has_truth && !s.truth.same_shape(LabelMap(s.image.h, s.image.w)))
            throw std::runtime_error("label shape mismatch for " + e.image);
        if (s.has_truth)
            for (uint8_t v : s.truth.v)
                if (v >= manifest_.classes)
                    throw std::runtime_error("label value out of range in " + e.image);
    };
    for (size_t idx : labeled_idx_) load_one(idx, false);
    for (size_t idx : unlabeled_idx_) load_one(idx, true);

    NetConfig net;
    net.in_channels = 1;
    net.classes = manifest_.classes;
    net.base_channels = cfg_.base_channels;
    net.stages = cfg_.stages;
    net.dsbe = cfg_.dsbe;
    net.window = cfg_.window;
    ensemble_ = ModelEnsemble<float>::create(net, cfg_.models, cfg_.seed, cfg_.force_equal_init);

    velocity_.resize(cfg_.models);
    for (int m = 0; m < cfg_.models; ++m) {
        for (auto& pv : ensemble_.models[m]->params())
            velocity_[m].emplace_back(pv.value->size(), 0.0f);
    }

    labeled_sampler_ = std::make_unique<CyclicSampler>(
        labeled_idx_.size(), stream_rng(cfg_.seed, Stream::sampler_labeled));
    unlabeled_sampler_ = std::make_unique<CyclicSampler>(
        unlabeled_idx_.size(), stream_rng(cfg_.seed, Stream::sampler_unlabeled));
    aug_labeled_rng_ = stream_rng(cfg_.seed, Stream::aug_labeled);
    aug_unlabeled_rng_ = stream_rng(cfg_.seed, Stream::aug_unlabeled);

    std::filesystem::create_directories(run_dir_);
    {
        std::ofstream f(run_dir_ / "config.json", std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write config snapshot in " + run_dir_.string());
        f << train_config_to_json(cfg_).dump(2) << "\n";
    }
    log_ = std::make_unique<std::ofstream>(run_dir_ / "log.csv", std::ios::trunc);
    if (!*log_) throw std::runtime_error("cannot open log.csv in " + run_dir_.string());
    *log_ << csv_header(cfg_.models) << "\n";
    log_->flush();

    initialized_ = true;
}

IterationRecord Trainer::step() {
    if (!initialized_) throw std::logic_error("Trainer::step before init");

    const int m_count = cfg_.models;
    const int bl = cfg_.batch_labeled;
    const int bu = unlabeled_idx_.empty() ? 0 : cfg_.batch_unlabeled;
    const int classes = manifest_.classes;
    const int h = samples_[labeled_idx_[0]].image.h;
    const int w = samples_[labeled_idx_[0]].image.w;

    IterationRecord rec;
    rec.iter = iter_;
    rec.lr = schedule_lr(cfg_, iter_);

    // --- batch assembly -----------------------------------------------------
    std::vector<AugmentedItem> lab(bl);
    for (int i = 0; i < bl; ++i)
        lab[i] = load_augmented(labeled_idx_[labeled_sampler_->next()], aug_labeled_rng_);
    std::vector<AugmentedItem> unl(bu);
    for (int i = 0; i < bu; ++i)
        unl[i] = load_augmented(unlabeled_idx_[unlabeled_sampler_->next()], aug_unlabeled_rng_);

    Tensor4<float> lx(bl, 1, h, w);
    std::vector<LabelMap> ltruth_half(bl);
    std::vector<BoundaryMask> lmasks;
    for (int i = 0; i < bl; ++i) {
        std::copy(lab[i].image.v.begin(), lab[i].image.v.end(), lx.p(i, 0));
        ltruth_half[i] = downscale_labels(lab[i].truth, 2);
        if (cfg_.dsbe) lmasks.push_back(detect_boundary_windows(ltruth_half[i], cfg_.window));
    }
    Tensor4<float> ux(std::max(bu, 1), 1, h, w);
    for (int i = 0; i < bu; ++i)
        std::copy(unl[i].image.v.begin(), unl[i].image.v.end(), ux.p(i, 0));

    // --- peer inference (eval mode, detached) -------------------------------
    // Peers are queried exactly like deployed models: with DSBE on, a first
    // pass derives each model's own boundary mask from its half-scale
    // prediction and a second pass applies the attention.
    struct PeerOut {
        std::vector<ProbMap> full, half;
    };
    std::vector<PeerOut> peer(m_count);
    if (bu > 0) {
        for (int m = 0; m < m_count; ++m) {
            auto& net = *ensemble_.models[m];
            auto out = net.forward(ux, nullptr, Mode::eval);
            if (cfg_.dsbe) {
                std::vector<BoundaryMask> self_masks;
                for (int i = 0; i < bu; ++i)
                    self_masks.push_back(detect_boundary_windows(
                        argmax_labels(prob_slice(out.prob_half, i)), cfg_.window));
                out = net.forward(ux, &self_masks, Mode::eval);
            }
            for (int i = 0; i < bu; ++i) {
                peer[m].full.push_back(prob_slice(out.prob_full, i));
                peer[m].half.push_back(prob_slice(out.prob_half, i));
            }
        }
    }

    auto peer_set = [&](int m) {
        std::vector<int> js;
        switch (cfg_.strategy) {
            case Strategy::comwin:
                for (int j = 0; j < m_count; ++j)
                    if (j != m) js.push_back(j);
                break;
            case Strategy::cps:
            case Strategy::threshold:
                js.push_back((m + 1) % m_count);
                break;
            case Strategy::avg:
            case Strategy::vote:
                for (int j = 0; j < m_count; ++j) js.push_back(j);
                break;
        }
        return js;
    };

    // --- pseudo labels at both scales, per model ----------------------------
    std::vector<std::vector<LabelMap>> pseudo_full(m_count), pseudo_half(m_count);
    rec.models.resize(m_count);
    if (capture_.enabled) {
        capture_.pseudo_full.assign(m_count, {});
        capture_.own_argmax_full.assign(m_count, {});
    }
    for (int m = 0; m < m_count; ++m) {
        double win_sum = 0.0;
        size_t win_count = 0;
        size_t tp = 0, fp = 0, fn = 0;
        bool truth_seen = false;
        const auto js = peer_set(m);
        for (int i = 0; i < bu; ++i) {
            std::vector<const ProbMap*> mf, mh;
            for (int j : js) {
                mf.push_back(&peer[j].full[i]);
                mh.push_back(&peer[j].half[i]);
            }
            LabelMap pf = aggregate_with(cfg_.strategy, mf, cfg_.tau);
            LabelMap ph = aggregate_with(cfg_.strategy, mh, cfg_.tau);

            // Winning confidence: max-over-source confidence of the assigned
            // class, averaged over foreground-pseudo pixels.
            const size_t plane = static_cast<size_t>(h) * w;
            for (size_t k = 0; k < plane; ++k) {
                const int cls = pf.v[k];
                if (cls == 0) continue;
                float conf = 0.0f;
                for (const ProbMap* p : mf) conf = std::max(conf, p->v[cls * plane + k]);
                win_sum += conf;
                ++win_count;
            }
            if (unl[i].has_truth) {
                truth_seen = true;
                for (size_t k = 0; k < plane; ++k) {
                    const bool p = pf.v[k] != 0;
                    const bool t = unl[i].truth.v[k] != 0;
                    tp += p && t;
                    fp += p && !t;
                    fn += !p && t;
                }
            }
            if (capture_.enabled) {
                capture_.pseudo_full[m].push_back(pf);
                capture_.own_argmax_full[m].push_back(argmax_labels(peer[m].full[i]));
            }
            pseudo_full[m].push_back(std::move(pf));
            pseudo_half[m].push_back(std::move(ph));
        }
        auto& mr = rec.models[m];
        if (win_count > 0) mr.win_conf = win_sum / static_cast<double>(win_count);
        if (truth_seen) {
            if (tp + fp > 0) mr.pl_precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
            if (tp + fn > 0) mr.pl_recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
        }
    }

    // --- per-model gradients (labeled and unlabeled passes kept separate so
    // --- unlabeled data cannot leak into supervised gradients) --------------
    for (int m = 0; m < m_count; ++m) {
        auto& net = *ensemble_.models[m];
        net.zero_grad();
        auto& b = rec.models[m].loss;
        b.lambda = cfg_.lambda;
        b.has_half = cfg_.dsbe;

        auto out = net.forward(lx, cfg_.dsbe ? &lmasks : nullptr, Mode::train);
        Tensor4<float> dpf(bl, classes, h, w);
        Tensor4<float> dph(bl, classes, h / 2, w / 2);
        for (int i = 0; i < bl; ++i) {
            accumulate_item_loss(b, Scale::full, LossBreakdown::kSup, out.prob_full, i,
                                 lab[i].truth.v.data(), &dpf);
            if (cfg_.dsbe)
                accumulate_item_loss(b, Scale::half, LossBreakdown::kSup, out.prob_half, i,
                                     ltruth_half[i].v.data(), &dph);
        }
        net.backward(dpf, dph);

        if (bu > 0) {
            std::vector<BoundaryMask> umasks;
            if (cfg_.dsbe)
                for (int i = 0; i < bu; ++i)
                    umasks.push_back(detect_boundary_windows(pseudo_half[m][i], cfg_.window));
            auto uout = net.forward(ux, cfg_.dsbe ? &umasks : nullptr, Mode::train);
            Tensor4<float> udpf(bu, classes, h, w);
            Tensor4<float> udph(bu, classes, h / 2, w / 2);
            for (int i = 0; i < bu; ++i) {
                accumulate_item_loss(b, Scale::full, LossBreakdown::kPseudo, uout.prob_full, i,
                                     pseudo_full[m][i].v.data(), &udpf);
                if (cfg_.dsbe)
                    accumulate_item_loss(b, Scale::half, LossBreakdown::kPseudo, uout.prob_half,
                                         i, pseudo_half[m][i].v.data(), &udph);
            }
            if (cfg_.lambda > 0.0) net.backward(udpf, udph);
        }
    }

    // --- one joint optimizer step over all models ----------------------------
    const float lr = static_cast<float>(rec.lr);
    const float mu = static_cast<float>(cfg_.momentum);
    const float wd = static_cast<float>(cfg_.weight_decay);
    for (int m = 0; m < m_count; ++m) {
        auto views = ensemble_.models[m]->params();
        for (size_t pi = 0; pi < views.size(); ++pi) {
            auto& val = *views[pi].value;
            auto& grad = *views[pi].grad;
            auto& vel = velocity_[m][pi];
            for (size_t k = 0; k < val.size(); ++k) {
                const float g = grad[k] + wd * val[k];
                vel[k] = mu * vel[k] + g;
                val[k] -= lr * vel[k];
            }
        }
    }

    if (log_) {
        *log_ << csv_row(rec) << "\n";
        log_->flush();
    }
    ++iter_;
    return rec;
}

void Trainer::run() {
    init();
    for (int64_t i = iter_; i < cfg_.iterations; ++i) {
        IterationRecord rec = step();
        double total = 0.0;
        for (const auto& m : rec.models) total += m.loss.grand_total;
        if (!std::isfinite(total))
            throw std::runtime_error("training diverged (non-finite loss) at iteration " +
                                     std::to_string(rec.iter) +
                                     "; last checkpoint retained");
        if (cfg_.checkpoint_every > 0 && (i + 1) % cfg_.checkpoint_every == 0 &&
            i + 1 < cfg_.iterations) {
            char tag[32];
            std::snprintf(tag, sizeof(tag), "iter_%06lld", static_cast<long long>(i + 1));
            save_checkpoints(tag);
        }
    }
    save_checkpoints("final");
}

void Trainer::save_checkpoints(const std::string& tag) {
    const auto dir = run_dir_ / "checkpoints" / tag;
    std::filesystem::create_directories(dir);
    for (int m = 0; m < cfg_.models; ++m)
        save_checkpoint(*ensemble_.models[m], dir / ("model_" + std::to_string(m + 1)), iter_);
    nlohmann::json j;
    j["models"] = cfg_.models;
    j["iteration"] = iter_;
    std::ofstream f(dir / "ensemble.json", std::ios::trunc);
    f << j.dump(2) << "\n";
}

std::string Trainer::param_digest() {
    if (!initialized_) throw std::logic_error("Trainer::param_digest before init");
    uint64_t hash = 0xcbf29ce484222325ULL;
    for (int m = 0; m < cfg_.models; ++m)
        for (auto& pv : ensemble_.models[m]->params())
            hash = fnv1a(hash, pv.value->data(), pv.value->size() * sizeof(float));
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

PredictMode predict_mode_from_name(const std::string& name) {
    if (name == "first") return PredictMode::first;
    if (name == "ensemble") return PredictMode::ensemble;
    throw std::invalid_argument("unknown predict mode: " + name);
}

LoadedEnsemble load_ensemble_checkpoint(const std::filesystem::path& checkpoint_dir) {
    std::ifstream f(checkpoint_dir / "ensemble.json");
    if (!f)
        throw std::runtime_error("missing ensemble.json in " + checkpoint_dir.string());
    nlohmann::json j;
    f >> j;
    LoadedEnsemble e;
    const int m_count = j.at("models").get<int>();
    e.iteration = j.value("iteration", 0);
    for (int m = 0; m < m_count; ++m) {
        const auto dir = checkpoint_dir / ("model_" + std::to_string(m + 1));
        const NetConfig cfg = checkpoint_net_config(dir);
        if (m == 0) e.net = cfg;
        auto net = std::make_unique<SegNet<float>>(cfg, 0);
        load_checkpoint(*net, dir);
        e.models.push_back(std::move(net));
    }
    return e;
}

ProbMap predict_prob(SegNet<float>& model, const Image<float>& image) {
    Tensor4<float> x(1, 1, image.h, image.w);
    std::copy(image.v.begin(), image.v.end(), x.p(0, 0));
    auto out = model.forward(x, nullptr, Mode::eval);
    if (!model.config().dsbe) return prob_slice(out.prob_full, 0);
    // Self-derived mask: the model's own half-scale prediction marks the
    // boundary windows for a second, attention-enabled pass.
    const LabelMap half = argmax_labels(prob_slice(out.prob_half, 0));
    std::vector<BoundaryMask> masks{detect_boundary_windows(half, model.config().window)};
    auto out2 = model.forward(x, &masks, Mode::eval);
    return prob_slice(out2.prob_full, 0);
}

LabelMap predict(LoadedEnsemble& ensemble, const Image<float>& image, PredictMode mode) {
    if (ensemble.models.empty()) throw std::invalid_argument("empty ensemble");
    if (mode == PredictMode::first) return argmax_labels(predict_prob(*ensemble.models[0], image));

    std::vector<ProbMap> probs;
    for (auto& m : ensemble.models) probs.push_back(predict_prob(*m, image));
    const size_t plane = probs[0].plane();
    LabelMap out(probs[0].h, probs[0].w);
    for (size_t k = 0; k < plane; ++k) {
        int best = 0;
        double best_mean = -1.0;
        for (int c = 0; c < probs[0].c; ++c) {
            double sum = 0.0;
            for (const auto& p : probs) sum += p.v[c * plane + k];
            const double mean = sum / static_cast<double>(probs.size());
            if (mean > best_mean) {
                best_mean = mean;
                best = c;
            }
        }
        out.v[k] = static_cast<uint8_t>(best);
    }
    return out;
}

}  // namespace comwin
