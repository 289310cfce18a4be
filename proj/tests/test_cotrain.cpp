#include <doctest.h>

#include "comwin/cotrain.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "comwin/synthdata.hpp"
#include "test_util.hpp"

using namespace comwin;

namespace {

/// Tiny dataset shared by the trainer tests.
std::filesystem::path make_dataset(const testutil::TempDir& tmp, uint64_t seed = 5,
                                   int train = 12, double fraction = 0.25) {
    SynthConfig cfg;
    cfg.train_count = train;
    cfg.test_count = 4;
    cfg.labeled_fraction = fraction;
    cfg.seed = seed;
    generate_dataset(cfg, tmp.path() / "ds");
    return tmp.path() / "ds" / "manifest.json";
}

TrainConfig small_train_config(const std::filesystem::path& manifest) {
    TrainConfig cfg;
    cfg.manifest = manifest.string();
    cfg.models = 2;
    cfg.iterations = 5;
    cfg.base_channels = 2;
    cfg.checkpoint_every = 0;
    cfg.seed = 21;
    return cfg;
}

}  // namespace

TEST_CASE("train config json roundtrip, defaults, and typo rejection") {
    nlohmann::json j;
    j["manifest"] = "m.json";
    auto cfg = train_config_from_json(j);
    CHECK(cfg.models == 3);
    CHECK(cfg.lambda == 0.5);
    CHECK(cfg.window == 4);
    CHECK(cfg.iterations == 6000);
    CHECK(cfg.lr == 0.01);
    CHECK(cfg.momentum == 0.9);
    CHECK(cfg.weight_decay == 1e-4);
    CHECK(cfg.schedule == "step");
    CHECK(cfg.step_every == 2500);
    CHECK(cfg.dsbe);

    const auto round = train_config_from_json(train_config_to_json(cfg));
    CHECK(round.manifest == cfg.manifest);
    CHECK(round.strategy == cfg.strategy);

    j["lamda"] = 0.4;  // typo
    CHECK_THROWS_AS(train_config_from_json(j), std::invalid_argument);

    j.erase("lamda");
    j["models"] = 1;
    CHECK_THROWS_AS(train_config_from_json(j), std::invalid_argument);
}

TEST_CASE("step schedule drops by 0.1 every step_every iterations") {
    TrainConfig cfg;
    cfg.manifest = "x";
    cfg.iterations = 6000;
    CHECK(schedule_lr(cfg, 0) == doctest::Approx(0.01));
    CHECK(schedule_lr(cfg, 2499) == doctest::Approx(0.01));
    CHECK(schedule_lr(cfg, 2500) == doctest::Approx(0.001));
    CHECK(schedule_lr(cfg, 5000) == doctest::Approx(0.0001));

    cfg.schedule = "poly";
    CHECK(schedule_lr(cfg, 0) == doctest::Approx(0.01));
    CHECK(schedule_lr(cfg, 3000) ==
          doctest::Approx(0.01 * std::pow(1.0 - 3000.0 / 6000.0, 0.9)));
}

TEST_CASE("augmentations are involutive and compose as expected") {
    Rng rng(601);
    const auto m = testutil::random_label_map(rng, 4, 8, 8);
    CHECK(flip_horizontal(flip_horizontal(m)) == m);
    CHECK(rotate90(m, 4) == m);
    CHECK(rotate90(rotate90(m, 1), 3) == m);
    CHECK(rotate90(rotate90(m, 2), 2) == m);

    Image<float> img(8, 9, 1.0f);
    CHECK_THROWS_AS(rotate90(img, 1), std::invalid_argument);
}

TEST_CASE("csv header and row carry per-model blocks") {
    const auto header = csv_header(2);
    CHECK(header.find("iter,lr,m1_loss_total") == 0);
    CHECK(header.find("m2_win_conf") != std::string::npos);

    IterationRecord rec;
    rec.iter = 7;
    rec.lr = 0.01;
    rec.models.resize(2);
    rec.models[0].loss.grand_total = 1.25;
    const auto row = csv_row(rec);
    CHECK(row.find("7,0.01,1.25,") == 0);
    CHECK(row.find("nan") != std::string::npos);  // no pseudo metrics recorded
}

TEST_CASE("two runs from one config are bitwise identical") {
    testutil::TempDir tmp("trainer");
    const auto manifest = make_dataset(tmp);
    auto cfg = small_train_config(manifest);

    Trainer a(cfg, tmp.path() / "run_a");
    a.init();
    for (int i = 0; i < cfg.iterations; ++i) a.step();

    Trainer b(cfg, tmp.path() / "run_b");
    b.init();
    for (int i = 0; i < cfg.iterations; ++i) b.step();

    CHECK(testutil::slurp(tmp.path() / "run_a" / "log.csv") ==
          testutil::slurp(tmp.path() / "run_b" / "log.csv"));
    CHECK(a.param_digest() == b.param_digest());
}

TEST_CASE("comwin at M=2 equals cps: bitwise-identical logs and parameters") {
    testutil::TempDir tmp("degeneracy");
    const auto manifest = make_dataset(tmp);

    auto cfg = small_train_config(manifest);
    cfg.iterations = 8;
    cfg.strategy = Strategy::comwin;
    Trainer a(cfg, tmp.path() / "run_comwin");
    a.init();
    for (int i = 0; i < cfg.iterations; ++i) a.step();

    cfg.strategy = Strategy::cps;
    Trainer b(cfg, tmp.path() / "run_cps");
    b.init();
    for (int i = 0; i < cfg.iterations; ++i) b.step();

    CHECK(testutil::slurp(tmp.path() / "run_comwin" / "log.csv") ==
          testutil::slurp(tmp.path() / "run_cps" / "log.csv"));
    CHECK(a.param_digest() == b.param_digest());
}

TEST_CASE("forced-equal initialization degenerates to learning from own predictions") {
    testutil::TempDir tmp("entropy");
    const auto manifest = make_dataset(tmp);
    auto cfg = small_train_config(manifest);
    cfg.models = 3;
    cfg.strategy = Strategy::comwin;
    cfg.force_equal_init = true;

    Trainer t(cfg, tmp.path() / "run");
    t.init();
    t.enable_capture();
    t.step();  // iteration 0

    const auto& cap = t.capture();
    REQUIRE(cap.pseudo_full.size() == 3);
    for (int m = 0; m < 3; ++m) {
        REQUIRE(cap.pseudo_full[m].size() == cap.own_argmax_full[m].size());
        REQUIRE(!cap.pseudo_full[m].empty());
        for (size_t i = 0; i < cap.pseudo_full[m].size(); ++i)
            CHECK(cap.pseudo_full[m][i] == cap.own_argmax_full[m][i]);
    }
}

TEST_CASE("with independent initialization, pseudo labels differ from own argmax somewhere") {
    testutil::TempDir tmp("indep");
    const auto manifest = make_dataset(tmp);
    auto cfg = small_train_config(manifest);
    cfg.models = 3;
    cfg.base_channels = 4;
    cfg.strategy = Strategy::comwin;

    Trainer t(cfg, tmp.path() / "run");
    t.init();
    t.enable_capture();
    t.step();

    const auto& cap = t.capture();
    bool any_difference = false;
    for (int m = 0; m < 3; ++m)
        for (size_t i = 0; i < cap.pseudo_full[m].size(); ++i)
            if (!(cap.pseudo_full[m][i] == cap.own_argmax_full[m][i])) any_difference = true;
    CHECK(any_difference);
}

TEST_CASE("lambda = 0: unlabeled images never influence parameter gradients") {
    testutil::TempDir tmp("lambda0");
    const auto manifest_path = make_dataset(tmp);

    // Variant manifest with the unlabeled entries removed entirely.
    auto manifest = load_manifest(manifest_path);
    DatasetManifest pruned = manifest;
    pruned.samples.clear();
    for (const auto& e : manifest.samples)
        if (e.split != SplitTag::unlabeled) pruned.samples.push_back(e);
    const auto pruned_path = tmp.path() / "ds" / "manifest_labeled_only.json";
    save_manifest(pruned, pruned_path);

    auto cfg = small_train_config(manifest_path);
    cfg.lambda = 0.0;
    cfg.iterations = 6;
    Trainer with_unlabeled(cfg, tmp.path() / "run_with");
    with_unlabeled.init();
    for (int i = 0; i < cfg.iterations; ++i) with_unlabeled.step();

    cfg.manifest = pruned_path.string();
    Trainer without_unlabeled(cfg, tmp.path() / "run_without");
    without_unlabeled.init();
    for (int i = 0; i < cfg.iterations; ++i) without_unlabeled.step();

    CHECK(with_unlabeled.param_digest() == without_unlabeled.param_digest());
}

TEST_CASE("lambda > 0: unlabeled images do influence parameters") {
    testutil::TempDir tmp("lambda5");
    const auto manifest_path = make_dataset(tmp);
    auto manifest = load_manifest(manifest_path);
    DatasetManifest pruned = manifest;
    pruned.samples.clear();
    for (const auto& e : manifest.samples)
        if (e.split != SplitTag::unlabeled) pruned.samples.push_back(e);
    const auto pruned_path = tmp.path() / "ds" / "manifest_labeled_only.json";
    save_manifest(pruned, pruned_path);

    auto cfg = small_train_config(manifest_path);
    cfg.lambda = 0.5;
    cfg.iterations = 6;
    Trainer with_unlabeled(cfg, tmp.path() / "run_with");
    with_unlabeled.init();
    for (int i = 0; i < cfg.iterations; ++i) with_unlabeled.step();

    cfg.manifest = pruned_path.string();
    Trainer without_unlabeled(cfg, tmp.path() / "run_without");
    without_unlabeled.init();
    for (int i = 0; i < cfg.iterations; ++i) without_unlabeled.step();

    CHECK(with_unlabeled.param_digest() != without_unlabeled.param_digest());
}

TEST_CASE("empty labeled split is rejected") {
    testutil::TempDir tmp("nolabel");
    const auto manifest_path = make_dataset(tmp);
    auto manifest = load_manifest(manifest_path);
    DatasetManifest pruned = manifest;
    pruned.samples.clear();
    for (const auto& e : manifest.samples)
        if (e.split != SplitTag::labeled) pruned.samples.push_back(e);
    const auto pruned_path = tmp.path() / "ds" / "manifest_unlabeled_only.json";
    save_manifest(pruned, pruned_path);

    auto cfg = small_train_config(pruned_path);
    Trainer t(cfg, tmp.path() / "run");
    CHECK_THROWS_WITH_AS(t.init(), doctest::Contains("empty labeled split"), std::runtime_error);
}

TEST_CASE("divergence guard aborts on non-finite loss and keeps checkpoints") {
    testutil::TempDir tmp("diverge");
    const auto manifest = make_dataset(tmp);
    auto cfg = small_train_config(manifest);
    cfg.lr = 1e25;  // guaranteed blow-up
    cfg.iterations = 50;
    cfg.checkpoint_every = 1;
    Trainer t(cfg, tmp.path() / "run");
    CHECK_THROWS_WITH_AS(t.run(), doctest::Contains("diverged"), std::runtime_error);
    CHECK(std::filesystem::exists(tmp.path() / "run" / "checkpoints"));
}

TEST_CASE("run() writes config snapshot, log, and final checkpoints") {
    testutil::TempDir tmp("rundir");
    const auto manifest = make_dataset(tmp);
    auto cfg = small_train_config(manifest);
    cfg.iterations = 3;
    cfg.checkpoint_every = 2;
    Trainer t(cfg, tmp.path() / "run");
    t.run();

    CHECK(std::filesystem::exists(tmp.path() / "run" / "config.json"));
    CHECK(std::filesystem::exists(tmp.path() / "run" / "log.csv"));
    CHECK(std::filesystem::exists(tmp.path() / "run" / "checkpoints" / "iter_000002"));
    CHECK(std::filesystem::exists(tmp.path() / "run" / "checkpoints" / "final" / "model_1"));
    CHECK(std::filesystem::exists(tmp.path() / "run" / "checkpoints" / "final" / "model_2"));

    // config snapshot parses back to the same strategy and seed
    const auto snap = train_config_from_json(
        nlohmann::json::parse(testutil::slurp(tmp.path() / "run" / "config.json")));
    CHECK(snap.seed == cfg.seed);
    CHECK(snap.strategy == cfg.strategy);
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

TEST_CASE("predict: identical checkpoints make first and ensemble modes agree") {
    testutil::TempDir tmp("predict");
    const auto manifest = make_dataset(tmp);
    auto cfg = small_train_config(manifest);
    cfg.models = 3;
    cfg.force_equal_init = true;  // all checkpoints identical
    cfg.iterations = 1;
    Trainer t(cfg, tmp.path() / "run");
    t.init();
    t.step();
    t.save_checkpoints("final");

    auto ens = load_ensemble_checkpoint(tmp.path() / "run" / "checkpoints" / "final");
    REQUIRE(ens.models.size() == 3);

    Rng rng(602);
    Image<float> img(32, 32);
    for (auto& v : img.v) v = static_cast<float>(rng.uniform());
    const auto first = predict(ens, img, PredictMode::first);
    const auto mean = predict(ens, img, PredictMode::ensemble);
    CHECK(first == mean);
}

TEST_CASE("predict: ensemble mode equals brute-force mean plus argmax") {
    testutil::TempDir tmp("predict2");
    const auto manifest = make_dataset(tmp);
    auto cfg = small_train_config(manifest);
    cfg.models = 2;
    cfg.iterations = 2;
    Trainer t(cfg, tmp.path() / "run");
    t.init();
    t.step();
    t.step();
    t.save_checkpoints("final");

    auto ens = load_ensemble_checkpoint(tmp.path() / "run" / "checkpoints" / "final");
    Rng rng(603);
    Image<float> img(32, 32);
    for (auto& v : img.v) v = static_cast<float>(rng.uniform());

    const auto got = predict(ens, img, PredictMode::ensemble);

    std::vector<ProbMap> probs;
    for (auto& m : ens.models) probs.push_back(predict_prob(*m, img));
    LabelMap expect(32, 32);
    const size_t plane = probs[0].plane();
    for (size_t k = 0; k < plane; ++k) {
        int best = 0;
        double best_mean = -1.0;
        for (int c = 0; c < probs[0].c; ++c) {
            double sum = 0.0;
            for (const auto& p : probs) sum += p.v[c * plane + k];
            if (sum / probs.size() > best_mean) {
                best_mean = sum / probs.size();
                best = c;
            }
        }
        expect.v[k] = static_cast<uint8_t>(best);
    }
    CHECK(got == expect);
}

TEST_CASE("predict: all-zero images yield a valid label map without errors") {
    testutil::TempDir tmp("predict3");
    const auto manifest = make_dataset(tmp);
    auto cfg = small_train_config(manifest);
    cfg.iterations = 1;
    Trainer t(cfg, tmp.path() / "run");
    t.init();
    t.step();
    t.save_checkpoints("final");

    auto ens = load_ensemble_checkpoint(tmp.path() / "run" / "checkpoints" / "final");
    Image<float> zeros(32, 32, 0.0f);
    const auto out = predict(ens, zeros, PredictMode::first);
    REQUIRE(out.h == 32);
    REQUIRE(out.w == 32);
    for (uint8_t v : out.v) CHECK(v < 2);
}
