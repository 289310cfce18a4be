// comwin — synthetic co-training workbench CLI.
//
// Subcommands: synth, train, eval, aggregate, plot. All randomness flows from
// the config seed (COMWIN_SEED overrides it). Exit codes: 0 success, 1 usage
// error, 2 runtime failure.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "comwin/aggregate.hpp"
#include "comwin/arrayio.hpp"
#include "comwin/cotrain.hpp"
#include "comwin/evalmetrics.hpp"
#include "comwin/plotting.hpp"
#include "comwin/synthdata.hpp"

namespace {

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

std::optional<uint64_t> env_seed_override() {
    const char* env = std::getenv("COMWIN_SEED");
    if (!env || !*env) return std::nullopt;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0')
        throw std::runtime_error("COMWIN_SEED must be an unsigned integer");
    return static_cast<uint64_t>(v);
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
    auto cfg = comwin::synth_config_from_json(load_json_file(config_path));
    if (auto seed = env_seed_override()) cfg.seed = *seed;
    const auto manifest = comwin::generate_dataset(cfg, out_dir);
    std::cout << (std::filesystem::path(out_dir) / "manifest.json").string() << "\n";
    std::cerr << "generated " << manifest.samples.size() << " samples ("
              << manifest.count(comwin::SplitTag::labeled) << " labeled, "
              << manifest.count(comwin::SplitTag::unlabeled) << " unlabeled, "
              << manifest.count(comwin::SplitTag::test) << " test)\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& run_dir, bool force) {
    auto cfg = comwin::train_config_from_json(load_json_file(config_path));
    if (auto seed = env_seed_override()) cfg.seed = *seed;
    const auto log_path = std::filesystem::path(run_dir) / "log.csv";
    if (std::filesystem::exists(log_path) && !force)
        throw std::runtime_error("run directory already contains a training log: " +
                                 log_path.string() + " (use --force to overwrite)");
    comwin::Trainer trainer(cfg, run_dir);
    trainer.run();
    std::cout << run_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& run_dir, const std::string& split_name,
             const std::string& mode_name, const std::string& checkpoint_tag) {
    const auto run = std::filesystem::path(run_dir);
    const auto cfg = comwin::train_config_from_json(load_json_file((run / "config.json").string()));
    const auto manifest = comwin::load_manifest(cfg.manifest);
    const auto data_root = std::filesystem::path(cfg.manifest).parent_path();
    const auto split = comwin::split_from_name(split_name);
    const auto mode = comwin::predict_mode_from_name(mode_name);

    auto ensemble = comwin::load_ensemble_checkpoint(run / "checkpoints" / checkpoint_tag);

    comwin::MetricReport report(manifest.classes);
    for (size_t idx : manifest.indices(split)) {
        const auto& entry = manifest.samples[idx];
        if (!entry.label)
            throw std::runtime_error("split entry has no ground truth: " + entry.image);
        const auto image = comwin::read_image_f32(data_root / entry.image);
        const auto truth = comwin::read_label_u8(data_root / *entry.label);
        const auto pred = comwin::predict(ensemble, image, mode);
        report.add_sample(entry.image, pred, truth);
    }
    if (report.sample_count() == 0)
        throw std::runtime_error("no samples in split '" + split_name + "'");

    const auto eval_dir = run / "eval";
    std::filesystem::create_directories(eval_dir);
    const std::string stem = split_name + "_" + mode_name;
    {
        std::ofstream f(eval_dir / (stem + ".json"), std::ios::trunc);
        f << report.to_json().dump(2) << "\n";
    }
    {
        std::ofstream f(eval_dir / (stem + ".csv"), std::ios::trunc);
        f << report.to_csv();
    }
    std::cout << "mean_dice " << report.mean_dice() << " over " << report.sample_count()
              << " samples -> " << (eval_dir / (stem + ".json")).string() << "\n";
    return 0;
}

int cmd_aggregate(const std::vector<std::string>& inputs, const std::string& out_path,
                  const std::string& strategy_name, double tau) {
    const auto strategy = comwin::strategy_from_name(strategy_name);
    std::vector<comwin::ProbMap> maps;
    for (const auto& path : inputs) maps.push_back(comwin::read_prob_f32(path));
    std::vector<const comwin::ProbMap*> ptrs;
    for (const auto& m : maps) ptrs.push_back(&m);
    const auto labels = comwin::aggregate_with(strategy, ptrs, tau);
    comwin::write_label(out_path, labels);
    std::cout << out_path << "\n";
    return 0;
}

int cmd_plot(const std::string& run_dir) {
    comwin::emit_plots(run_dir);
    std::cout << (std::filesystem::path(run_dir) / "plots").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"barely-supervised co-training workbench"};
    app.require_subcommand(1);

    std::string config_path, out_dir, run_dir, split = "test", mode = "first";
    std::string checkpoint_tag = "final", strategy = "comwin", agg_out;
    std::vector<std::string> agg_inputs;
    double tau = 0.7;
    bool force = false;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--config", config_path, "SynthConfig JSON")->required();
    synth->add_option("--out", out_dir, "output dataset directory")->required();

    auto* train = app.add_subcommand("train", "run co-training");
    train->add_option("--config", config_path, "TrainConfig JSON")->required();
    train->add_option("--out", run_dir, "run directory")->required();
    train->add_flag("--force", force, "overwrite an existing run directory");

    auto* eval = app.add_subcommand("eval", "evaluate checkpoints on a split");
    eval->add_option("--run", run_dir, "run directory")->required();
    eval->add_option("--split", split, "labeled|unlabeled|test (default test)");
    eval->add_option("--mode", mode, "first|ensemble (default first)");
    eval->add_option("--checkpoint", checkpoint_tag, "checkpoint tag (default final)");

    auto* agg = app.add_subcommand("aggregate", "aggregate probability maps into a label map");
    agg->add_option("inputs", agg_inputs, "CWT1 probability maps")->required();
    agg->add_option("--out", agg_out, "output CWT1 label map")->required();
    agg->add_option("--strategy", strategy, "comwin|cps|threshold|avg|vote");
    agg->add_option("--tau", tau, "confidence threshold (threshold strategy)");

    auto* plot = app.add_subcommand("plot", "emit charts and summary from a run log");
    plot->add_option("--run", run_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors exit 1, --help exits 0
    }

    try {
        if (synth->parsed()) return cmd_synth(config_path, out_dir);
        if (train->parsed()) return cmd_train(config_path, run_dir, force);
        if (eval->parsed()) return cmd_eval(run_dir, split, mode, checkpoint_tag);
        if (agg->parsed()) return cmd_aggregate(agg_inputs, agg_out, strategy, tau);
        if (plot->parsed()) return cmd_plot(run_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
