// drsc: data preparation, training, evaluation and the experiment grids.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "drsc/drsc.hpp"

namespace {

constexpr int kUsage = 1;
constexpr int kFailure = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigArgs {
    std::string path;
    std::vector<std::string> sets;
    std::string out;

    void add_to(CLI::App* app, bool required, const char* out_help) {
        auto* c = app->add_option("-c,--config", path, "run configuration (JSON)");
        if (required) c->required();
        c->check(CLI::ExistingFile);
        app->add_option("-s,--set", sets, "override a config value, e.g. --set criterion=L2 (repeatable)")->take_all();
        app->add_option("-o,--out", out, out_help);
    }

    drsc::RunConfig load() const {
        drsc::RunConfig cfg = path.empty() ? drsc::RunConfig{} : drsc::load_config(path);
        cfg = drsc::apply_overrides(cfg, sets);
        if (!out.empty()) cfg.out = out;
        return cfg;
    }

    /// Overrides as recorded in summaries, including --out.
    std::vector<std::string> recorded() const {
        std::vector<std::string> r = sets;
        if (!out.empty()) r.push_back("out=" + out);
        return r;
    }
};

// ------------------------------------------------------------------ prep

struct PrepArgs {
    std::string data, out;
    std::size_t t_max = 256;
    std::vector<double> wers{0.26};
    std::uint64_t seed = 0;
    bool skip_missing = false;
};

int run_prep(const PrepArgs& a) {
    drsc::PrepareOptions opt;
    opt.features.t_max = a.t_max;
    opt.corrupted_wers = a.wers;
    opt.manifest.seed = a.seed;
    opt.manifest.skip_missing_audio = a.skip_missing;
    opt.corruption.seed = a.seed;
    const auto report = drsc::prepare_dataset(a.data, a.out, opt);
    std::printf("prepared %zu utterances in %s (%zu extracted, %zu reused from cache)\n", report.entries, a.out.c_str(), report.extracted,
                report.reused);
    return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
    ConfigArgs config;
    bool resume = false, force = false;
    std::optional<std::size_t> stop_after;
};

int run_train(const TrainArgs& a) {
    const drsc::RunConfig cfg = a.config.load();
    drsc::FitOptions opt;
    opt.resume = a.resume;
    opt.force = a.force;
    opt.stop_after_epoch = a.stop_after;
    opt.overrides = a.config.recorded();
    const auto r = drsc::fit(cfg, opt);
    std::printf("%s: best test accuracy %.4f at epoch %zu, final %.4f after %zu epochs (%s)\n", drsc::to_string(cfg.method).c_str(),
                r.best_accuracy, r.best_epoch, r.final_accuracy, r.epochs, r.run_dir.c_str());
    return 0;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
    std::string checkpoint, config, out, text = "checkpoint";
    std::vector<std::string> sets;
    double wer = 0.26;
    bool force = false;
};

int run_eval(const EvalArgs& a) {
    namespace fs = std::filesystem;
    fs::path ckpt_path = a.checkpoint;
    if (fs::is_directory(ckpt_path)) ckpt_path = drsc::RunLayout{ckpt_path}.best_checkpoint();
    const drsc::Checkpoint ck = drsc::read_checkpoint(ckpt_path);

    // The data description comes from --config when given, else from the checkpoint.
    drsc::EvaluateOptions opt;
    opt.force = a.force;
    drsc::RunConfig data_cfg = drsc::checkpoint_config(ck);
    if (!a.config.empty()) {
        data_cfg = drsc::apply_overrides(drsc::load_config(a.config), a.sets);
        opt.expected = data_cfg;
    } else {
        data_cfg = drsc::apply_overrides(data_cfg, a.sets);
    }
    if (a.text == "accurate") data_cfg.text_source = {false, a.wer};
    else if (a.text == "corrupted") data_cfg.text_source = {true, a.wer};
    const drsc::Dataset ds = drsc::load_dataset(data_cfg);
    const drsc::Evaluation ev = drsc::evaluate(ck, ds, opt);

    const fs::path out = a.out.empty() ? ckpt_path.parent_path().parent_path() / "eval" : fs::path(a.out);
    fs::create_directories(out);
    ev.matrix.write_csv(out / "confusion.csv", drsc::class_names(ev.matrix.size()));
    ev.matrix.write_png(out / "confusion.png");
    const nlohmann::json summary{{"checkpoint", ckpt_path.string()},
                                 {"accuracy", ev.accuracy},
                                 {"correct", ev.matrix.trace()},
                                 {"total", ev.matrix.total()},
                                 {"text_source", data_cfg.text_source.name()},
                                 {"config_hash", drsc::hex(drsc::config_hash(ev.config))},
                                 {"data_fingerprint", ds.fingerprint}};
    std::ofstream(out / "summary.json") << summary.dump(2) << '\n';
    std::printf("accuracy %.4f (%llu/%llu) on %s text; artifacts in %s\n", ev.accuracy, static_cast<unsigned long long>(ev.matrix.trace()),
                static_cast<unsigned long long>(ev.matrix.total()), data_cfg.text_source.name().c_str(), out.c_str());
    return 0;
}

// ------------------------------------------------------------------ grids

struct GridArgs {
    ConfigArgs config;
    std::size_t seeds = 3;
    bool force = false, fresh = false;
};

int run_grid_verb(const GridArgs& a, drsc::Grid (*make)(const drsc::RunConfig&)) {
    drsc::RunConfig base = a.config.path.empty() ? drsc::RunConfig{} : drsc::load_config(a.config.path);
    base = drsc::apply_overrides(base, a.config.sets);
    drsc::GridOptions opt;
    if (!a.config.out.empty()) opt.root = a.config.out;
    opt.seeds = a.seeds;
    opt.force = a.force;
    opt.resume = !a.fresh;
    opt.overrides = a.config.sets;
    const auto r = drsc::run_grid(make(base), opt);
    std::cout << r.markdown;
    std::printf("\nresults in %s\n", r.dir.c_str());
    return 0;
}

// ------------------------------------------------------------------ synth-test

struct SynthArgs {
    std::vector<std::string> sets;
    std::string out = "runs/synth-test";
    std::size_t pairs = 500;
};

int run_synth(const SynthArgs& a) {
    drsc::RunConfig cfg = drsc::apply_overrides(drsc::synthetic_oracle_config(), a.sets);
    cfg.out = a.out;
    const auto r = drsc::run_synthetic_oracle(cfg, a.pairs);
    const bool acc_ok = r.accuracy >= drsc::OracleReport::kMinAccuracy;
    const bool swap_ok = r.swap.rate() >= drsc::OracleReport::kMinSwapRate;
    std::printf("synthetic test accuracy %.4f (need >= %.2f): %s\n", r.accuracy, drsc::OracleReport::kMinAccuracy, acc_ok ? "PASS" : "FAIL");
    std::printf("intent swap follows the donor in %zu/%zu pairs = %.4f (need >= %.2f): %s\n", r.swap.to_donor, r.swap.pairs, r.swap.rate(),
                drsc::OracleReport::kMinSwapRate, swap_ok ? "PASS" : "FAIL");
    std::printf("%s (%.1f s, run in %s)\n", r.passed() ? "PASS" : "FAIL", r.seconds, r.run_dir.c_str());
    return r.passed() ? 0 : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DRSC: disentangled text and Mel-spectrogram intent classification"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    PrepArgs prep;
    auto* prep_cmd = app.add_subcommand("prep", "build manifest, vocabulary, corrupted transcripts and the feature cache");
    prep_cmd->add_option("--data", prep.data, "dataset root (holds overview-of-recordings.csv and recordings/)")->required()->check(CLI::ExistingDirectory);
    prep_cmd->add_option("--out", prep.out, "output directory for the prepared data")->required();
    prep_cmd->add_option("--t-max", prep.t_max, "frames per Mel feature (pad or truncate)")->capture_default_str();
    prep_cmd->add_option("--wer", prep.wers, "target word error rates of the corrupted transcripts")->capture_default_str();
    prep_cmd->add_option("--seed", prep.seed, "split and corruption seed")->capture_default_str();
    prep_cmd->add_flag("--skip-missing", prep.skip_missing, "drop rows whose audio file is missing instead of failing");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "train one run");
    train.config.add_to(train_cmd, true, "run directory (overrides the config's out)");
    train_cmd->add_flag("--resume", train.resume, "continue from <out>/checkpoints/last.ckpt");
    train_cmd->add_flag("--force", train.force, "resume even if the checkpoint's config hash differs");
    train_cmd->add_option("--stop-after-epoch", train.stop_after, "stop early after this epoch (the run stays resumable)");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    eval_cmd->add_option("checkpoint", ev.checkpoint, "checkpoint file, or a run directory (uses its best checkpoint)")->required()->check(CLI::ExistingPath);
    eval_cmd->add_option("-c,--config", ev.config, "expected run configuration; must match the checkpoint unless --force")->check(CLI::ExistingFile);
    eval_cmd->add_option("-s,--set", ev.sets, "override a config value (repeatable)")->take_all();
    eval_cmd->add_option("--text", ev.text, "test transcriptions")->check(CLI::IsMember({"checkpoint", "accurate", "corrupted"}))->capture_default_str();
    eval_cmd->add_option("--wer", ev.wer, "word error rate of the corrupted transcripts")->capture_default_str();
    eval_cmd->add_option("-o,--out", ev.out, "artifact directory (default <run>/eval)");
    eval_cmd->add_flag("--force", ev.force, "evaluate despite config or feature mismatches");

    struct GridVerb {
        const char* name;
        const char* help;
        drsc::Grid (*make)(const drsc::RunConfig&);
    };
    const std::vector<GridVerb> grid_verbs{{"sweep", "distance-criterion sweep (L1, L2, cosine)", &drsc::table1_grid},
                                           {"compare", "SpeechIC variants against DRSC", &drsc::table2_grid},
                                           {"ablate", "full objective against the objective without the optional terms", &drsc::table3_grid},
                                           {"robustness", "accurate against corrupted test transcriptions", &drsc::table4_grid}};
    std::vector<GridArgs> grid_args(grid_verbs.size());
    std::vector<CLI::App*> grid_cmds;
    for (std::size_t i = 0; i < grid_verbs.size(); ++i) {
        auto* cmd = app.add_subcommand(grid_verbs[i].name, grid_verbs[i].help);
        grid_args[i].config.add_to(cmd, true, "results root (default results)");
        cmd->add_option("--seeds", grid_args[i].seeds, "seeds per cell")->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_flag("--force", grid_args[i].force, "evaluate despite config or feature mismatches");
        cmd->add_flag("--fresh", grid_args[i].fresh, "retrain runs even if finished ones exist");
        grid_cmds.push_back(cmd);
    }

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth-test", "train on synthetic data and check accuracy and intent transfer");
    synth_cmd->add_option("-s,--set", synth.sets, "override a value of the built-in synthetic config (repeatable)")->take_all();
    synth_cmd->add_option("-o,--out", synth.out, "run directory")->capture_default_str();
    synth_cmd->add_option("--pairs", synth.pairs, "test pairs for the intent swap")->capture_default_str()->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    auto logger = spdlog::stderr_color_mt("drsc");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*prep_cmd) return run_prep(prep);
        if (*train_cmd) return run_train(train);
        if (*eval_cmd) return run_eval(ev);
        if (*synth_cmd) return run_synth(synth);
        for (std::size_t i = 0; i < grid_cmds.size(); ++i)
            if (*grid_cmds[i]) return run_grid_verb(grid_args[i], grid_verbs[i].make);
    } catch (const drsc::ConfigError& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kFailure;
    }
    return kUsage;
}
