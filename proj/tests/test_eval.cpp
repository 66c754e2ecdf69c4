#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "drsc/eval.hpp"
#include "fixture.hpp"
#include "run_fixture.hpp"

using namespace drsc;
using drsc::testing::scratch_dir;
using drsc::testing::tiny_run_config;
namespace fs = std::filesystem;

namespace {

TEST(Confusion, PerfectPredictionsAreDiagonal) {
    const std::vector<int> truth{0, 1, 2, 2, 1, 0, 4};
    const auto m = ConfusionMatrix::from(truth, truth, 5);
    EXPECT_EQ(m.accuracy(), 1.0);
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 5; ++c) {
            if (r != c) {
                EXPECT_EQ(m.at(r, c), 0u);
            }
        }
    EXPECT_EQ(m.at(2, 2), 2u);
    EXPECT_EQ(m.at(3, 3), 0u);
}

TEST(Confusion, TraceOverTotalIsAccuracyAndRowsCountTruth) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> cls(0, 24);
    std::vector<int> truth(997), pred(997);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        truth[i] = cls(rng);
        pred[i] = i % 3 == 0 ? truth[i] : cls(rng);
    }
    const auto m = ConfusionMatrix::from(truth, pred, 25);
    EXPECT_NEAR(static_cast<double>(m.trace()) / static_cast<double>(m.total()), accuracy(pred, truth), 1e-12);
    EXPECT_NEAR(m.accuracy(), accuracy(pred, truth), 1e-12);
    std::vector<std::uint64_t> per_class(25, 0);
    for (int t : truth) ++per_class[static_cast<std::size_t>(t)];
    for (std::size_t r = 0; r < 25; ++r) EXPECT_EQ(m.row_sum(r), per_class[r]);
    EXPECT_EQ(m.total(), truth.size());
    EXPECT_THROW(ConfusionMatrix::from({0}, {25}, 25), std::out_of_range);
    EXPECT_THROW(ConfusionMatrix::from({0, 1}, {0}, 25), std::invalid_argument);
}

TEST(Confusion, CsvAndPngArtifacts) {
    const auto dir = scratch_dir("confusion_files");
    const auto m = ConfusionMatrix::from({0, 0, 1, 2, 2, 2}, {0, 1, 1, 2, 0, 2}, 3);
    m.write_csv(dir / "c.csv", class_names(3));
    EXPECT_EQ(ConfusionMatrix::read_csv(dir / "c.csv"), m);
    m.write_png(dir / "c.png", 10);
    const RgbImage img = read_png(dir / "c.png");
    EXPECT_EQ(img.width, 31u);
    EXPECT_EQ(img.height, 31u);
    // row 1 is all on the diagonal: darkest colour there, white off it
    EXPECT_EQ(img.get(15, 15), heat_color(1.0));
    EXPECT_EQ(img.get(5, 15), heat_color(0.0));
    EXPECT_EQ(class_names(25).front(), symptom_names().front());
}

struct Trained {
    RunConfig cfg;
    Dataset ds;
    FitResult fitted;

    explicit Trained(const std::string& name, Method m = Method::drsc) : cfg(tiny_run_config(scratch_dir(name))) {
        cfg.method = m;
        ds = load_dataset(cfg);
        fitted = fit(cfg, ds);
    }
};

TEST(Evaluate, IsIdempotentAndMatchesTraining) {
    const Trained t("eval_idem");
    const auto best = RunLayout{t.cfg.out}.best_checkpoint();
    const Evaluation a = evaluate(best, t.ds), b = evaluate(best, t.ds);
    EXPECT_EQ(a.matrix, b.matrix);
    EXPECT_EQ(a.predictions, b.predictions);
    EXPECT_EQ(a.accuracy, t.fitted.best_accuracy);
    for (std::size_t r = 0; r < a.matrix.size(); ++r) {
        std::uint64_t n = 0;
        for (const auto& e : t.ds.test) n += e.label == static_cast<int>(r);
        EXPECT_EQ(a.matrix.row_sum(r), n);
    }
    EXPECT_EQ(to_json(a.config), to_json(t.cfg));
}

TEST(Evaluate, RejectsMismatchedRunsUnlessForced) {
    const Trained t("eval_mismatch", Method::speechic_combined);
    const auto ckpt = RunLayout{t.cfg.out}.last_checkpoint();
    RunConfig other = t.cfg;
    other.criterion = Criterion::l2;
    EXPECT_THROW(evaluate(ckpt, t.ds, {false, other}), CheckpointMismatch);
    EXPECT_NO_THROW(evaluate(ckpt, t.ds, {true, other}));

    Dataset refeatured = t.ds;
    refeatured.fingerprint = "0123";
    EXPECT_THROW(evaluate(ckpt, refeatured), CheckpointMismatch);
    EXPECT_NO_THROW(evaluate(ckpt, refeatured, {true, std::nullopt}));

    RunConfig wider = t.cfg;
    wider.data.synthetic.a_channels = 9;
    EXPECT_THROW(evaluate(ckpt, load_dataset(wider), {true, std::nullopt}), CheckpointMismatch);
}

TEST(IntentSwap, CountsPairsOfDifferentClasses) {
    const Trained t("eval_swap");
    const Checkpoint ck = read_checkpoint(RunLayout{t.cfg.out}.last_checkpoint());
    const SwapReport a = intent_swap_agreement(ck, t.ds, 50, 3), b = intent_swap_agreement(ck, t.ds, 50, 3);
    EXPECT_EQ(a.pairs, 50u);
    EXPECT_LE(a.to_donor + a.to_own, a.pairs);
    EXPECT_EQ(a.to_donor, b.to_donor);
    EXPECT_EQ(a.to_own, b.to_own);

    const Trained baseline("eval_swap_baseline", Method::speechic_txt);
    EXPECT_THROW(intent_swap_agreement(read_checkpoint(RunLayout{baseline.cfg.out}.last_checkpoint()), baseline.ds, 5, 1),
                 std::invalid_argument);
}

TEST(Grids, CellLayoutsFollowTheTables) {
    const RunConfig base;
    const Grid t1 = table1_grid(base), t2 = table2_grid(base), t3 = table3_grid(base), t4 = table4_grid(base);
    EXPECT_EQ(t1.id, "table1_criterion_sweep");
    EXPECT_EQ(t2.id, "table2_method_comparison");
    EXPECT_EQ(t3.id, "table3_loss_ablation");
    EXPECT_EQ(t4.id, "table4_robustness");
    EXPECT_EQ(t1.cells.size(), 3u);
    EXPECT_EQ(t2.cells.size(), 4u);
    EXPECT_EQ(t3.cells.size(), 2u);
    EXPECT_EQ(t4.cells.size(), 6u);

    for (const Grid* g : {&t1, &t2, &t3, &t4}) {
        const std::string shared = detail::shared_hash(*g, g->cells.front().cfg);
        for (const auto& c : g->cells) EXPECT_EQ(detail::shared_hash(*g, c.cfg), shared) << g->id << " " << c.name;
    }
    EXPECT_NE(training_hash(t1.cells[0].cfg), training_hash(t1.cells[1].cfg));
    EXPECT_EQ(t1.cell("L2").cfg.criterion, Criterion::l2);

    const auto& ablated = t3.cell("ablated").cfg.weights;
    EXPECT_EQ(ablated.kl, 0.0);
    EXPECT_EQ(ablated.latent_regression, 0.0);
    EXPECT_EQ(ablated.adversarial, 0.0);
    EXPECT_EQ(t3.cell("full").cfg.weights.kl, base.weights.kl);

    std::size_t corrupted = 0;
    for (const auto& c : t4.cells) {
        corrupted += c.cfg.text_source.corrupted;
        if (c.cfg.text_source.corrupted) {
            EXPECT_EQ(c.cfg.text_source.target_wer, 0.26);
            ASSERT_FALSE(c.trained_by.empty());
            EXPECT_FALSE(t4.cell(c.trained_by).cfg.text_source.corrupted);
            EXPECT_EQ(t4.cell(c.trained_by).cfg.method, c.cfg.method);
        }
    }
    EXPECT_EQ(corrupted, 3u);
}

TEST(Grids, RunWritesCellArtifactsAndReusesFinishedRuns) {
    RunConfig base = tiny_run_config(scratch_dir("grid_unused"));
    base.max_epochs = 1;
    GridOptions opt;
    opt.root = scratch_dir("grid_results");
    opt.seeds = 2;
    const GridResult r = run_table3(base, opt);
    ASSERT_EQ(r.cells.size(), 2u);
    for (const auto& c : r.cells) {
        EXPECT_TRUE(c.complete);
        ASSERT_EQ(c.accuracies.size(), 2u);
        EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{base.seed, base.seed + 1}));
        EXPECT_NEAR(c.mean, (c.accuracies[0] + c.accuracies[1]) / 2, 1e-12);
        const auto dir = opt.root / "table3_loss_ablation" / c.name;
        for (const char* f : {"summary.json", "confusion.csv", "confusion.png"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
        const auto pooled = ConfusionMatrix::read_csv(dir / "confusion.csv");
        EXPECT_NEAR(pooled.accuracy(), c.mean, 1e-12);
        const auto summary = nlohmann::json::parse(std::ifstream(dir / "summary.json"));
        EXPECT_EQ(summary.at("config_hash"), c.config_hash);
        // each stored run config reproduces its stored accuracy
        for (const auto& run : summary.at("runs")) {
            const RunConfig stored = load_config(fs::path(run.at("run_dir").get<std::string>()) / "config.json");
            EXPECT_EQ(evaluate(fs::path(run.at("checkpoint").get<std::string>()), load_dataset(stored)).accuracy,
                      run.at("accuracy").get<double>());
        }
    }
    EXPECT_EQ(r.cells[0].shared_hash, r.cells[1].shared_hash);
    EXPECT_NE(r.markdown.find("w/o additional optional loss"), std::string::npos);
    EXPECT_NE(r.markdown.find("81.19"), std::string::npos);
    EXPECT_TRUE(fs::exists(opt.root / "table3_loss_ablation" / "table.md"));

    const auto ckpt = opt.root / "table3_loss_ablation" / "full" / ("seed_" + std::to_string(base.seed)) / "checkpoints" / "best.ckpt";
    const auto stamp = fs::last_write_time(ckpt);
    const GridResult again = run_table3(base, opt);
    EXPECT_EQ(fs::last_write_time(ckpt), stamp);
    EXPECT_EQ(again.cells[1].accuracies, r.cells[1].accuracies);
}

TEST(Grids, RobustnessCellsReuseAccurateCheckpoints) {
    const auto root = scratch_dir("grid_data"), prepared = scratch_dir("grid_prepared");
    drsc::testing::write_fixture(root, drsc::testing::fixture_options(3, 10));
    PrepareOptions prep;
    prep.features.t_max = 16;
    prepare_dataset(root, prepared, prep);

    RunConfig base = tiny_run_config(scratch_dir("grid4_unused"));
    base.data = DataConfig{};
    base.data.dir = prepared;
    base.model.text_length = 12;
    base.model.text_dim = 8;
    base.max_epochs = 1;
    GridOptions opt;
    opt.root = scratch_dir("grid4_results");
    opt.seeds = 1;
    const GridResult r = run_table4(base, opt);
    ASSERT_EQ(r.cells.size(), 6u);
    for (const auto& c : r.cells) EXPECT_TRUE(c.complete) << c.name;
    const auto dir = opt.root / "table4_robustness";
    EXPECT_FALSE(fs::exists(dir / "drsc_inaccurate" / ("seed_" + std::to_string(base.seed))));
    const auto s = nlohmann::json::parse(std::ifstream(dir / "drsc_inaccurate" / "summary.json"));
    EXPECT_EQ(s.at("trained_by"), "drsc_accurate");
    EXPECT_EQ(s.at("text_source"), "corrupted(0.26)");
    EXPECT_NE(r.markdown.find("Drop (points)"), std::string::npos);
    EXPECT_NE(r.markdown.find("9.36"), std::string::npos);
}

}  // namespace
