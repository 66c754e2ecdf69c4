#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "drsc/dataset.hpp"
#include "fixture.hpp"

using namespace drsc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) { return fs::temp_directory_path() / ("drsc_dataset_" + name); }

TEST(FeatureCache, RoundTripAndInvalidation) {
    const auto dir = scratch("cache");
    fs::remove_all(dir);
    FeatureRecord rec{{"mel", Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6.5f})}, {"valid_frames", Tensor<float>({1}, {3})}};
    {
        FeatureCache cache(dir, {{"n_mels", 2}});
        EXPECT_TRUE(cache.was_invalidated());
        cache.store("u1", rec);
        EXPECT_EQ(cache.load("u1"), rec);
    }
    {
        FeatureCache same(dir, {{"n_mels", 2}});
        EXPECT_FALSE(same.was_invalidated());
        EXPECT_TRUE(same.contains("u1"));
    }
    FeatureCache changed(dir, {{"n_mels", 3}});
    EXPECT_TRUE(changed.was_invalidated());
    EXPECT_FALSE(changed.contains("u1"));
    EXPECT_THROW(changed.load("u1"), std::runtime_error);

    std::ofstream(dir / "junk.bin") << "NOTMAGIC";
    EXPECT_THROW(read_feature_file(dir / "junk.bin"), std::runtime_error);
    EXPECT_THROW(FeatureCache::open_existing(scratch("nowhere")), std::runtime_error);
}

TEST(Prepare, FixtureEndToEnd) {
    const auto root = scratch("data"), out = scratch("prepared");
    auto fixture = drsc::testing::fixture_options(3, 10);
    fixture.sample_rate = 22050;
    drsc::testing::write_fixture(root, fixture);
    fs::remove_all(out);
    PrepareOptions opt;
    opt.features.t_max = 40;
    const auto report = prepare_dataset(root, out, opt);
    EXPECT_EQ(report.entries, 30u);
    EXPECT_EQ(report.extracted, 30u);
    EXPECT_EQ(prepare_dataset(root, out, opt).reused, 30u);

    const DatasetLayout layout{out};
    EXPECT_TRUE(fs::exists(layout.corrupted_manifest(0.26)));
    const auto rec = read_feature_file(layout.features() / "utt_1000.bin");
    EXPECT_EQ(rec.at("mel").shape(), (Shape{256, 40}));
    EXPECT_EQ(rec.at("valid_frames")[0], 32.0f);  // 0.5 s at 16 kHz: floor(8000/256)+1

    const auto ds = load_prepared(out, {}, 32, 40);
    EXPECT_EQ(ds.train.size(), 24u);
    EXPECT_EQ(ds.test.size(), 6u);
    for (const auto* pool : {&ds.train, &ds.test})
        for (const auto& e : *pool) {
            EXPECT_EQ(e.token_ids.size(), 32u);
            for (std::size_t t = e.text_length; t < 32; ++t) EXPECT_EQ(e.token_ids[t], kPadId);
            for (float v : e.mel.values()) EXPECT_TRUE(std::isfinite(v));
            for (std::size_t b = 0; b < 256; ++b) EXPECT_EQ(e.mel.at(b, 35), 0.0f);  // padded frame
        }
    for (const auto& e : ds.train)
        for (std::size_t t = 0; t < e.text_length; ++t) EXPECT_NE(e.token_ids[t], kUnkId);

    const auto corrupted = load_prepared(out, {true, 0.26}, 32, 40);
    for (std::size_t i = 0; i < ds.train.size(); ++i) EXPECT_EQ(corrupted.train[i].token_ids, ds.train[i].token_ids);
    EXPECT_THROW(load_prepared(out, {true, 0.5}, 32), std::runtime_error);
    EXPECT_THROW(load_prepared(out, {}, 32, 256), std::runtime_error);
    EXPECT_THROW(load_prepared(scratch("absent"), {}, 32), std::runtime_error);

    const auto batch = make_batch<float>(ds, ds.train, {0, 1, 2});
    EXPECT_EQ(batch.mel.shape(), (Shape{3, 256, 40}));
    EXPECT_EQ(batch.token_ids.size(), 96u);
    EXPECT_EQ(batch.labels.size(), 3u);
}

TEST(Synthetic, DeterministicAndProbeable) {
    SyntheticSpec spec;
    spec.seed = 3;
    const auto a = make_synthetic_dataset(spec), b = make_synthetic_dataset(spec);
    EXPECT_EQ(a.view_a, b.view_a);
    EXPECT_EQ(a.view_b, b.view_b);
    EXPECT_EQ(a.view_a.shape(), (Shape{1000, 16, 8}));
    EXPECT_EQ(a.view_b.shape(), (Shape{1000, 16, 16}));

    // Linear probe on the shared factor: score_c = <s, s_c> - |s_c|^2 / 2.
    std::size_t correct = 0;
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        int best = -1;
        double best_score = -1e300;
        for (std::size_t c = 0; c < spec.n_classes; ++c) {
            double score = 0.0;
            for (std::size_t k = 0; k < spec.shared_dim; ++k)
                score += a.shared.at(i, k) * a.class_codes.at(c, k) - 0.5 * a.class_codes.at(c, k) * a.class_codes.at(c, k);
            if (score > best_score) best_score = score, best = static_cast<int>(c);
        }
        correct += best == a.labels[i];
    }
    EXPECT_EQ(correct, a.labels.size());
}

TEST(Synthetic, ShufflingOneViewBreaksAgreement) {
    const auto d = make_synthetic_dataset(SyntheticSpec{});
    // Nearest class-mean classifier per view.
    auto classify = [&](const Tensor<double>& view) {
        const std::size_t n = view.dim(0), f = view.dim(1) * view.dim(2);
        std::vector<std::vector<double>> means(5, std::vector<double>(f, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < f; ++k) means[d.labels[i]][k] += view.data()[i * f + k] / 200.0;
        std::vector<int> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            double best = 1e300;
            for (int c = 0; c < 5; ++c) {
                double dist = 0.0;
                for (std::size_t k = 0; k < f; ++k) dist += std::pow(view.data()[i * f + k] - means[c][k], 2);
                if (dist < best) best = dist, out[i] = c;
            }
        }
        return out;
    };
    const auto ca = classify(d.view_a), cb = classify(d.view_b);
    std::vector<std::size_t> perm(ca.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(1);
    std::shuffle(perm.begin(), perm.end(), rng);
    double agree = 0.0, shuffled = 0.0;
    for (std::size_t i = 0; i < ca.size(); ++i) {
        agree += ca[i] == cb[i];
        shuffled += ca[i] == cb[perm[i]];
    }
    EXPECT_GT(agree / ca.size(), 0.9);
    EXPECT_LT(shuffled / ca.size(), 0.35);

    const auto ds = dataset_from_synthetic(d, 0.2, 0);
    EXPECT_EQ(ds.test.size(), 200u);
    EXPECT_TRUE(ds.dense_text);
    EXPECT_EQ(ds.n_classes, 5u);
    const auto batch = make_batch<double>(ds, ds.test, {0, 5});
    EXPECT_EQ(batch.text_dense.shape(), (Shape{2, 16, 8}));
}

}  // namespace
