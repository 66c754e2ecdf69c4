#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "drsc/manifest.hpp"
#include "fixture.hpp"

using namespace drsc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) { return fs::temp_directory_path() / ("drsc_manifest_" + name); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

TEST(Csv, QuotesAndNewlinesRoundTrip) {
    std::stringstream ss;
    write_csv_row(ss, {"a", "b,c", "say \"hi\"", "two\nlines", ""});
    write_csv_row(ss, {"x"});
    const auto rows = parse_csv(ss);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], (CsvRow{"a", "b,c", "say \"hi\"", "two\nlines", ""}));
    EXPECT_EQ(rows[1], (CsvRow{"x"}));
    std::stringstream crlf("h1,h2\r\n1,2\r\n");
    EXPECT_EQ(parse_csv(crlf).size(), 2u);
    std::stringstream open("\"unterminated");
    EXPECT_THROW(parse_csv(open), std::runtime_error);
}

TEST(Labels, InventoryHas25DistinctSymptoms) {
    std::set<std::string> names(symptom_names().begin(), symptom_names().end());
    EXPECT_EQ(names.size(), 25u);
    EXPECT_EQ(symptom_id("head ache"), symptom_id("Head ache"));
    EXPECT_THROW(symptom_id("Toothache"), std::invalid_argument);
}

TEST(Split, TenInOneClassGivesTwoTest) {
    for (std::uint64_t seed : {0u, 1u, 17u, 123u}) {
        Manifest m;
        for (int i = 0; i < 10; ++i) m.entries.push_back({"u" + std::to_string(i), "", "", 4, Split::train, {}});
        stratified_split(m, 0.2, seed);
        EXPECT_EQ(m.select(Split::test).size(), 2u);
    }
}

TEST(Split, PerClassBoundsOnRandomSizes) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> size(1, 300);
    Manifest m;
    std::vector<std::size_t> sizes(kNumClasses);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        sizes[c] = static_cast<std::size_t>(size(rng));
        for (std::size_t i = 0; i < sizes[c]; ++i) m.entries.push_back({std::to_string(c) + "_" + std::to_string(i), "", "", int(c), Split::train, {}});
    }
    stratified_split(m, 0.2, 9);
    const auto counts = m.class_counts();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const double expected = 0.2 * static_cast<double>(sizes[c]);
        EXPECT_LE(std::abs(static_cast<double>(counts[c][1]) - expected), 1.0) << c;
        EXPECT_EQ(counts[c][0] + counts[c][1], sizes[c]);
    }
    // paper-sized classes (175..275 utterances) land in 35..55 test items
    for (std::size_t n : {175u, 275u}) EXPECT_TRUE(std::lround(0.2 * n) >= 35 && std::lround(0.2 * n) <= 55);
}

TEST(BuildManifest, FixtureDeterministicAndStratified) {
    const auto root = scratch("fixture");
    drsc::testing::write_fixture(root, drsc::testing::fixture_options(3, 10));
    const auto a = build_manifest(root, {0.2, 7});
    const auto b = build_manifest(root, {0.2, 7});
    ASSERT_EQ(a.entries.size(), 30u);
    write_manifest(scratch("a.csv"), a);
    write_manifest(scratch("b.csv"), b);
    EXPECT_EQ(slurp(scratch("a.csv")), slurp(scratch("b.csv")));
    const auto counts = a.class_counts();
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(counts[c][1], 2u);
    std::set<std::string> ids;
    for (const auto& e : a.entries) {
        EXPECT_TRUE(ids.insert(e.id).second);
        EXPECT_TRUE(fs::exists(e.audio_path));
    }
    EXPECT_EQ(read_manifest(scratch("a.csv")).entries, a.entries);
    const auto header = slurp(scratch("a.csv")).substr(0, slurp(scratch("a.csv")).find('\n'));
    EXPECT_EQ(header, "id,audio_path,transcription,label,split");
}

TEST(BuildManifest, MissingAudioAndUnknownLabel) {
    const auto root = scratch("missing");
    auto missing = drsc::testing::fixture_options(2, 5);
    missing.drop_one_file = true;
    drsc::testing::write_fixture(root, missing);
    try {
        build_manifest(root);
        FAIL() << "expected MissingAudioError";
    } catch (const MissingAudioError& e) {
        EXPECT_EQ(e.id(), "utt_1003");
    }
    ManifestOptions skip;
    skip.skip_missing_audio = true;
    EXPECT_EQ(build_manifest(root, skip).entries.size(), 9u);

    const auto bad = scratch("badlabel");
    auto unknown = drsc::testing::fixture_options(2, 5);
    unknown.bad_label = "Toothache";
    drsc::testing::write_fixture(bad, unknown);
    try {
        build_manifest(bad);
        FAIL() << "expected unknown label";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("Toothache"), std::string::npos);
    }
}

TEST(BuildManifest, CorruptedCopyKeepsTrainAndAddsWer) {
    const auto root = scratch("corrupt");
    drsc::testing::write_fixture(root, drsc::testing::fixture_options(2, 10));
    const auto m = build_manifest(root);
    const auto vocab = Vocabulary::build(m.transcriptions(Split::train));
    const auto c = corrupt_manifest(m, CorruptionSpec{0.5, 0.6, 0.2, 0.2, 3}, vocab.words());
    bool changed = false;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        ASSERT_TRUE(c.entries[i].wer.has_value());
        if (m.entries[i].split == Split::train) EXPECT_EQ(c.entries[i].transcription, m.entries[i].transcription);
        else changed |= c.entries[i].transcription != m.entries[i].transcription;
    }
    EXPECT_TRUE(changed);
    write_manifest(scratch("c.csv"), c);
    const auto text = slurp(scratch("c.csv"));
    EXPECT_EQ(text.substr(0, text.find('\n')), "id,audio_path,transcription,label,split,wer");
    const auto back = read_manifest(scratch("c.csv"));
    for (std::size_t i = 0; i < c.entries.size(); ++i) EXPECT_NEAR(*back.entries[i].wer, *c.entries[i].wer, 1e-5);
}

}  // namespace
