#pragma once

// Tiny on-disk dataset in the layout of the public recordings archive.

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "drsc/audio.hpp"
#include "drsc/manifest.hpp"

namespace drsc::testing {

struct FixtureOptions {
    std::size_t classes = 3;
    std::size_t per_class = 10;
    double seconds = 0.5;
    int sample_rate = 16000;
    bool drop_one_file = false;
    std::string bad_label;  // if set, the last row uses this label
};

inline FixtureOptions fixture_options(std::size_t classes, std::size_t per_class) {
    FixtureOptions o;
    o.classes = classes;
    o.per_class = per_class;
    return o;
}

/// Writes recordings under root/recordings/{train,test} and an
/// overview-of-recordings.csv with extra columns like the real index.
inline void write_fixture(const std::filesystem::path& root, const FixtureOptions& opt = {}) {
    namespace fs = std::filesystem;
    fs::remove_all(root);
    fs::create_directories(root / "recordings" / "train");
    fs::create_directories(root / "recordings" / "test");
    std::ofstream csv(root / "overview-of-recordings.csv");
    write_csv_row(csv, {"audio_clipping", "file_name", "phrase", "prompt", "speaker_id"});
    std::mt19937_64 rng(42);
    std::normal_distribution<double> g(0.0, 0.01);
    const auto& names = symptom_names();
    const std::size_t total = opt.classes * opt.per_class;
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t c = i % opt.classes;
        const std::string file = "utt_" + std::to_string(1000 + i) + ".wav";
        AudioClip clip;
        clip.sample_rate = opt.sample_rate;
        const auto n = static_cast<std::size_t>(opt.seconds * opt.sample_rate);
        const double hz = 200.0 + 150.0 * static_cast<double>(c);
        for (std::size_t t = 0; t < n; ++t)
            clip.samples.push_back(0.3 * std::sin(2 * std::numbers::pi * hz * static_cast<double>(t) / opt.sample_rate) + g(rng));
        const bool skip = opt.drop_one_file && i == 3;
        if (!skip) write_wav(root / "recordings" / (i % 4 == 0 ? "test" : "train") / file, clip);
        std::string label = names[c];
        if (!opt.bad_label.empty() && i + 1 == total) label = opt.bad_label;
        const std::string phrase = "My " + names[c] + ", it hurts \"a lot\" today " + std::to_string(i % 3);
        write_csv_row(csv, {"no_clipping", file, phrase, label, "sp" + std::to_string(i % 5)});
    }
}

}  // namespace drsc::testing
