#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "drsc/mel.hpp"

using namespace drsc;

namespace {

std::vector<double> tone(double hz, double amp, std::size_t n = 16000) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::cos(2 * std::numbers::pi * hz * static_cast<double>(i) / 16000.0);
    return x;
}

TEST(Mel, FrameCount) {
    // centered: floor((16000 + 1024 - 1024) / 256) + 1
    EXPECT_EQ(frame_count(16000, StftSpec{}), 63u);
    MelExtractor mel;
    const auto out = mel(tone(300, 0.1));
    EXPECT_EQ(out.dim(0), 256u);
    EXPECT_EQ(out.dim(1), 63u);
}

TEST(Mel, SilenceIsLogFloor) {
    MelExtractor mel;
    const auto out = mel(std::vector<double>(16000, 0.0));
    for (double v : out.values()) EXPECT_DOUBLE_EQ(v, std::log(1e-10));
}

TEST(Mel, ToneLandsInNearestBank) {
    // Centers are evenly spaced on the HTK scale between 0 and 8000 Hz.
    auto mel_of = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    const double top = mel_of(8000.0);
    std::size_t nearest = 0;
    double best = 1e9;
    for (std::size_t m = 0; m < 256; ++m) {
        const double c = 700.0 * (std::pow(10.0, top * static_cast<double>(m + 1) / 257.0 / 2595.0) - 1.0);
        if (std::abs(c - 440.0) < best) {
            best = std::abs(c - 440.0);
            nearest = m;
        }
    }
    // A cosine is even about the first sample, so reflect padding adds no
    // discontinuity to the opening frames.
    MelExtractor mel;
    const auto out = mel(tone(440, 0.5));
    for (std::size_t t = 0; t < out.dim(1); ++t) {
        std::size_t arg = 0;
        for (std::size_t m = 1; m < 256; ++m)
            if (out.at(m, t) > out.at(arg, t)) arg = m;
        EXPECT_EQ(arg, nearest) << "frame " << t;
    }
}

TEST(Mel, EnergyScalesWithSquaredAmplitude) {
    MelExtractor mel;
    auto x = tone(1000, 0.2);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.05 * std::sin(0.37 * static_cast<double>(i * i % 977));
    auto x2 = x;
    for (auto& v : x2) v *= 2.0;
    const auto e1 = mel.mel_energies(x), e2 = mel.mel_energies(x2);
    for (std::size_t i = 0; i < e1.size(); ++i) EXPECT_NEAR(e2[i], 4.0 * e1[i], 1e-9 * (1.0 + e1[i]));
}

TEST(Mel, RejectsShortClipAndBadSpec) {
    MelExtractor mel;
    EXPECT_THROW(mel(std::vector<double>(1000, 0.0)), std::invalid_argument);
    MelSpec bad;
    bad.f_max = 9000;
    EXPECT_THROW(MelExtractor{bad}, std::invalid_argument);
}

TEST(Mel, FitFramesPadsAndTruncates) {
    Tensor<double> m({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<double> out;
    EXPECT_EQ(fit_frames(m, 5, -1.0, out), 3u);
    EXPECT_EQ(out.shape(), (Shape{2, 5}));
    EXPECT_EQ(out.at(1, 2), 6.0);
    EXPECT_EQ(out.at(1, 4), -1.0);
    EXPECT_EQ(fit_frames(m, 2, 0.0, out), 2u);
    EXPECT_EQ(out.at(1, 1), 5.0);
}

}  // namespace
