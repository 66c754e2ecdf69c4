#pragma once

// Log-Mel spectrogram with a fixed HTK filterbank.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "drsc/tensor.hpp"

namespace drsc {

struct StftSpec {
    std::size_t n_fft = 1024;
    std::size_t win_length = 1024;
    std::size_t hop_length = 256;
    bool center = true;
};

struct MelSpec {
    StftSpec stft;
    std::size_t n_mels = 256;
    double sample_rate = 16000.0;
    double f_min = 0.0;
    double f_max = 8000.0;
    double log_floor = 1e-10;
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Center frequencies (Hz) of the n_mels triangular filters.
inline std::vector<double> mel_center_frequencies(const MelSpec& spec) {
    const double lo = hz_to_mel(spec.f_min), hi = hz_to_mel(spec.f_max);
    std::vector<double> centers(spec.n_mels);
    for (std::size_t m = 0; m < spec.n_mels; ++m)
        centers[m] = mel_to_hz(lo + (hi - lo) * static_cast<double>(m + 1) / static_cast<double>(spec.n_mels + 1));
    return centers;
}

/// Frames produced for n samples: floor((n_padded - win) / hop) + 1, where
/// centered framing pads n_fft/2 on both sides.
inline std::size_t frame_count(std::size_t n_samples, const StftSpec& stft) {
    const std::size_t padded = stft.center ? n_samples + 2 * (stft.n_fft / 2) : n_samples;
    if (padded < stft.n_fft) return 0;
    return (padded - stft.n_fft) / stft.hop_length + 1;
}

namespace detail {
struct FftwDeleter {
    void operator()(double* p) const { fftw_free(p); }
    void operator()(fftw_complex* p) const { fftw_free(p); }
};
struct PlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
}  // namespace detail

/// Owns the FFTW plan and the filterbank. Not safe for concurrent use of a
/// single instance.
class MelExtractor {
public:
    explicit MelExtractor(MelSpec spec = {}) : spec_(spec) {
        const auto& s = spec_.stft;
        if (s.n_fft == 0 || s.hop_length == 0 || s.win_length == 0 || s.win_length > s.n_fft)
            throw std::invalid_argument("invalid STFT parameters");
        if (spec_.n_mels == 0 || !(spec_.f_max > spec_.f_min) || spec_.f_max > spec_.sample_rate / 2)
            throw std::invalid_argument("invalid Mel filterbank parameters");
        n_bins_ = s.n_fft / 2 + 1;

        window_.assign(s.n_fft, 0.0);
        const std::size_t offset = (s.n_fft - s.win_length) / 2;
        for (std::size_t i = 0; i < s.win_length; ++i)  // periodic Hann
            window_[offset + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(s.win_length));

        build_filterbank();

        in_.reset(fftw_alloc_real(s.n_fft));
        out_.reset(fftw_alloc_complex(n_bins_));
        plan_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(s.n_fft), in_.get(), out_.get(), FFTW_ESTIMATE));
        if (!plan_) throw std::runtime_error("FFTW plan creation failed");
    }

    const MelSpec& spec() const { return spec_; }
    std::size_t n_bins() const { return n_bins_; }

    /// Filterbank weights, row-major [n_mels, n_bins].
    const std::vector<double>& filterbank() const { return fbank_; }

    /// Mel energies before the log, [n_mels, frames].
    Tensor<double> mel_energies(std::span<const double> samples) const {
        const auto& s = spec_.stft;
        if (samples.size() < s.n_fft)
            throw std::invalid_argument("audio clip has " + std::to_string(samples.size()) + " samples, need at least " +
                                        std::to_string(s.n_fft));
        const std::size_t frames = frame_count(samples.size(), s);
        const std::ptrdiff_t pad = s.center ? static_cast<std::ptrdiff_t>(s.n_fft / 2) : 0;
        const auto n = static_cast<std::ptrdiff_t>(samples.size());
        auto sample_at = [&](std::ptrdiff_t i) {  // reflect without edge repeat
            if (i < 0) i = -i;
            if (i >= n) i = 2 * (n - 1) - i;
            return samples[static_cast<std::size_t>(i)];
        };

        Tensor<double> out({spec_.n_mels, frames});
        std::vector<double> power(n_bins_);
        for (std::size_t f = 0; f < frames; ++f) {
            const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(f * s.hop_length) - pad;
            for (std::size_t i = 0; i < s.n_fft; ++i) in_.get()[i] = window_[i] * sample_at(start + static_cast<std::ptrdiff_t>(i));
            fftw_execute(plan_.get());
            for (std::size_t k = 0; k < n_bins_; ++k) power[k] = out_.get()[k][0] * out_.get()[k][0] + out_.get()[k][1] * out_.get()[k][1];
            for (std::size_t m = 0; m < spec_.n_mels; ++m) {
                const double* w = fbank_.data() + m * n_bins_;
                double acc = 0.0;
                for (std::size_t k = 0; k < n_bins_; ++k) acc += w[k] * power[k];
                out.at(m, f) = acc;
            }
        }
        return out;
    }

    /// log(energy + floor), [n_mels, frames].
    Tensor<double> operator()(std::span<const double> samples) const {
        auto e = mel_energies(samples);
        for (auto& v : e.storage()) v = std::log(v + spec_.log_floor);
        return e;
    }

private:
    void build_filterbank() {
        const double lo = hz_to_mel(spec_.f_min), hi = hz_to_mel(spec_.f_max);
        std::vector<double> edges(spec_.n_mels + 2);
        for (std::size_t i = 0; i < edges.size(); ++i)
            edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(spec_.n_mels + 1));
        fbank_.assign(spec_.n_mels * n_bins_, 0.0);
        for (std::size_t m = 0; m < spec_.n_mels; ++m) {
            const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
            for (std::size_t k = 0; k < n_bins_; ++k) {
                const double hz = static_cast<double>(k) * spec_.sample_rate / static_cast<double>(spec_.stft.n_fft);
                double w = 0.0;
                if (hz > left && hz <= center) w = (hz - left) / (center - left);
                else if (hz > center && hz < right) w = (right - hz) / (right - center);
                fbank_[m * n_bins_ + k] = w;
            }
        }
    }

    MelSpec spec_;
    std::size_t n_bins_ = 0;
    std::vector<double> window_;
    std::vector<double> fbank_;
    std::unique_ptr<double, detail::FftwDeleter> in_;
    std::unique_ptr<fftw_complex, detail::FftwDeleter> out_;
    std::unique_ptr<fftw_plan_s, detail::PlanDeleter> plan_;
};

/// Pads with `pad_value` or truncates along time to exactly `t_max` frames;
/// returns the number of valid frames.
inline std::size_t fit_frames(const Tensor<double>& mel, std::size_t t_max, double pad_value, Tensor<double>& out) {
    const std::size_t bins = mel.dim(0), frames = mel.dim(1);
    out = Tensor<double>({bins, t_max}, pad_value);
    const std::size_t keep = std::min(frames, t_max);
    for (std::size_t m = 0; m < bins; ++m)
        for (std::size_t t = 0; t < keep; ++t) out.at(m, t) = mel.at(m, t);
    return keep;
}

}  // namespace drsc
