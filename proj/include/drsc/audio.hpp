#pragma once

// Waveform I/O, resampling and zero-phase IIR filtering.

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace drsc {

inline constexpr int kSampleRate = 16000;

struct AudioClip {
    std::vector<double> samples;
    int sample_rate = kSampleRate;

    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

namespace detail {
inline std::uint32_t read_u32le(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint16_t read_u16le(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }
inline void put_u32le(std::ostream& os, std::uint32_t v) {
    const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    os.write(b, 4);
}
inline void put_u16le(std::ostream& os, std::uint16_t v) {
    const char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
    os.write(b, 2);
}
}  // namespace detail

/// Reads RIFF/WAVE (PCM 8/16/24/32-bit or IEEE float 32/64), mixing
/// channels down to mono in [-1, 1].
inline AudioClip read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open audio file " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error(path.string() + ": not a RIFF/WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::uint32_t size = detail::read_u32le(chunk + 4);
        const std::size_t body = pos + 8;
        const std::size_t available = std::min<std::size_t>(size, bytes.size() - body);
        if (std::memcmp(chunk, "fmt ", 4) == 0 && available >= 16) {
            format = detail::read_u16le(chunk + 8);
            channels = detail::read_u16le(chunk + 10);
            rate = detail::read_u32le(chunk + 12);
            bits = detail::read_u16le(chunk + 22);
            if (format == 0xFFFE && available >= 26) format = detail::read_u16le(chunk + 8 + 24);
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            data_size = available;
        }
        pos = body + size + (size & 1u);
    }
    if (data == nullptr || channels == 0 || rate == 0) throw std::runtime_error(path.string() + ": missing fmt or data chunk");
    if (format != 1 && format != 3) throw std::runtime_error(path.string() + ": unsupported WAVE format " + std::to_string(format));

    const std::size_t width = bits / 8;
    if (width == 0 || (format == 3 && width != 4 && width != 8) || (format == 1 && width > 4))
        throw std::runtime_error(path.string() + ": unsupported sample width " + std::to_string(bits));
    const std::size_t frames = data_size / (width * channels);
    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    clip.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const unsigned char* p = data + (f * channels + c) * width;
            double v = 0.0;
            if (format == 3 && width == 4) {
                float x;
                std::uint32_t u = detail::read_u32le(p);
                std::memcpy(&x, &u, 4);
                v = x;
            } else if (format == 3) {
                std::uint64_t u = std::uint64_t(detail::read_u32le(p)) | std::uint64_t(detail::read_u32le(p + 4)) << 32;
                double x;
                std::memcpy(&x, &u, 8);
                v = x;
            } else if (width == 1) {
                v = (static_cast<int>(p[0]) - 128) / 128.0;
            } else {
                std::int32_t s = 0;
                for (std::size_t b = 0; b < width; ++b) s |= std::int32_t(p[b]) << (8 * b);
                const int shift = 32 - static_cast<int>(8 * width);
                s = (s << shift) >> shift;
                v = s / std::pow(2.0, 8.0 * width - 1);
            }
            acc += v;
        }
        clip.samples[f] = std::clamp(acc / channels, -1.0, 1.0);
    }
    return clip;
}

/// Mono 16-bit PCM writer.
inline void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const auto n = static_cast<std::uint32_t>(clip.samples.size());
    out.write("RIFF", 4);
    detail::put_u32le(out, 36 + 2 * n);
    out.write("WAVEfmt ", 8);
    detail::put_u32le(out, 16);
    detail::put_u16le(out, 1);
    detail::put_u16le(out, 1);
    detail::put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate));
    detail::put_u32le(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
    detail::put_u16le(out, 2);
    detail::put_u16le(out, 16);
    out.write("data", 4);
    detail::put_u32le(out, 2 * n);
    for (double s : clip.samples) {
        const auto q = static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0, 1.0) * 32767.0));
        detail::put_u16le(out, static_cast<std::uint16_t>(q));
    }
}

/// Band-limited resampling with a Hann-windowed sinc kernel.
inline AudioClip resample(const AudioClip& clip, int target_rate, int zero_crossings = 16) {
    if (target_rate <= 0) throw std::invalid_argument("target sample rate must be positive");
    if (clip.sample_rate == target_rate) return clip;
    const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
    const double cutoff = std::min(1.0, ratio);
    const double half_width = zero_crossings / cutoff;
    const auto n_in = static_cast<std::ptrdiff_t>(clip.samples.size());
    const auto n_out = static_cast<std::size_t>(std::ceil(static_cast<double>(n_in) * ratio));
    AudioClip out;
    out.sample_rate = target_rate;
    out.samples.resize(n_out);
    for (std::size_t n = 0; n < n_out; ++n) {
        const double t = static_cast<double>(n) / ratio;
        const auto lo = static_cast<std::ptrdiff_t>(std::ceil(t - half_width));
        const auto hi = static_cast<std::ptrdiff_t>(std::floor(t + half_width));
        double acc = 0.0;
        for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(lo, 0); k <= std::min(hi, n_in - 1); ++k) {
            const double x = t - static_cast<double>(k);
            const double arg = std::numbers::pi * cutoff * x;
            const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
            const double window = 0.5 + 0.5 * std::cos(std::numbers::pi * x / half_width);
            acc += clip.samples[static_cast<std::size_t>(k)] * cutoff * sinc * window;
        }
        out.samples[n] = std::clamp(acc, -1.0, 1.0);
    }
    return out;
}

/// Second-order section, a0 normalized to 1.
struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0;
    double a1 = 0, a2 = 0;

    bool stable() const { return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2; }

    std::complex<double> response(double omega) const {
        const std::complex<double> z1 = std::polar(1.0, -omega), z2 = z1 * z1;
        return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
    }

    double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

/// Cascade of second-order sections.
struct SosFilter {
    std::vector<Biquad> sections;

    bool stable() const {
        return std::all_of(sections.begin(), sections.end(), [](const Biquad& s) { return s.stable(); });
    }

    /// Frequency response at normalized angular frequency omega (rad/sample).
    std::complex<double> response(double omega) const {
        std::complex<double> h{1.0, 0.0};
        for (const auto& s : sections) h *= s.response(omega);
        return h;
    }

    /// Causal filtering, optionally starting from the steady state for a
    /// constant input equal to `initial`.
    std::vector<double> apply(std::span<const double> x, std::optional<double> initial = std::nullopt) const {
        std::vector<double> y(x.begin(), x.end());
        double level = initial.value_or(0.0);
        for (const auto& s : sections) {
            double z1 = 0.0, z2 = 0.0;
            if (initial) {
                const double g = s.dc_gain();
                z2 = level * (s.b2 - s.a2 * g);
                z1 = level * (s.b1 - s.a1 * g) + z2;
                level *= g;
            }
            for (double& v : y) {
                const double in = v;
                const double out = s.b0 * in + z1;
                z1 = s.b1 * in - s.a1 * out + z2;
                z2 = s.b2 * in - s.a2 * out;
                v = out;
            }
        }
        return y;
    }

    /// Samples until the impulse response envelope falls below `tol` of its
    /// peak (capped at `cap`).
    std::size_t settle_length(double tol = 1e-13, std::size_t cap = 1u << 17) const {
        std::vector<double> impulse(cap, 0.0);
        impulse[0] = 1.0;
        const auto h = apply(impulse);
        double peak = 0.0;
        for (double v : h) peak = std::max(peak, std::abs(v));
        std::size_t last = 0;
        for (std::size_t i = 0; i < h.size(); ++i)
            if (std::abs(h[i]) > tol * peak) last = i;
        return last + 1;
    }
};

namespace detail {
using cplx = std::complex<double>;

inline std::vector<cplx> butterworth_prototype(int order) {
    std::vector<cplx> poles;
    for (int k = 0; k < order; ++k) {
        const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
        poles.push_back(std::polar(1.0, theta));
    }
    return poles;
}

inline cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

inline double prewarp(double hz, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * hz / fs); }

/// Groups z-plane poles into denominators: conjugate pairs first, then real
/// poles two at a time.
inline std::vector<std::pair<double, double>> pole_pairs(const std::vector<cplx>& poles) {
    std::vector<std::pair<double, double>> out;
    std::vector<double> reals;
    for (const auto& p : poles) {
        if (std::abs(p.imag()) < 1e-12) reals.push_back(p.real());
        else if (p.imag() > 0) out.emplace_back(-2.0 * p.real(), std::norm(p));
    }
    std::sort(reals.begin(), reals.end());
    for (std::size_t i = 0; i + 1 < reals.size(); i += 2) out.emplace_back(-(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]);
    if (reals.size() % 2) out.emplace_back(-reals.back(), 0.0);
    return out;
}

inline void normalize_gain(SosFilter& f, double omega) {
    const double g = std::abs(f.response(omega));
    const double per = std::pow(1.0 / g, 1.0 / static_cast<double>(f.sections.size()));
    for (auto& s : f.sections) {
        s.b0 *= per;
        s.b1 *= per;
        s.b2 *= per;
    }
}
}  // namespace detail

/// Digital Butterworth low-pass by bilinear transform, unity DC gain.
inline SosFilter butterworth_lowpass(int order, double cutoff_hz, double fs) {
    if (order < 1 || !(cutoff_hz > 0.0) || !(cutoff_hz < fs / 2)) throw std::invalid_argument("invalid low-pass design");
    const double wc = detail::prewarp(cutoff_hz, fs);
    std::vector<detail::cplx> zpoles;
    for (const auto& p : detail::butterworth_prototype(order)) zpoles.push_back(detail::bilinear(wc * p, fs));
    SosFilter f;
    const auto pairs = detail::pole_pairs(zpoles);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        Biquad s;
        s.a1 = pairs[i].first;
        s.a2 = pairs[i].second;
        // zeros at z = -1, two per section except a trailing first-order one
        const bool first_order = pairs[i].second == 0.0 && order % 2 == 1 && i + 1 == pairs.size();
        if (first_order) {
            s.b0 = 1.0;
            s.b1 = 1.0;
        } else {
            s.b0 = 1.0;
            s.b1 = 2.0;
            s.b2 = 1.0;
        }
        f.sections.push_back(s);
    }
    detail::normalize_gain(f, 0.0);
    return f;
}

/// Digital Butterworth band-pass: an order-N analog prototype mapped to a
/// 2N-pole band-pass, bilinear transformed, unity gain at the geometric
/// center frequency. Each section carries one zero at z = 1 and one at -1.
inline SosFilter butterworth_bandpass(int order, double low_hz, double high_hz, double fs) {
    if (order < 1 || !(low_hz > 0.0) || !(high_hz > low_hz) || !(high_hz < fs / 2))
        throw std::invalid_argument("invalid band-pass design");
    const double w1 = detail::prewarp(low_hz, fs), w2 = detail::prewarp(high_hz, fs);
    const double w0 = std::sqrt(w1 * w2), bw = w2 - w1;
    std::vector<detail::cplx> zpoles;
    for (const auto& p : detail::butterworth_prototype(order)) {
        const detail::cplx half = p * bw / 2.0;
        const detail::cplx root = std::sqrt(half * half - w0 * w0);
        zpoles.push_back(detail::bilinear(half + root, fs));
        zpoles.push_back(detail::bilinear(half - root, fs));
    }
    SosFilter f;
    for (const auto& [a1, a2] : detail::pole_pairs(zpoles)) {
        Biquad s;
        s.b0 = 1.0;
        s.b2 = -1.0;
        s.a1 = a1;
        s.a2 = a2;
        f.sections.push_back(s);
    }
    const double center = 2.0 * std::atan(w0 / (2.0 * fs));
    detail::normalize_gain(f, center);
    return f;
}

/// Speech-band pre-filter used by feature preparation: 4th-order
/// Butterworth band-pass, 60 to 7600 Hz at 16 kHz.
inline SosFilter default_speech_filter() { return butterworth_bandpass(4, 60.0, 7600.0, kSampleRate); }

/// Forward-backward filtering. The signal is extended at both ends by odd
/// reflection (up to n-1 samples) followed by a constant hold as long as the
/// filter's settling time, and each pass starts from the steady state of
/// its first sample, so the result equals the infinite-extension zero-phase
/// response up to round-off and is symmetric under time reversal.
inline std::vector<double> zero_phase_filter(std::span<const double> x, const SosFilter& filter) {
    if (!filter.stable()) throw std::invalid_argument("zero_phase_filter: filter has poles on or outside the unit circle");
    const std::size_t n = x.size();
    if (n == 0) return {};
    const std::size_t reflect = n > 1 ? n - 1 : 0;
    const std::size_t hold = filter.settle_length();
    const std::size_t pad = reflect + hold;

    std::vector<double> ext(n + 2 * pad);
    for (std::size_t i = 0; i < n; ++i) ext[pad + i] = x[i];
    for (std::size_t k = 1; k <= pad; ++k) {
        const std::size_t r = std::min(k, reflect);
        ext[pad - k] = 2.0 * x[0] - x[r];
        ext[pad + n - 1 + k] = 2.0 * x[n - 1] - x[n - 1 - r];
    }
    auto y = filter.apply(ext, ext.front());
    std::reverse(y.begin(), y.end());
    y = filter.apply(y, y.front());
    std::reverse(y.begin(), y.end());
    return {y.begin() + static_cast<std::ptrdiff_t>(pad), y.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

inline AudioClip zero_phase_filter(const AudioClip& clip, const SosFilter& filter) {
    AudioClip out;
    out.sample_rate = clip.sample_rate;
    out.samples = zero_phase_filter(std::span<const double>(clip.samples), filter);
    return out;
}

}  // namespace drsc
