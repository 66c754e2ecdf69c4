#pragma once

// Feature preparation and in-memory datasets for training and evaluation.

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "drsc/audio.hpp"
#include "drsc/feature_cache.hpp"
#include "drsc/manifest.hpp"
#include "drsc/mel.hpp"
#include "drsc/ops.hpp"
#include "drsc/synthetic.hpp"
#include "drsc/text.hpp"

namespace drsc {

struct Example {
    std::string id;
    int label = 0;
    std::vector<int> token_ids;  // token mode: l_max ids
    std::size_t text_length = 0;
    Tensor<float> text_dense;    // dense mode: [text_channels, text_length]
    Tensor<float> mel;           // [mel_channels, mel_frames]
};

struct Dataset {
    std::vector<Example> train, test;
    Vocabulary vocab;
    bool dense_text = false;
    std::size_t text_channels = 0;  // dense mode only
    std::size_t text_length = 0;
    std::size_t mel_channels = 0;
    std::size_t mel_frames = 0;
    std::size_t n_classes = kNumClasses;
    /// Identifies the feature parameters the examples were produced with.
    std::string fingerprint;

    const std::vector<Example>& split(Split s) const { return s == Split::train ? train : test; }
};

template <class T>
struct Batch {
    std::vector<int> token_ids;  // [B * L] row-major, token mode
    Tensor<T> text_dense;        // [B, C, L], dense mode
    Tensor<T> mel;               // [B, n_mels, T]
    Lengths lengths;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

template <class T>
Batch<T> make_batch(const Dataset& ds, const std::vector<Example>& pool, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("empty batch");
    const std::size_t b = indices.size();
    Batch<T> out;
    out.mel = Tensor<T>({b, ds.mel_channels, ds.mel_frames});
    if (ds.dense_text) out.text_dense = Tensor<T>({b, ds.text_channels, ds.text_length});
    else out.token_ids.reserve(b * ds.text_length);
    const std::size_t mel_n = ds.mel_channels * ds.mel_frames, txt_n = ds.text_channels * ds.text_length;
    for (std::size_t i = 0; i < b; ++i) {
        const Example& e = pool.at(indices[i]);
        require_shape(e.mel.shape(), {ds.mel_channels, ds.mel_frames}, ("mel feature of " + e.id).c_str());
        std::copy(e.mel.data(), e.mel.data() + mel_n, out.mel.data() + i * mel_n);
        if (ds.dense_text) {
            require_shape(e.text_dense.shape(), {ds.text_channels, ds.text_length}, ("text feature of " + e.id).c_str());
            std::copy(e.text_dense.data(), e.text_dense.data() + txt_n, out.text_dense.data() + i * txt_n);
        } else {
            if (e.token_ids.size() != ds.text_length) throw std::invalid_argument("token sequence of " + e.id + " has wrong length");
            out.token_ids.insert(out.token_ids.end(), e.token_ids.begin(), e.token_ids.end());
        }
        out.lengths.push_back(e.text_length);
        out.labels.push_back(e.label);
    }
    return out;
}

/// Consecutive batches over `order`, the last one possibly short.
inline std::vector<std::vector<std::size_t>> chunk(const std::vector<std::size_t>& order, std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    return out;
}

// ---------------------------------------------------------------- preparation

struct FeatureParams {
    int sample_rate = kSampleRate;
    int filter_order = 4;
    double band_low_hz = 60.0;
    double band_high_hz = 7600.0;
    MelSpec mel;
    std::size_t t_max = 256;

    nlohmann::json to_json() const {
        return {{"sample_rate", sample_rate},
                {"filter", {{"type", "butterworth_bandpass"}, {"order", filter_order}, {"low_hz", band_low_hz}, {"high_hz", band_high_hz}}},
                {"stft", {{"n_fft", mel.stft.n_fft}, {"win_length", mel.stft.win_length}, {"hop_length", mel.stft.hop_length},
                          {"window", "hann"}, {"center", mel.stft.center}}},
                {"n_mels", mel.n_mels},
                {"f_min", mel.f_min},
                {"f_max", mel.f_max},
                {"log_floor", mel.log_floor},
                {"t_max", t_max}};
    }
};

/// Files under a prepared-data directory.
struct DatasetLayout {
    std::filesystem::path root;

    std::filesystem::path manifest() const { return root / "manifest.csv"; }
    std::filesystem::path vocab() const { return root / "vocab.json"; }
    std::filesystem::path features() const { return root / "features"; }
    std::filesystem::path corrupted_manifest(double wer) const {
        char buf[64];
        std::snprintf(buf, sizeof buf, "manifest_corrupted_wer%.2f.csv", wer);
        return root / buf;
    }
};

inline void save_vocabulary(const std::filesystem::path& path, const Vocabulary& v) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << nlohmann::json{{"tokens", v.tokens()}}.dump(1) << '\n';
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return Vocabulary::from_tokens(nlohmann::json::parse(in).at("tokens").get<std::vector<std::string>>());
}

/// Waveform to fitted log-Mel record: resample, zero-phase band-pass,
/// log-Mel, pad or truncate to t_max.
inline FeatureRecord extract_features(const AudioClip& raw, const FeatureParams& p, const MelExtractor& mel) {
    AudioClip clip = resample(raw, p.sample_rate);
    const SosFilter band = butterworth_bandpass(p.filter_order, p.band_low_hz, p.band_high_hz, p.sample_rate);
    clip = zero_phase_filter(clip, band);
    if (clip.samples.size() < p.mel.stft.n_fft) {
        spdlog::warn("clip of {} samples is shorter than one window, zero-padding to {}", clip.samples.size(), p.mel.stft.n_fft);
        clip.samples.resize(p.mel.stft.n_fft, 0.0);
    }
    const Tensor<double> full = mel(clip.samples);
    Tensor<double> fitted;
    const std::size_t valid = fit_frames(full, p.t_max, std::log(p.mel.log_floor), fitted);
    return {{"mel", fitted.cast<float>()}, {"valid_frames", Tensor<float>({1}, {static_cast<float>(valid)})}};
}

struct PrepareOptions {
    ManifestOptions manifest;
    FeatureParams features;
    std::vector<double> corrupted_wers{0.26};
    CorruptionSpec corruption;  // target_wer overridden per entry of corrupted_wers
};

struct PrepareReport {
    std::size_t entries = 0;
    std::size_t extracted = 0;
    std::size_t reused = 0;
};

/// Builds manifest, vocabulary, corrupted-text manifests and the feature
/// cache under `out`. Cached features with matching parameters are reused.
inline PrepareReport prepare_dataset(const std::filesystem::path& data_root, const std::filesystem::path& out,
                                     const PrepareOptions& opt) {
    const DatasetLayout layout{out};
    std::filesystem::create_directories(out);
    const Manifest m = build_manifest(data_root, opt.manifest);
    write_manifest(layout.manifest(), m);
    const Vocabulary vocab = Vocabulary::build(m.transcriptions(Split::train));
    save_vocabulary(layout.vocab(), vocab);
    for (double wer : opt.corrupted_wers) {
        CorruptionSpec spec = opt.corruption;
        spec.target_wer = wer;
        write_manifest(layout.corrupted_manifest(wer), corrupt_manifest(m, spec, vocab.words()));
    }

    FeatureCache cache(layout.features(), opt.features.to_json());
    const MelExtractor mel(opt.features.mel);
    PrepareReport report;
    report.entries = m.entries.size();
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& e = m.entries[i];
        if (cache.contains(e.id)) {
            ++report.reused;
            continue;
        }
        cache.store(e.id, extract_features(read_wav(e.audio_path), opt.features, mel));
        ++report.extracted;
        if ((i + 1) % 500 == 0) spdlog::info("extracted features for {}/{} utterances", i + 1, m.entries.size());
    }
    return report;
}

struct TextSource {
    bool corrupted = false;
    double target_wer = 0.26;

    std::string name() const {
        if (!corrupted) return "accurate";
        char buf[32];
        std::snprintf(buf, sizeof buf, "corrupted(%.2f)", target_wer);
        return buf;
    }
};

/// Per-bin mean and standard deviation over valid train frames; every mel
/// feature is standardized with them and padded frames are set to zero.
inline void normalize_mel(Dataset& ds, const std::vector<std::size_t>& train_valid, const std::vector<std::size_t>& test_valid) {
    const std::size_t bins = ds.mel_channels;
    std::vector<double> mean(bins, 0.0), sq(bins, 0.0);
    double count = 0.0;
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
        const auto& m = ds.train[i].mel;
        for (std::size_t t = 0; t < train_valid[i]; ++t)
            for (std::size_t b = 0; b < bins; ++b) {
                const double v = m.at(b, t);
                mean[b] += v;
                sq[b] += v * v;
            }
        count += static_cast<double>(train_valid[i]);
    }
    if (count == 0.0) throw std::runtime_error("no training frames to compute mel statistics");
    std::vector<double> stdv(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        mean[b] /= count;
        stdv[b] = std::sqrt(std::max(sq[b] / count - mean[b] * mean[b], 0.0)) + 1e-5;
    }
    auto apply = [&](std::vector<Example>& pool, const std::vector<std::size_t>& valid) {
        for (std::size_t i = 0; i < pool.size(); ++i)
            for (std::size_t b = 0; b < bins; ++b)
                for (std::size_t t = 0; t < ds.mel_frames; ++t) {
                    float& v = pool[i].mel.at(b, t);
                    v = t < valid[i] ? static_cast<float>((v - mean[b]) / stdv[b]) : 0.0f;
                }
    };
    apply(ds.train, train_valid);
    apply(ds.test, test_valid);
}

/// Loads a prepared directory. With a corrupted text source, test-split
/// transcriptions come from the matching corrupted manifest.
inline Dataset load_prepared(const std::filesystem::path& dir, const TextSource& source, std::size_t l_max,
                             std::optional<std::size_t> t_max_expected = std::nullopt) {
    const DatasetLayout layout{dir};
    if (!std::filesystem::exists(layout.manifest()))
        throw std::runtime_error("prepared data not found in " + dir.string() + "; run `drsc prep --data <root> --out " + dir.string() + "`");
    Manifest m = read_manifest(layout.manifest());
    if (source.corrupted) {
        const auto path = layout.corrupted_manifest(source.target_wer);
        if (!std::filesystem::exists(path))
            throw std::runtime_error("no corrupted manifest " + path.string() + "; rerun prep with --wer " + std::to_string(source.target_wer));
        const Manifest c = read_manifest(path);
        if (c.entries.size() != m.entries.size()) throw std::runtime_error("corrupted manifest does not match " + layout.manifest().string());
        for (std::size_t i = 0; i < m.entries.size(); ++i) {
            if (c.entries[i].id != m.entries[i].id) throw std::runtime_error("corrupted manifest order mismatch at " + c.entries[i].id);
            if (m.entries[i].split == Split::test) m.entries[i].transcription = c.entries[i].transcription;
        }
    }
    const FeatureCache cache = FeatureCache::open_existing(layout.features());
    const auto& params = cache.params();

    Dataset ds;
    ds.fingerprint = cache.hash_string();
    ds.vocab = load_vocabulary(layout.vocab());
    ds.dense_text = false;
    ds.text_length = l_max;
    ds.mel_channels = params.at("n_mels").get<std::size_t>();
    ds.mel_frames = params.at("t_max").get<std::size_t>();
    if (t_max_expected && *t_max_expected != ds.mel_frames)
        throw std::runtime_error("feature cache has t_max " + std::to_string(ds.mel_frames) + " but the model expects " +
                                 std::to_string(*t_max_expected) + "; rerun prep");
    std::vector<std::size_t> train_valid, test_valid;
    for (const auto& e : m.entries) {
        FeatureRecord rec = cache.load(e.id);
        Example ex;
        ex.id = e.id;
        ex.label = e.label;
        const auto tok = tokenize(e.transcription, ds.vocab, l_max);
        ex.token_ids = tok.ids;
        ex.text_length = tok.length;
        ex.mel = std::move(rec.at("mel"));
        const auto valid = static_cast<std::size_t>(rec.at("valid_frames")[0]);
        if (e.split == Split::train) {
            ds.train.push_back(std::move(ex));
            train_valid.push_back(valid);
        } else {
            ds.test.push_back(std::move(ex));
            test_valid.push_back(valid);
        }
    }
    normalize_mel(ds, train_valid, test_valid);
    return ds;
}

/// Wraps synthetic views as a dense-text dataset with a stratified split.
inline Dataset dataset_from_synthetic(const SyntheticData& data, double test_fraction, std::uint64_t seed) {
    Manifest m;
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "syn%06zu", i);
        m.entries.push_back({id, "", "", data.labels[i], Split::train, std::nullopt});
    }
    stratified_split(m, test_fraction, seed);
    Dataset ds;
    ds.dense_text = true;
    ds.text_channels = data.view_a.dim(1);
    ds.text_length = data.view_a.dim(2);
    ds.mel_channels = data.view_b.dim(1);
    ds.mel_frames = data.view_b.dim(2);
    ds.n_classes = static_cast<std::size_t>(*std::max_element(data.labels.begin(), data.labels.end()) + 1);
    const std::size_t na = ds.text_channels * ds.text_length, nb = ds.mel_channels * ds.mel_frames;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        Example ex;
        ex.id = m.entries[i].id;
        ex.label = m.entries[i].label;
        ex.text_length = ds.text_length;
        ex.text_dense = Tensor<float>({ds.text_channels, ds.text_length});
        ex.mel = Tensor<float>({ds.mel_channels, ds.mel_frames});
        for (std::size_t k = 0; k < na; ++k) ex.text_dense.data()[k] = static_cast<float>(data.view_a.data()[i * na + k]);
        for (std::size_t k = 0; k < nb; ++k) ex.mel.data()[k] = static_cast<float>(data.view_b.data()[i * nb + k]);
        (m.entries[i].split == Split::train ? ds.train : ds.test).push_back(std::move(ex));
    }
    return ds;
}

}  // namespace drsc
