#pragma once

// Trainable networks: the two-domain disentangling model (content/intent
// encoders, generators, discriminators, fusion + classifier) and the
// SpeechIC convolutional baseline.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "drsc/layers.hpp"

namespace drsc {

enum class Domain { text, mel };

inline const char* to_string(Domain d) { return d == Domain::text ? "text" : "mel"; }

struct EncoderSpec {
    std::vector<std::size_t> bank_kernels{1, 2, 3, 4, 5, 6, 7, 8};
    std::size_t channels = 128;
    std::size_t res_blocks = 3;
    std::size_t intent_dim = 128;
};

struct ModelSpec {
    EncoderSpec encoder;
    std::size_t content_dim = 64;
    std::size_t text_dim = 256;
    std::size_t text_length = 32;
    std::size_t n_mels = 256;
    std::size_t mel_frames = 256;
    std::size_t fusion_dim = 256;
    std::size_t n_classes = 25;
    /// 0 when text arrives as dense feature matrices instead of token ids.
    std::size_t vocab_size = 0;
    std::size_t disc_channels = 64;
    std::size_t disc_layers = 4;
    double dropout = 0.1;
    std::size_t baseline_channels = 128;
    std::size_t baseline_hidden = 256;

    std::size_t channels_of(Domain d) const { return d == Domain::text ? text_dim : n_mels; }
    std::size_t length_of(Domain d) const { return d == Domain::text ? text_length : mel_frames; }
};

/// training=false gives deterministic inference (no dropout, content = mu).
struct ForwardContext {
    bool training = false;
    Rng* rng = nullptr;

    Rng* dropout_rng() const { return training ? rng : nullptr; }
};

template <class T>
struct ContentPosterior {
    Var<T> mu;
    Var<T> logvar;
    Var<T> sample;
};

template <class T>
struct LatentPair {
    ContentPosterior<T> content;
    Var<T> intent;
};

namespace detail {
inline Shape domain_shape(const ModelSpec& spec, Domain d, std::size_t batch) {
    return {batch, spec.channels_of(d), spec.length_of(d)};
}

template <class T>
void check_feature(const ModelSpec& spec, Domain d, const Var<T>& x) {
    if (x.shape().size() != 3) {
        throw std::invalid_argument(std::string(to_string(d)) + " feature: expected rank 3, got " + shape_str(x.shape()));
    }
    require_shape(x.shape(), domain_shape(spec, d, x.dim(0)), to_string(d));
}
}  // namespace detail

/// Convolution bank + projection + residual blocks; time length is kept.
template <class T>
class EncoderTrunk {
public:
    EncoderTrunk() = default;
    EncoderTrunk(ParamStore<T>& store, const std::string& name, Role role, std::size_t in_channels,
                 const EncoderSpec& spec, Rng& rng) {
        for (std::size_t k : spec.bank_kernels) {
            if (k == 0) throw std::invalid_argument("conv bank kernel widths must be positive");
            bank_.emplace_back(store, name + ".bank" + std::to_string(k), role, in_channels, spec.channels,
                               Conv1dGeometry::same(k), rng);
        }
        project_ = Conv1d<T>(store, name + ".project", role, spec.channels * spec.bank_kernels.size(), spec.channels,
                             Conv1dGeometry::same(1), rng);
        for (std::size_t i = 0; i < spec.res_blocks; ++i)
            blocks_.emplace_back(store, name + ".res" + std::to_string(i), role, spec.channels, spec.channels,
                                 Conv1dGeometry::same(3), rng);
    }

    Var<T> operator()(const Var<T>& x, const Lengths& lengths) const {
        std::vector<Var<T>> branches;
        branches.reserve(bank_.size());
        for (const auto& conv : bank_) branches.push_back(mask_time(relu(conv(x)), lengths));
        Var<T> h = mask_time(relu(project_(concat(branches))), lengths);
        for (const auto& conv : blocks_) h = add(h, mask_time(relu(conv(h)), lengths));
        return h;
    }

private:
    std::vector<Conv1d<T>> bank_;
    Conv1d<T> project_;
    std::vector<Conv1d<T>> blocks_;
};

template <class T>
class ContentEncoder {
public:
    ContentEncoder() = default;
    ContentEncoder(ParamStore<T>& store, const std::string& name, std::size_t in_channels, const ModelSpec& spec,
                   Rng& rng)
        : trunk_(store, name, Role::min_player, in_channels, spec.encoder, rng),
          head_(store, name + ".head", Role::min_player, spec.encoder.channels, 2 * spec.content_dim,
                Conv1dGeometry::same(1), rng),
          content_dim_(spec.content_dim) {}

    ContentPosterior<T> operator()(const Var<T>& x, const Lengths& lengths, const ForwardContext& ctx) const {
        const Var<T> stats = mask_time(head_(trunk_(x, lengths)), lengths);
        ContentPosterior<T> out{slice(stats, 0, content_dim_), slice(stats, content_dim_, content_dim_), {}};
        if (ctx.training && ctx.rng != nullptr) {
            Tensor<T> eps(out.mu.shape());
            std::normal_distribution<double> normal(0.0, 1.0);
            for (auto& e : eps.storage()) e = static_cast<T>(normal(*ctx.rng));
            Var<T> noise = mask_time(constant(std::move(eps)), lengths);
            out.sample = add(out.mu, mul(exp(scale(out.logvar, T(0.5))), noise));
        } else {
            out.sample = out.mu;
        }
        return out;
    }

private:
    EncoderTrunk<T> trunk_;
    Conv1d<T> head_;
    std::size_t content_dim_ = 0;
};

template <class T>
class IntentEncoder {
public:
    IntentEncoder() = default;
    IntentEncoder(ParamStore<T>& store, const std::string& name, std::size_t in_channels, const ModelSpec& spec,
                  Rng& rng)
        : trunk_(store, name, Role::min_player, in_channels, spec.encoder, rng),
          hidden_(store, name + ".dense0", Role::min_player, spec.encoder.channels, spec.encoder.channels, rng),
          out_(store, name + ".dense1", Role::min_player, spec.encoder.channels, spec.encoder.intent_dim, rng),
          dropout_(static_cast<T>(spec.dropout)) {}

    Var<T> operator()(const Var<T>& x, const Lengths& lengths, const ForwardContext& ctx) const {
        const Var<T> pooled = mean_time(trunk_(x, lengths), lengths);
        return out_(dropout(relu(hidden_(pooled)), dropout_, ctx.dropout_rng()));
    }

private:
    EncoderTrunk<T> trunk_;
    Dense<T> hidden_, out_;
    T dropout_{0};
};

/// Intent is broadcast over time and concatenated channel-wise with content.
template <class T>
class Generator {
public:
    Generator() = default;
    Generator(ParamStore<T>& store, const std::string& name, std::size_t out_channels, const ModelSpec& spec,
              Rng& rng) {
        const std::size_t ch = spec.encoder.channels;
        input_ = Conv1d<T>(store, name + ".input", Role::min_player, spec.content_dim + spec.encoder.intent_dim, ch,
                           Conv1dGeometry::same(1), rng);
        for (std::size_t i = 0; i < spec.encoder.res_blocks; ++i)
            blocks_.emplace_back(store, name + ".res" + std::to_string(i), Role::min_player, ch, ch,
                                 Conv1dGeometry::same(3), rng);
        output_ = Conv1d<T>(store, name + ".output", Role::min_player, ch, out_channels, Conv1dGeometry::same(1), rng);
    }

    Var<T> operator()(const Var<T>& content, const Var<T>& intent, const Lengths& lengths) const {
        const Var<T> joint = concat<T>({content, broadcast_time(intent, content.dim(2))});
        Var<T> h = mask_time(relu(input_(joint)), lengths);
        for (const auto& conv : blocks_) h = add(h, mask_time(relu(conv(h)), lengths));
        return mask_time(output_(h), lengths);
    }

private:
    Conv1d<T> input_;
    std::vector<Conv1d<T>> blocks_;
    Conv1d<T> output_;
};

/// Strided conv stack with leaky activations and a scalar head.
template <class T>
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(ParamStore<T>& store, const std::string& name, std::size_t in_channels, std::size_t length,
                  const ModelSpec& spec, Rng& rng) {
        std::size_t cin = in_channels;
        for (std::size_t i = 0; i < spec.disc_layers; ++i) {
            // Halve while the sequence is long enough, then keep length.
            const Conv1dGeometry geo = length >= 4 ? Conv1dGeometry{4, 2, 1, 1} : Conv1dGeometry::same(3);
            layers_.emplace_back(store, name + ".conv" + std::to_string(i), Role::max_player, cin, spec.disc_channels,
                                 geo, rng);
            length = geo.output_length(length);
            cin = spec.disc_channels;
        }
        head_ = Dense<T>(store, name + ".head", Role::max_player, cin, 1, rng);
    }

    Var<T> operator()(const Var<T>& x) const {
        Var<T> h = x;
        for (const auto& conv : layers_) h = leaky_relu(conv(h), T(0.2));
        return head_(mean_time(h));
    }

private:
    std::vector<Conv1d<T>> layers_;
    Dense<T> head_;
};

/// Fully connected fusion of the two intent vectors, then the class head.
template <class T>
class FusionClassifier {
public:
    FusionClassifier() = default;
    FusionClassifier(ParamStore<T>& store, const ModelSpec& spec, Rng& rng)
        : fuse0_(store, "fusion.dense0", Role::min_player, 2 * spec.encoder.intent_dim, spec.fusion_dim, rng),
          fuse1_(store, "fusion.dense1", Role::min_player, spec.fusion_dim, spec.fusion_dim, rng),
          head_(store, "classifier", Role::min_player, spec.fusion_dim, spec.n_classes, rng),
          dropout_(static_cast<T>(spec.dropout)),
          intent_dim_(spec.encoder.intent_dim) {}

    Var<T> operator()(const Var<T>& intent_text, const Var<T>& intent_mel, const ForwardContext& ctx) const {
        for (const Var<T>* z : {&intent_text, &intent_mel}) {
            if (z->shape().size() != 2 || z->dim(1) != intent_dim_) {
                throw std::invalid_argument("fuse_and_classify: intent must be [B x " + std::to_string(intent_dim_) +
                                            "], got " + shape_str(z->shape()));
            }
        }
        if (intent_text.dim(0) != intent_mel.dim(0)) throw std::invalid_argument("fuse_and_classify: batch mismatch");
        Var<T> h = concat<T>({intent_text, intent_mel});
        h = dropout(relu(fuse0_(h)), dropout_, ctx.dropout_rng());
        h = dropout(relu(fuse1_(h)), dropout_, ctx.dropout_rng());
        return head_(h);
    }

    const Dense<T>& head() const { return head_; }

private:
    Dense<T> fuse0_, fuse1_, head_;
    T dropout_{0};
    std::size_t intent_dim_ = 0;
};

/// Two-domain disentangling model.
template <class T>
class DrscModel {
public:
    using scalar_type = T;

    DrscModel(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
        if (spec.encoder.intent_dim == 0) throw std::invalid_argument("intent dimension must be positive");
        Rng rng(seed);
        if (spec.vocab_size > 0) {
            const T bound = T{1} / std::sqrt(static_cast<T>(spec.text_dim));
            Tensor<T> table = detail::uniform_init<T>({spec.vocab_size, spec.text_dim}, bound, rng);
            std::fill_n(table.data(), spec.text_dim, T{0});
            embedding_ = store_.add("embedding", Role::min_player, std::move(table));
        }
        content_text_ = ContentEncoder<T>(store_, "content_encoder.text", spec.text_dim, spec, rng);
        content_mel_ = ContentEncoder<T>(store_, "content_encoder.mel", spec.n_mels, spec, rng);
        intent_text_ = IntentEncoder<T>(store_, "intent_encoder.text", spec.text_dim, spec, rng);
        intent_mel_ = IntentEncoder<T>(store_, "intent_encoder.mel", spec.n_mels, spec, rng);
        gen_text_ = Generator<T>(store_, "generator.text", spec.text_dim, spec, rng);
        gen_mel_ = Generator<T>(store_, "generator.mel", spec.n_mels, spec, rng);
        disc_text_ = Discriminator<T>(store_, "discriminator.text", spec.text_dim, spec.text_length, spec, rng);
        disc_mel_ = Discriminator<T>(store_, "discriminator.mel", spec.n_mels, spec.mel_frames, spec, rng);
        fusion_ = FusionClassifier<T>(store_, spec, rng);
    }

    DrscModel(const DrscModel&) = delete;
    DrscModel& operator=(const DrscModel&) = delete;

    const ModelSpec& spec() const { return spec_; }
    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }
    bool has_embedding() const { return embedding_.defined(); }

    /// Token ids [B x L] (row-major) to the text feature [B, D_txt, L].
    Var<T> embed(const std::vector<int>& ids, std::size_t batch) const {
        if (!has_embedding()) throw std::logic_error("model was built without an embedding table");
        return embedding(ids, batch, spec_.text_length, embedding_);
    }

    ContentPosterior<T> encode_content(Domain d, const Var<T>& x, const Lengths& lengths,
                                       const ForwardContext& ctx) const {
        detail::check_feature(spec_, d, x);
        return d == Domain::text ? content_text_(x, lengths, ctx) : content_mel_(x, {}, ctx);
    }

    Var<T> encode_intent(Domain d, const Var<T>& x, const Lengths& lengths, const ForwardContext& ctx) const {
        detail::check_feature(spec_, d, x);
        return d == Domain::text ? intent_text_(x, lengths, ctx) : intent_mel_(x, {}, ctx);
    }

    LatentPair<T> encode(Domain d, const Var<T>& x, const Lengths& lengths, const ForwardContext& ctx) const {
        const Lengths& used = d == Domain::text ? lengths : no_lengths_;
        const Var<T> masked = mask_time(x, used);
        return {encode_content(d, masked, used, ctx), encode_intent(d, masked, used, ctx)};
    }

    Var<T> generate(Domain d, const Var<T>& content, const Var<T>& intent, const Lengths& lengths) const {
        return d == Domain::text ? gen_text_(content, intent, lengths) : gen_mel_(content, intent, {});
    }

    /// Realness score [B, 1]; higher is more real.
    Var<T> discriminate(Domain d, const Var<T>& x) const {
        detail::check_feature(spec_, d, x);
        return d == Domain::text ? disc_text_(x) : disc_mel_(x);
    }

    Var<T> fuse_and_classify(const Var<T>& intent_text, const Var<T>& intent_mel, const ForwardContext& ctx) const {
        return fusion_(intent_text, intent_mel, ctx);
    }

    const FusionClassifier<T>& fusion() const { return fusion_; }

    Shape content_shape(Domain d, std::size_t batch) const {
        return {batch, spec_.content_dim, spec_.length_of(d)};
    }

private:
    ModelSpec spec_;
    ParamStore<T> store_;
    Var<T> embedding_;
    ContentEncoder<T> content_text_, content_mel_;
    IntentEncoder<T> intent_text_, intent_mel_;
    Generator<T> gen_text_, gen_mel_;
    Discriminator<T> disc_text_, disc_mel_;
    FusionClassifier<T> fusion_;
    Lengths no_lengths_;
};

enum class BaselineMode { txt_only, mel_only, combined };

inline std::string to_string(BaselineMode m) {
    switch (m) {
        case BaselineMode::txt_only: return "txt_only";
        case BaselineMode::mel_only: return "mel_only";
        case BaselineMode::combined: return "combined";
    }
    return "?";
}

/// SpeechIC: per-modality conv encoder, max-pool, direct feature fusion.
template <class T>
class SpeechIcModel {
public:
    using scalar_type = T;

    SpeechIcModel(const ModelSpec& spec, BaselineMode mode, std::uint64_t seed) : spec_(spec), mode_(mode) {
        Rng rng(seed);
        const std::size_t ch = spec.baseline_channels;
        std::size_t fused = 0;
        if (uses_text()) {
            if (spec.vocab_size > 0) {
                const T bound = T{1} / std::sqrt(static_cast<T>(spec.text_dim));
                Tensor<T> table = detail::uniform_init<T>({spec.vocab_size, spec.text_dim}, bound, rng);
                std::fill_n(table.data(), spec.text_dim, T{0});
                embedding_ = store_.add("embedding", Role::min_player, std::move(table));
            }
            text_convs_ = make_stack("speechic.text", spec.text_dim, ch, rng);
            fused += ch;
        }
        if (uses_mel()) {
            mel_convs_ = make_stack("speechic.mel", spec.n_mels, ch, rng);
            fused += ch;
        }
        fuse_ = Dense<T>(store_, "speechic.fusion", Role::min_player, fused, spec.baseline_hidden, rng);
        head_ = Dense<T>(store_, "speechic.classifier", Role::min_player, spec.baseline_hidden, spec.n_classes, rng);
    }

    SpeechIcModel(const SpeechIcModel&) = delete;
    SpeechIcModel& operator=(const SpeechIcModel&) = delete;

    const ModelSpec& spec() const { return spec_; }
    BaselineMode mode() const { return mode_; }
    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }
    bool has_embedding() const { return embedding_.defined(); }
    bool uses_text() const { return mode_ != BaselineMode::mel_only; }
    bool uses_mel() const { return mode_ != BaselineMode::txt_only; }

    Var<T> embed(const std::vector<int>& ids, std::size_t batch) const {
        if (!has_embedding()) throw std::logic_error("baseline was built without an embedding table");
        return embedding(ids, batch, spec_.text_length, embedding_);
    }

    /// Logits [B, n_classes]. Inputs not used by the mode are ignored.
    Var<T> forward(const Var<T>* text, const Lengths& lengths, const Var<T>* mel, const ForwardContext& ctx) const {
        std::vector<Var<T>> pooled;
        if (uses_text()) {
            if (text == nullptr || !text->defined())
                throw std::invalid_argument("SpeechIC " + to_string(mode_) + " requires a text input");
            detail::check_feature(spec_, Domain::text, *text);
            pooled.push_back(run_stack(text_convs_, mask_time(*text, lengths), lengths));
        }
        if (uses_mel()) {
            if (mel == nullptr || !mel->defined())
                throw std::invalid_argument("SpeechIC " + to_string(mode_) + " requires a mel input");
            detail::check_feature(spec_, Domain::mel, *mel);
            pooled.push_back(run_stack(mel_convs_, *mel, {}));
        }
        Var<T> h = pooled.size() == 1 ? pooled[0] : concat(pooled);
        h = dropout(relu(fuse_(h)), static_cast<T>(spec_.dropout), ctx.dropout_rng());
        return head_(h);
    }

private:
    std::vector<Conv1d<T>> make_stack(const std::string& name, std::size_t in, std::size_t ch, Rng& rng) {
        std::vector<Conv1d<T>> convs;
        convs.emplace_back(store_, name + ".conv0", Role::min_player, in, ch, Conv1dGeometry::same(5), rng);
        convs.emplace_back(store_, name + ".conv1", Role::min_player, ch, ch, Conv1dGeometry::same(3), rng);
        convs.emplace_back(store_, name + ".conv2", Role::min_player, ch, ch, Conv1dGeometry::same(3), rng);
        return convs;
    }

    static Var<T> run_stack(const std::vector<Conv1d<T>>& convs, const Var<T>& x, const Lengths& lengths) {
        Var<T> h = x;
        for (const auto& conv : convs) h = mask_time(relu(conv(h)), lengths);
        return max_time(h, lengths);
    }

    ModelSpec spec_;
    BaselineMode mode_;
    ParamStore<T> store_;
    Var<T> embedding_;
    std::vector<Conv1d<T>> text_convs_, mel_convs_;
    Dense<T> fuse_, head_;
};

}  // namespace drsc
