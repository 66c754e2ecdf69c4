#pragma once

// Cross-and-restore and the full min-max objective, written against a
// networks concept so that hand-built toy networks can drive the same code
// as the trainable model.

#include <array>
#include <concepts>
#include <random>

#include "drsc/losses.hpp"
#include "drsc/model.hpp"

namespace drsc {

template <class N>
concept DisentanglingNetworks = requires(const N& n, Domain d, const Var<typename N::scalar_type>& x,
                                         const Lengths& lengths, const ForwardContext& ctx) {
    typename N::scalar_type;
    { n.encode(d, x, lengths, ctx) } -> std::same_as<LatentPair<typename N::scalar_type>>;
    { n.encode_content(d, x, lengths, ctx) } -> std::same_as<ContentPosterior<typename N::scalar_type>>;
    { n.encode_intent(d, x, lengths, ctx) } -> std::same_as<Var<typename N::scalar_type>>;
    { n.generate(d, x, x, lengths) } -> std::same_as<Var<typename N::scalar_type>>;
    { n.content_shape(d, std::size_t{}) } -> std::same_as<Shape>;
};

template <class N>
concept ClassifyingNetworks = DisentanglingNetworks<N> &&
    requires(const N& n, Domain d, const Var<typename N::scalar_type>& x, const ForwardContext& ctx) {
        { n.discriminate(d, x) } -> std::same_as<Var<typename N::scalar_type>>;
        { n.fuse_and_classify(x, x, ctx) } -> std::same_as<Var<typename N::scalar_type>>;
    };

template <class T>
struct CrossResult {
    Var<T> u;  ///< text-shaped: G_text(content of T, intent of M)
    Var<T> v;  ///< mel-shaped:  G_mel(content of M, intent of T)
    LatentPair<T> text;
    LatentPair<T> mel;
};

template <class T>
struct RestoreResult {
    Var<T> text_hat;
    Var<T> mel_hat;
    LatentPair<T> u;
    LatentPair<T> v;
};

/// First exchange: encode both domains and swap intents.
template <DisentanglingNetworks N, class T = typename N::scalar_type>
CrossResult<T> cross(const N& net, const Var<T>& text, const Var<T>& mel, const Lengths& lengths,
                     const ForwardContext& ctx) {
    CrossResult<T> r;
    r.text = net.encode(Domain::text, text, lengths, ctx);
    r.mel = net.encode(Domain::mel, mel, lengths, ctx);
    r.u = net.generate(Domain::text, r.text.content.sample, r.mel.intent, lengths);
    r.v = net.generate(Domain::mel, r.mel.content.sample, r.text.intent, lengths);
    return r;
}

/// Second exchange: content from (u, v), intents swapped back.
///   T_hat = G_text(Ec_text(u), Ei_mel(v)),  M_hat = G_mel(Ec_mel(v), Ei_text(u))
template <DisentanglingNetworks N, class T = typename N::scalar_type>
RestoreResult<T> restore(const N& net, const Var<T>& u, const Var<T>& v, const Lengths& lengths,
                         const ForwardContext& ctx) {
    RestoreResult<T> r;
    r.u = net.encode(Domain::text, u, lengths, ctx);
    r.v = net.encode(Domain::mel, v, lengths, ctx);
    r.text_hat = net.generate(Domain::text, r.u.content.sample, r.v.intent, lengths);
    r.mel_hat = net.generate(Domain::mel, r.v.content.sample, r.u.intent, lengths);
    return r;
}

namespace detail {
template <class T>
Var<T> standard_normal(const Shape& shape, Rng& rng) {
    Tensor<T> z(shape);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : z.storage()) v = static_cast<T>(normal(rng));
    return constant(std::move(z));
}
}  // namespace detail

/// Latent regression with precomputed intents:
///   d(mu_c_text(G_text(z_text, zi_text)), z_text) + d(mu_c_mel(G_mel(z_mel, zi_mel)), z_mel)
/// with z ~ N(0, 1) drawn from ctx.rng.
template <DisentanglingNetworks N, class T = typename N::scalar_type>
Var<T> latent_regression_loss(const N& net, const Var<T>& intent_text, const Var<T>& intent_mel,
                              const Lengths& lengths, Criterion criterion, const ForwardContext& ctx) {
    if (ctx.rng == nullptr) throw std::invalid_argument("latent_regression_loss needs a random source");
    const std::size_t batch = intent_text.dim(0);
    const Var<T> z_text = mask_time(detail::standard_normal<T>(net.content_shape(Domain::text, batch), *ctx.rng), lengths);
    const Var<T> z_mel = detail::standard_normal<T>(net.content_shape(Domain::mel, batch), *ctx.rng);
    const Var<T> back_text =
        net.encode_content(Domain::text, net.generate(Domain::text, z_text, intent_text, lengths), lengths, ctx).mu;
    const Var<T> back_mel = net.encode_content(Domain::mel, net.generate(Domain::mel, z_mel, intent_mel, {}), {}, ctx).mu;
    return add(distance(back_text, z_text, criterion), distance(back_mel, z_mel, criterion));
}

/// Same, encoding the intents from (T, M) first.
template <DisentanglingNetworks N, class T = typename N::scalar_type>
Var<T> latent_regression_from_features(const N& net, const Var<T>& text, const Var<T>& mel, const Lengths& lengths,
                                       Criterion criterion, const ForwardContext& ctx) {
    return latent_regression_loss(net, net.encode_intent(Domain::text, mask_time(text, lengths), lengths, ctx),
                                  net.encode_intent(Domain::mel, mel, {}, ctx), lengths, criterion, ctx);
}

/// lambda_1 cycle, lambda_2 distribution, lambda_3 classification, then the
/// optional group (KL, latent regression, adversarial). `optional_terms`
/// switches the whole group off at once.
struct LossWeights {
    double cycle = 1.0;
    double distribution = 1.0;
    double classification = 1.0;
    double kl = 1.0;
    double latent_regression = 1.0;
    double adversarial = 1.0;
    bool optional_terms = true;

    double effective_kl() const { return optional_terms ? kl : 0.0; }
    double effective_latent_regression() const { return optional_terms ? latent_regression : 0.0; }
    double effective_adversarial() const { return optional_terms ? adversarial : 0.0; }

    static LossWeights ablated() {
        LossWeights w;
        w.kl = w.latent_regression = w.adversarial = 0.0;
        return w;
    }

    bool operator==(const LossWeights&) const = default;
};

enum class Term { cycle, distribution, classification, kl, latent_regression, adversarial_generator, adversarial_discriminator };
inline constexpr std::array<Term, 7> all_terms{Term::cycle, Term::distribution, Term::classification, Term::kl,
                                               Term::latent_regression, Term::adversarial_generator,
                                               Term::adversarial_discriminator};

inline const char* term_key(Term t) {
    switch (t) {
        case Term::cycle: return "L_cc";
        case Term::distribution: return "L_distri";
        case Term::classification: return "L_CE";
        case Term::kl: return "L_KL";
        case Term::latent_regression: return "L_lr";
        case Term::adversarial_generator: return "L_adv_g";
        case Term::adversarial_discriminator: return "L_adv_d";
    }
    return "?";
}

/// Raw term values with the weights they entered the objective with.
struct LossBreakdown {
    std::array<double, 7> value{};
    std::array<double, 7> weight{};
    double min_total = 0.0;
    double max_total = 0.0;

    double raw(Term t) const { return value[static_cast<std::size_t>(t)]; }
    double contribution(Term t) const { return weight[static_cast<std::size_t>(t)] * raw(t); }

    double weighted_min_sum() const {
        double s = 0.0;
        for (Term t : all_terms)
            if (t != Term::adversarial_discriminator) s += contribution(t);
        return s;
    }
};

template <class T>
struct Objective {
    Var<T> min_loss;
    Var<T> max_loss;
    LossBreakdown terms;
    Var<T> logits;  ///< classifier output on the reconstructed pair, when computed
};

/// One evaluation of the whole min-max objective on a batch. Text arrives as
/// the (possibly embedded) feature [B, D_txt, L]; terms with weight 0 are
/// skipped. The discriminator-side loss sees detached reconstructions.
template <ClassifyingNetworks N, class T = typename N::scalar_type>
Objective<T> total_objective(const N& net, const Var<T>& text, const Var<T>& mel, const Lengths& lengths,
                             const std::vector<int>& labels, const LossWeights& weights, Criterion criterion,
                             const ForwardContext& ctx) {
    const Var<T> text_in = mask_time(text, lengths);
    const CrossResult<T> crossed = cross(net, text_in, mel, lengths, ctx);
    const RestoreResult<T> restored = restore(net, crossed.u, crossed.v, lengths, ctx);

    Objective<T> obj;
    LossBreakdown& b = obj.terms;
    std::array<Var<T>, 7> vars;
    auto set = [&](Term t, double w, Var<T> v) {
        const auto i = static_cast<std::size_t>(t);
        b.weight[i] = w;
        b.value[i] = static_cast<double>(v.item());
        vars[i] = std::move(v);
    };

    if (weights.cycle != 0.0)
        set(Term::cycle, weights.cycle, cycle_consist_loss(text_in, mel, restored.text_hat, restored.mel_hat, criterion));

    if (weights.distribution != 0.0 || weights.classification != 0.0) {
        const Var<T> zi_text = net.encode_intent(Domain::text, restored.text_hat, lengths, ctx);
        const Var<T> zi_mel = net.encode_intent(Domain::mel, restored.mel_hat, {}, ctx);
        if (weights.distribution != 0.0)
            set(Term::distribution, weights.distribution, distribution_loss(zi_text, zi_mel, criterion));
        if (weights.classification != 0.0) {
            obj.logits = net.fuse_and_classify(zi_text, zi_mel, ctx);
            set(Term::classification, weights.classification, classification_loss(obj.logits, labels));
        }
    }

    if (weights.effective_kl() != 0.0) {
        set(Term::kl, weights.effective_kl(),
            add(kl_loss(crossed.text.content.mu, crossed.text.content.logvar),
                kl_loss(crossed.mel.content.mu, crossed.mel.content.logvar)));
    }

    if (weights.effective_latent_regression() != 0.0) {
        set(Term::latent_regression, weights.effective_latent_regression(),
            latent_regression_loss(net, crossed.text.intent, crossed.mel.intent, lengths, criterion, ctx));
    }

    if (weights.effective_adversarial() != 0.0) {
        auto disc_text = [&](const Var<T>& x) { return net.discriminate(Domain::text, x); };
        auto disc_mel = [&](const Var<T>& x) { return net.discriminate(Domain::mel, x); };
        set(Term::adversarial_generator, weights.effective_adversarial(),
            add(adversarial_loss(text_in, restored.text_hat, disc_text, AdversarialSide::generator_step),
                adversarial_loss(mel, restored.mel_hat, disc_mel, AdversarialSide::generator_step)));
        set(Term::adversarial_discriminator, weights.effective_adversarial(),
            add(adversarial_loss(text_in, restored.text_hat, disc_text, AdversarialSide::discriminator_step),
                adversarial_loss(mel, restored.mel_hat, disc_mel, AdversarialSide::discriminator_step)));
    }

    std::vector<std::pair<T, Var<T>>> min_terms;
    for (Term t : all_terms) {
        if (t == Term::adversarial_discriminator) continue;
        const auto i = static_cast<std::size_t>(t);
        if (vars[i].defined()) min_terms.emplace_back(static_cast<T>(b.weight[i]), vars[i]);
    }
    obj.min_loss = weighted_sum(min_terms);
    const auto d = static_cast<std::size_t>(Term::adversarial_discriminator);
    obj.max_loss = weighted_sum<T>({{static_cast<T>(b.weight[d]), vars[d]}});
    b.min_total = static_cast<double>(obj.min_loss.item());
    b.max_total = static_cast<double>(obj.max_loss.item());
    return obj;
}

/// Discriminator-only loss on reconstructions computed without a graph.
template <ClassifyingNetworks N, class T = typename N::scalar_type>
Var<T> discriminator_objective(const N& net, const Var<T>& text, const Var<T>& mel, const Lengths& lengths,
                               const ForwardContext& ctx) {
    Var<T> text_hat, mel_hat;
    const Var<T> text_in = detach(mask_time(text, lengths));
    {
        NoGradGuard guard;
        const CrossResult<T> crossed = cross(net, text_in, mel, lengths, ctx);
        const RestoreResult<T> restored = restore(net, crossed.u, crossed.v, lengths, ctx);
        text_hat = restored.text_hat;
        mel_hat = restored.mel_hat;
    }
    auto disc_text = [&](const Var<T>& x) { return net.discriminate(Domain::text, x); };
    auto disc_mel = [&](const Var<T>& x) { return net.discriminate(Domain::mel, x); };
    return add(adversarial_loss(text_in, text_hat, disc_text, AdversarialSide::discriminator_step),
               adversarial_loss(mel, mel_hat, disc_mel, AdversarialSide::discriminator_step));
}

/// Row-wise argmax; ties resolve to the lowest class id.
template <class T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
    const std::size_t batch = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
            if (logits.at(b, c) > logits.at(b, best)) best = c;
        out[b] = static_cast<int>(best);
    }
    return out;
}

/// Inference path: fuse the intents of (T, M) and classify.
template <ClassifyingNetworks N, class T = typename N::scalar_type>
Var<T> inference_logits(const N& net, const Var<T>& text, const Var<T>& mel, const Lengths& lengths,
                        const ForwardContext& ctx) {
    const Var<T> text_in = mask_time(text, lengths);
    return net.fuse_and_classify(net.encode_intent(Domain::text, text_in, lengths, ctx),
                                 net.encode_intent(Domain::mel, mel, {}, ctx), ctx);
}

template <ClassifyingNetworks N, class T = typename N::scalar_type>
std::vector<int> predict(const N& net, const Var<T>& text, const Var<T>& mel, const Lengths& lengths) {
    NoGradGuard guard;
    const ForwardContext eval_ctx{};
    return argmax_rows(inference_logits(net, text, mel, lengths, eval_ctx).value());
}

/// Logits for (T_a, M_a) whose intents are replaced by those of a donor
/// pair (T_b, M_b) through one cross step:
///   u = G_text(c(T_a), i(M_b)), v = G_mel(c(M_a), i(T_b)), classify (u, v).
template <ClassifyingNetworks N, class T = typename N::scalar_type>
Var<T> transferred_intent_logits(const N& net, const Var<T>& text_a, const Var<T>& mel_a, const Lengths& lengths_a,
                                 const Var<T>& text_b, const Var<T>& mel_b, const Lengths& lengths_b,
                                 const ForwardContext& ctx) {
    const LatentPair<T> ta = net.encode(Domain::text, text_a, lengths_a, ctx);
    const LatentPair<T> ma = net.encode(Domain::mel, mel_a, {}, ctx);
    const Var<T> zi_text_b = net.encode_intent(Domain::text, mask_time(text_b, lengths_b), lengths_b, ctx);
    const Var<T> zi_mel_b = net.encode_intent(Domain::mel, mel_b, {}, ctx);
    const Var<T> u = net.generate(Domain::text, ta.content.sample, zi_mel_b, lengths_a);
    const Var<T> v = net.generate(Domain::mel, ma.content.sample, zi_text_b, {});
    return inference_logits(net, u, v, lengths_a, ctx);
}

}  // namespace drsc
