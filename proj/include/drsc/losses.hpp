#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "drsc/ops.hpp"

namespace drsc {

/// Distance used by the cycle, distribution and latent-regression terms.
enum class Criterion { l1, l2, cosine };

inline std::string to_string(Criterion c) {
    switch (c) {
        case Criterion::l1: return "L1";
        case Criterion::l2: return "L2";
        case Criterion::cosine: return "cosine";
    }
    return "?";
}

inline Criterion parse_criterion(const std::string& s) {
    if (s == "L1" || s == "l1") return Criterion::l1;
    if (s == "L2" || s == "l2") return Criterion::l2;
    if (s == "cosine" || s == "cos") return Criterion::cosine;
    throw std::invalid_argument("unknown distance criterion '" + s + "' (expected L1, L2 or cosine)");
}

namespace detail {
inline std::size_t batch_of(const Shape& s) { return s.size() >= 2 ? s[0] : 1; }

template <class T>
T softplus(T x) {
    return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
}

template <class T>
T sigmoid(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}
}  // namespace detail

/// Per-sample distance averaged over the batch (axis 0; rank-1 inputs are a
/// single sample).
///   L1:     mean |a-b|
///   L2:     sqrt(mean (a-b)^2)
///   cosine: 1 - <a,b>/(|a||b|), 0 when either norm < 1e-12
template <class T>
Var<T> distance(const Var<T>& a, const Var<T>& b, Criterion criterion) {
    require_shape(b.shape(), a.shape(), "distance");
    const std::size_t batch = detail::batch_of(a.shape());
    const std::size_t n = a.size() / batch;
    const T* pa = a.value().data();
    const T* pb = b.value().data();
    // Per-sample coefficients reused by the backward pass.
    std::vector<T> c1(batch, T{0}), c2(batch, T{0}), c3(batch, T{0});
    T total{0};
    for (std::size_t s = 0; s < batch; ++s) {
        const T* x = pa + s * n;
        const T* y = pb + s * n;
        switch (criterion) {
            case Criterion::l1: {
                T acc{0};
                for (std::size_t i = 0; i < n; ++i) acc += std::abs(x[i] - y[i]);
                total += acc / static_cast<T>(n);
                break;
            }
            case Criterion::l2: {
                T acc{0};
                for (std::size_t i = 0; i < n; ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
                const T d = std::sqrt(acc / static_cast<T>(n));
                total += d;
                c1[s] = d > T{0} ? T{1} / (static_cast<T>(n) * d) : T{0};
                break;
            }
            case Criterion::cosine: {
                T dot{0}, na{0}, nb{0};
                for (std::size_t i = 0; i < n; ++i) {
                    dot += x[i] * y[i];
                    na += x[i] * x[i];
                    nb += y[i] * y[i];
                }
                na = std::sqrt(na);
                nb = std::sqrt(nb);
                if (na < T(1e-12) || nb < T(1e-12)) break;
                total += T{1} - dot / (na * nb);
                c1[s] = T{1} / (na * nb);
                c2[s] = dot / (na * na * na * nb);
                c3[s] = dot / (na * nb * nb * nb);
                break;
            }
        }
    }
    const T inv_batch = T{1} / static_cast<T>(batch);
    return make_result<T>(
        Tensor<T>::scalar(total * inv_batch), {a, b},
        [av = a.value(), bv = b.value(), criterion, batch, n, inv_batch, c1, c2, c3](Node<T>& node) {
            const T go = node.grad[0] * inv_batch;
            Tensor<T>* ga = detail::wants_grad(node, 0) ? &detail::parent_grad(node, 0) : nullptr;
            Tensor<T>* gb = detail::wants_grad(node, 1) ? &detail::parent_grad(node, 1) : nullptr;
            for (std::size_t s = 0; s < batch; ++s) {
                for (std::size_t i = s * n; i < (s + 1) * n; ++i) {
                    const T diff = av[i] - bv[i];
                    T da{0}, db{0};
                    switch (criterion) {
                        case Criterion::l1: {
                            const T sign = diff > T{0} ? T{1} : (diff < T{0} ? T{-1} : T{0});
                            da = sign / static_cast<T>(n);
                            db = -da;
                            break;
                        }
                        case Criterion::l2:
                            da = diff * c1[s];
                            db = -da;
                            break;
                        case Criterion::cosine:
                            da = -(bv[i] * c1[s] - av[i] * c2[s]);
                            db = -(av[i] * c1[s] - bv[i] * c3[s]);
                            break;
                    }
                    if (ga) (*ga)[i] += go * da;
                    if (gb) (*gb)[i] += go * db;
                }
            }
        });
}

/// Mean over the batch of -log softmax(logits)[label].
template <class T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
    detail::check_rank(logits.shape(), 2, "cross_entropy");
    const std::size_t batch = logits.dim(0), k = logits.dim(1);
    if (labels.size() != batch) throw std::invalid_argument("cross_entropy: label count does not match batch");
    Tensor<T> probs(logits.shape());
    T total{0};
    for (std::size_t b = 0; b < batch; ++b) {
        const int y = labels[b];
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                                    std::to_string(k) + ")");
        }
        const T* row = &logits.value().at(b, 0);
        const T mx = *std::max_element(row, row + k);
        T z{0};
        for (std::size_t c = 0; c < k; ++c) z += std::exp(row[c] - mx);
        const T lse = mx + std::log(z);
        for (std::size_t c = 0; c < k; ++c) probs.at(b, c) = std::exp(row[c] - lse);
        total += lse - row[y];
    }
    const T inv = T{1} / static_cast<T>(batch);
    return make_result<T>(Tensor<T>::scalar(total * inv), {logits}, [probs, labels, batch, k, inv](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        const T go = n.grad[0] * inv;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < k; ++c)
                g.at(b, c) += go * (probs.at(b, c) - (static_cast<int>(c) == labels[b] ? T{1} : T{0}));
    });
}

/// KL(N(mu, exp(logvar)) || N(0, 1)), element mean of
/// 0.5 (mu^2 + sigma^2 - log sigma^2 - 1).
template <class T>
Var<T> kl_standard_normal(const Var<T>& mu, const Var<T>& logvar) {
    require_shape(logvar.shape(), mu.shape(), "kl_standard_normal");
    const std::size_t n = mu.size();
    T total{0};
    for (std::size_t i = 0; i < n; ++i) {
        const T m = mu.value()[i], lv = logvar.value()[i];
        total += T(0.5) * (m * m + std::exp(lv) - lv - T{1});
    }
    const T inv = T{1} / static_cast<T>(n);
    return make_result<T>(Tensor<T>::scalar(total * inv), {mu, logvar},
                          [mv = mu.value(), lvv = logvar.value(), inv](Node<T>& node) {
                              const T go = node.grad[0] * inv;
                              if (detail::wants_grad(node, 0)) {
                                  auto& g = detail::parent_grad(node, 0);
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * mv[i];
                              }
                              if (detail::wants_grad(node, 1)) {
                                  auto& g = detail::parent_grad(node, 1);
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                      g[i] += go * T(0.5) * (std::exp(lvv[i]) - T{1});
                              }
                          });
}

/// Element mean of softplus(sign * x); with sign = -1 this is -log sigmoid(x).
template <class T>
Var<T> mean_softplus(const Var<T>& x, T sign) {
    const std::size_t n = x.size();
    T total{0};
    for (T v : x.value().values()) total += detail::softplus(sign * v);
    const T inv = T{1} / static_cast<T>(n);
    return make_result<T>(Tensor<T>::scalar(total * inv), {x}, [xv = x.value(), sign, inv](Node<T>& node) {
        auto& g = detail::parent_grad(node, 0);
        const T go = node.grad[0] * inv;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * sign * detail::sigmoid(sign * xv[i]);
    });
}

// ---------------------------------------------------------------------------
// Objective terms

template <class T>
Var<T> cycle_consist_loss(const Var<T>& text, const Var<T>& mel, const Var<T>& text_hat, const Var<T>& mel_hat,
                          Criterion criterion) {
    return add(distance(text_hat, text, criterion), distance(mel_hat, mel, criterion));
}

template <class T>
Var<T> distribution_loss(const Var<T>& intent_text_hat, const Var<T>& intent_mel_hat, Criterion criterion) {
    if (intent_text_hat.shape() != intent_mel_hat.shape()) {
        throw std::invalid_argument("distribution_loss: intent lengths differ " + shape_str(intent_text_hat.shape()) +
                                    " vs " + shape_str(intent_mel_hat.shape()));
    }
    return distance(intent_text_hat, intent_mel_hat, criterion);
}

template <class T>
Var<T> classification_loss(const Var<T>& logits, const std::vector<int>& labels) {
    return cross_entropy(logits, labels);
}

template <class T>
Var<T> kl_loss(const Var<T>& mu, const Var<T>& logvar) {
    return kl_standard_normal(mu, logvar);
}

enum class AdversarialSide { generator_step, discriminator_step };

/// Non-saturating logistic GAN loss.
///   discriminator_step: -[log s(D(real)) + log(1 - s(D(fake)))], fake detached
///   generator_step:     -log s(D(fake))
template <class T, class Discriminator>
Var<T> adversarial_loss(const Var<T>& real, const Var<T>& fake, Discriminator&& discriminate, AdversarialSide side) {
    if (side == AdversarialSide::generator_step) return mean_softplus(discriminate(fake), T{-1});
    const Var<T> real_score = discriminate(detach(real));
    const Var<T> fake_score = discriminate(detach(fake));
    return add(mean_softplus(real_score, T{-1}), mean_softplus(fake_score, T{1}));
}

}  // namespace drsc
