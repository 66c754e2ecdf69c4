#pragma once

// Paired two-view data with a known shared factor, used as a ground-truth
// check for disentanglement.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "drsc/tensor.hpp"

namespace drsc {

struct SyntheticSpec {
    std::size_t n_classes = 5;
    std::size_t n_per_class = 200;
    std::size_t shared_dim = 8;
    std::size_t private_dim = 8;
    double noise_scale = 0.0;
    std::uint64_t seed = 0;
    // view shapes [channels, length]
    std::size_t a_channels = 16, a_length = 8;
    std::size_t b_channels = 16, b_length = 16;
};

struct SyntheticData {
    Tensor<double> view_a;       // [N, a_channels, a_length]
    Tensor<double> view_b;       // [N, b_channels, b_length]
    std::vector<int> labels;     // class-major order
    Tensor<double> shared;       // [N, shared_dim]
    Tensor<double> private_a;    // [N, private_dim, a_length]
    Tensor<double> private_b;    // [N, private_dim, b_length]
    Tensor<double> class_codes;  // [n_classes, shared_dim]
};

/// Every time step t of a view is X[:, t] = W_X [s_c ; p_X[:, t]] + noise.
/// s_c is the class code, held constant over time. p_X is private content
/// drawn independently per domain and per step. W_X is a fixed Gaussian
/// channel map scaled by 1/sqrt(fan_in) and shared by all steps, so the
/// views are stationary along time like the real features.
inline SyntheticData make_synthetic_dataset(const SyntheticSpec& spec) {
    if (spec.n_classes == 0 || spec.n_per_class == 0 || spec.shared_dim == 0 || spec.private_dim == 0 ||
        spec.a_channels * spec.a_length == 0 || spec.b_channels * spec.b_length == 0)
        throw std::invalid_argument("synthetic dataset dimensions must be positive");
    if (spec.noise_scale < 0) throw std::invalid_argument("noise scale must be nonnegative");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> g(0.0, 1.0);

    const std::size_t n = spec.n_classes * spec.n_per_class, in = spec.shared_dim + spec.private_dim;
    auto gaussian = [&](Shape shape, double scale) {
        Tensor<double> t(std::move(shape));
        for (auto& v : t.storage()) v = scale * g(rng);
        return t;
    };
    SyntheticData d;
    d.class_codes = gaussian({spec.n_classes, spec.shared_dim}, 1.0);
    const Tensor<double> wa = gaussian({spec.a_channels, in}, 1.0 / std::sqrt(static_cast<double>(in)));
    const Tensor<double> wb = gaussian({spec.b_channels, in}, 1.0 / std::sqrt(static_cast<double>(in)));
    d.private_a = gaussian({n, spec.private_dim, spec.a_length}, 1.0);
    d.private_b = gaussian({n, spec.private_dim, spec.b_length}, 1.0);
    d.shared = Tensor<double>({n, spec.shared_dim});
    d.view_a = Tensor<double>({n, spec.a_channels, spec.a_length});
    d.view_b = Tensor<double>({n, spec.b_channels, spec.b_length});
    d.labels.resize(n);

    auto render = [&](std::size_t i, const Tensor<double>& w, const Tensor<double>& priv, Tensor<double>& view) {
        const std::size_t channels = view.dim(1), length = view.dim(2);
        for (std::size_t t = 0; t < length; ++t)
            for (std::size_t r = 0; r < channels; ++r) {
                double acc = 0.0;
                for (std::size_t k = 0; k < spec.shared_dim; ++k) acc += w.at(r, k) * d.shared.at(i, k);
                for (std::size_t k = 0; k < spec.private_dim; ++k) acc += w.at(r, spec.shared_dim + k) * priv.at(i, k, t);
                view.at(i, r, t) = acc + spec.noise_scale * g(rng);
            }
    };
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i / spec.n_per_class;
        d.labels[i] = static_cast<int>(c);
        for (std::size_t k = 0; k < spec.shared_dim; ++k) d.shared.at(i, k) = d.class_codes.at(c, k);
        render(i, wa, d.private_a, d.view_a);
        render(i, wb, d.private_b, d.view_b);
    }
    return d;
}

}  // namespace drsc
