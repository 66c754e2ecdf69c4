#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "drsc/layers.hpp"

namespace drsc {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam over a fixed list of parameters; one (m, v) pair per parameter.
template <class T>
class Adam {
public:
    Adam() = default;
    Adam(std::vector<NamedParameter<T>> params, AdamConfig config) : params_(std::move(params)), config_(config) {
        if (!(config_.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
        for (const auto& p : params_) {
            m_.emplace_back(p.var.shape());
            v_.emplace_back(p.var.shape());
        }
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
        const T lr = static_cast<T>(config_.lr), eps = static_cast<T>(config_.eps);
        const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Var<T>& p = params_[i].var;
            const auto& node = p.node();
            if (!node->has_grad()) continue;
            const T* g = node->grad.data();
            T* w = p.mutable_value().data();
            T* m = m_[i].data();
            T* v = v_[i].data();
            for (std::size_t k = 0; k < p.size(); ++k) {
                m[k] = b1 * m[k] + (T{1} - b1) * g[k];
                v[k] = b2 * v[k] + (T{1} - b2) * g[k] * g[k];
                w[k] -= lr * (m[k] * inv_c1) / (std::sqrt(v[k] * inv_c2) + eps);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.var.zero_grad();
    }

    /// Rescales gradients so their global L2 norm is at most max_norm;
    /// returns the norm before clipping. max_norm <= 0 only measures.
    double clip_grad_norm(double max_norm) {
        double sq = 0.0;
        for (const auto& p : params_) {
            if (!p.var.node()->has_grad()) continue;
            for (T g : p.var.node()->grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
        }
        const double norm = std::sqrt(sq);
        if (max_norm > 0.0 && norm > max_norm) {
            const T factor = static_cast<T>(max_norm / (norm + 1e-12));
            for (auto& p : params_) {
                if (!p.var.node()->has_grad()) continue;
                for (T& g : p.var.node()->grad.storage()) g *= factor;
            }
        }
        return norm;
    }

    std::uint64_t steps() const { return t_; }
    const AdamConfig& config() const { return config_; }
    const std::vector<NamedParameter<T>>& params() const { return params_; }

    /// Number of first-moment entries; equals the trainable scalar count.
    std::size_t state_size() const {
        std::size_t n = 0;
        for (const auto& m : m_) n += m.size();
        return n;
    }

    const Tensor<T>& first_moment(std::size_t i) const { return m_.at(i); }
    const Tensor<T>& second_moment(std::size_t i) const { return v_.at(i); }

    void restore(std::uint64_t steps, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v) {
        if (m.size() != params_.size() || v.size() != params_.size())
            throw std::invalid_argument("optimizer state does not match parameter count");
        for (std::size_t i = 0; i < params_.size(); ++i) {
            require_shape(m[i].shape(), params_[i].var.shape(), "adam first moment");
            require_shape(v[i].shape(), params_[i].var.shape(), "adam second moment");
        }
        t_ = steps;
        m_ = std::move(m);
        v_ = std::move(v);
    }

private:
    std::vector<NamedParameter<T>> params_;
    AdamConfig config_;
    std::vector<Tensor<T>> m_, v_;
    std::uint64_t t_ = 0;
};

}  // namespace drsc
