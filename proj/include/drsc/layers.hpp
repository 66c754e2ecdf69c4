#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "drsc/ops.hpp"

namespace drsc {

using Rng = std::mt19937_64;

/// Side of the min-max game a parameter belongs to.
enum class Role { min_player, max_player };

template <class T>
struct NamedParameter {
    std::string name;
    Role role;
    Var<T> var;
};

/// Owns every trainable tensor of a model, in registration order.
template <class T>
class ParamStore {
public:
    Var<T> add(std::string name, Role role, Tensor<T> init) {
        for (const auto& p : params_) {
            if (p.name == name) throw std::logic_error("duplicate parameter name " + name);
        }
        Var<T> v(std::move(init), true);
        params_.push_back({std::move(name), role, v});
        return v;
    }

    const std::vector<NamedParameter<T>>& all() const noexcept { return params_; }

    std::vector<NamedParameter<T>> group(Role role) const {
        std::vector<NamedParameter<T>> out;
        for (const auto& p : params_)
            if (p.role == role) out.push_back(p);
        return out;
    }

    const NamedParameter<T>* find(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }

    NamedParameter<T>* find(const std::string& name) {
        for (auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }

    void zero_grad() {
        for (auto& p : params_) p.var.zero_grad();
    }

    std::size_t scalar_count(Role role) const {
        std::size_t n = 0;
        for (const auto& p : params_)
            if (p.role == role) n += p.var.size();
        return n;
    }

private:
    std::vector<NamedParameter<T>> params_;
};

/// FNV-1a over the raw bytes of every parameter in a role group.
template <class T>
std::uint64_t hash_group(const ParamStore<T>& store, Role role) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : store.all()) {
        if (p.role != role) continue;
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.var.value().data());
        for (std::size_t i = 0; i < p.var.size() * sizeof(T); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

namespace detail {
template <class T>
Tensor<T> uniform_init(Shape shape, T bound, Rng& rng) {
    Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
    for (auto& v : t.storage()) v = static_cast<T>(dist(rng));
    return t;
}
}  // namespace detail

template <class T>
class Dense {
public:
    Dense() = default;
    Dense(ParamStore<T>& store, const std::string& name, Role role, std::size_t in, std::size_t out, Rng& rng) {
        const T bound = T{1} / std::sqrt(static_cast<T>(in));
        weight_ = store.add(name + ".weight", role, detail::uniform_init<T>({out, in}, bound, rng));
        bias_ = store.add(name + ".bias", role, detail::uniform_init<T>({out}, bound, rng));
    }

    Var<T> operator()(const Var<T>& x) const { return linear(x, weight_, bias_); }

    std::size_t in_features() const { return weight_.dim(1); }
    std::size_t out_features() const { return weight_.dim(0); }
    const Var<T>& weight() const { return weight_; }
    const Var<T>& bias() const { return bias_; }

private:
    Var<T> weight_, bias_;
};

template <class T>
class Conv1d {
public:
    Conv1d() = default;
    Conv1d(ParamStore<T>& store, const std::string& name, Role role, std::size_t in, std::size_t out,
           Conv1dGeometry geometry, Rng& rng)
        : geometry_(geometry) {
        const T bound = T{1} / std::sqrt(static_cast<T>(in * geometry.kernel));
        weight_ = store.add(name + ".weight", role, detail::uniform_init<T>({out, in, geometry.kernel}, bound, rng));
        bias_ = store.add(name + ".bias", role, detail::uniform_init<T>({out}, bound, rng));
    }

    Var<T> operator()(const Var<T>& x) const { return conv1d(x, weight_, bias_, geometry_); }

    const Conv1dGeometry& geometry() const { return geometry_; }
    std::size_t in_channels() const { return weight_.dim(1); }
    std::size_t out_channels() const { return weight_.dim(0); }

private:
    Conv1dGeometry geometry_;
    Var<T> weight_, bias_;
};

}  // namespace drsc
