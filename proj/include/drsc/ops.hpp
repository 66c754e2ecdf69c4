#pragma once

// Differentiable tensor ops. Sequence tensors are channels-first [B, C, L];
// feature tensors are [B, F]. Axis-1 ops (concat, slice) work on both.

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "drsc/autograd.hpp"

namespace drsc {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Valid lengths per batch row for masked sequence ops; empty = unmasked.
using Lengths = std::vector<std::size_t>;

namespace detail {

template <class T>
bool wants_grad(const Node<T>& n, std::size_t parent) {
    return n.parents[parent]->requires_grad;
}

template <class T>
Tensor<T>& parent_grad(Node<T>& n, std::size_t parent) {
    return n.parents[parent]->grad_ref();
}

inline void check_rank(const Shape& s, std::size_t rank, const char* op) {
    if (s.size() != rank) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                    shape_str(s));
    }
}

}  // namespace detail

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_shape(b.shape(), a.shape(), "add");
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
    return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (!detail::wants_grad(n, p)) continue;
            auto& g = detail::parent_grad(n, p);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    require_shape(b.shape(), a.shape(), "sub");
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
    return make_result<T>(std::move(out), {a, b}, [](Node<T>& n) {
        if (detail::wants_grad(n, 0)) {
            auto& g = detail::parent_grad(n, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (detail::wants_grad(n, 1)) {
            auto& g = detail::parent_grad(n, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require_shape(b.shape(), a.shape(), "mul");
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
    return make_result<T>(std::move(out), {a, b}, [a_val = a.value(), b_val = b.value()](Node<T>& n) {
        if (detail::wants_grad(n, 0)) {
            auto& g = detail::parent_grad(n, 0);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * b_val[i];
        }
        if (detail::wants_grad(n, 1)) {
            auto& g = detail::parent_grad(n, 1);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * a_val[i];
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& x, T s) {
    Tensor<T> out = x.value();
    for (auto& v : out.storage()) v *= s;
    return make_result<T>(std::move(out), {x}, [s](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
    });
}

template <class T>
Var<T> relu(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.storage()) v = v > T{0} ? v : T{0};
    return make_result<T>(std::move(out), {x}, [xv = x.value()](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] > T{0}) g[i] += n.grad[i];
    });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    Tensor<T> out = x.value();
    for (auto& v : out.storage()) v = v > T{0} ? v : slope * v;
    return make_result<T>(std::move(out), {x}, [xv = x.value(), slope](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += (xv[i] > T{0} ? T{1} : slope) * n.grad[i];
    });
}

template <class T>
Var<T> exp(const Var<T>& x) {
    Tensor<T> out = x.value();
    for (auto& v : out.storage()) v = std::exp(v);
    Tensor<T> saved = out;
    return make_result<T>(std::move(out), {x}, [saved = std::move(saved)](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += saved[i] * n.grad[i];
    });
}

template <class T>
Var<T> sum_all(const Var<T>& x) {
    T s{0};
    for (T v : x.value().values()) s += v;
    return make_result<T>(Tensor<T>::scalar(s), {x}, [](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        const T go = n.grad[0];
        for (auto& v : g.storage()) v += go;
    });
}

template <class T>
Var<T> mean_all(const Var<T>& x) {
    return scale(sum_all(x), T{1} / static_cast<T>(x.size()));
}

/// Weighted sum of scalars; zero weights are skipped entirely.
template <class T>
Var<T> weighted_sum(const std::vector<std::pair<T, Var<T>>>& terms) {
    T total{0};
    std::vector<Var<T>> parents;
    std::vector<T> weights;
    for (const auto& [w, v] : terms) {
        if (w == T{0} || !v.defined()) continue;
        total += w * v.item();
        parents.push_back(v);
        weights.push_back(w);
    }
    return make_result<T>(Tensor<T>::scalar(total), parents, [weights](Node<T>& n) {
        for (std::size_t p = 0; p < weights.size(); ++p) {
            if (detail::wants_grad(n, p)) detail::parent_grad(n, p)[0] += weights[p] * n.grad[0];
        }
    });
}

/// Concatenate along axis 1. All inputs share axis 0 and trailing dims.
template <class T>
Var<T> concat(const std::vector<Var<T>>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& s0 = xs[0].shape();
    const std::size_t batch = s0.at(0);
    std::size_t inner = 1;
    for (std::size_t d = 2; d < s0.size(); ++d) inner *= s0[d];
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        if (s.size() != s0.size() || s[0] != batch || (s.size() > 2 && !std::equal(s.begin() + 2, s.end(), s0.begin() + 2))) {
            throw std::invalid_argument("concat: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
        }
        widths.push_back(s[1] * inner);
        total += s[1];
    }
    Shape out_shape = s0;
    out_shape[1] = total;
    Tensor<T> out(out_shape);
    const std::size_t row = total * inner;
    std::size_t offset = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const T* src = xs[k].value().data();
        for (std::size_t b = 0; b < batch; ++b)
            std::copy(src + b * widths[k], src + (b + 1) * widths[k], out.data() + b * row + offset);
        offset += widths[k];
    }
    return make_result<T>(std::move(out), xs, [widths, batch, row](Node<T>& n) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            if (detail::wants_grad(n, k)) {
                auto& g = detail::parent_grad(n, k);
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t i = 0; i < widths[k]; ++i) g[b * widths[k] + i] += n.grad[b * row + off + i];
            }
            off += widths[k];
        }
    });
}

/// Channels [begin, begin+count) along axis 1.
template <class T>
Var<T> slice(const Var<T>& x, std::size_t begin, std::size_t count) {
    const Shape& s = x.shape();
    if (s.size() < 2 || begin + count > s[1]) {
        throw std::invalid_argument("slice: range out of bounds for " + shape_str(s));
    }
    std::size_t inner = 1;
    for (std::size_t d = 2; d < s.size(); ++d) inner *= s[d];
    Shape out_shape = s;
    out_shape[1] = count;
    Tensor<T> out(out_shape);
    const std::size_t batch = s[0], row = s[1] * inner, width = count * inner, off = begin * inner;
    for (std::size_t b = 0; b < batch; ++b)
        std::copy(x.value().data() + b * row + off, x.value().data() + b * row + off + width, out.data() + b * width);
    return make_result<T>(std::move(out), {x}, [batch, row, width, off](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < width; ++i) g[b * row + off + i] += n.grad[b * width + i];
    });
}

/// [B, D] -> [B, D, L] by repeating along time.
template <class T>
Var<T> broadcast_time(const Var<T>& z, std::size_t length) {
    detail::check_rank(z.shape(), 2, "broadcast_time");
    const std::size_t batch = z.dim(0), d = z.dim(1);
    Tensor<T> out(Shape{batch, d, length});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < d; ++c) std::fill_n(&out.at(b, c, 0), length, z.value().at(b, c));
    return make_result<T>(std::move(out), {z}, [batch, d, length](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < d; ++c) {
                T s{0};
                const T* src = &n.grad.at(b, c, 0);
                for (std::size_t t = 0; t < length; ++t) s += src[t];
                g.at(b, c) += s;
            }
    });
}

namespace detail {
inline std::size_t valid_length(const Lengths& lengths, std::size_t b, std::size_t full) {
    if (lengths.empty()) return full;
    return std::min(lengths.at(b), full);
}
}  // namespace detail

/// Zeroes time steps at or beyond each row's length.
template <class T>
Var<T> mask_time(const Var<T>& x, const Lengths& lengths) {
    if (lengths.empty()) return x;
    detail::check_rank(x.shape(), 3, "mask_time");
    const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    if (lengths.size() != batch) throw std::invalid_argument("mask_time: lengths size does not match batch");
    Tensor<T> out = x.value();
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t valid = detail::valid_length(lengths, b, len);
        for (std::size_t c = 0; c < ch; ++c) std::fill(&out.at(b, c, 0) + valid, &out.at(b, c, 0) + len, T{0});
    }
    return make_result<T>(std::move(out), {x}, [lengths, batch, ch, len](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t valid = detail::valid_length(lengths, b, len);
            for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t t = 0; t < valid; ++t) g.at(b, c, t) += n.grad.at(b, c, t);
        }
    });
}

/// Masked mean over time: [B, C, L] -> [B, C].
template <class T>
Var<T> mean_time(const Var<T>& x, const Lengths& lengths = {}) {
    detail::check_rank(x.shape(), 3, "mean_time");
    const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    Tensor<T> out(Shape{batch, ch});
    std::vector<T> inv(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t valid = std::max<std::size_t>(1, detail::valid_length(lengths, b, len));
        inv[b] = T{1} / static_cast<T>(valid);
        for (std::size_t c = 0; c < ch; ++c) {
            T s{0};
            const T* src = &x.value().at(b, c, 0);
            for (std::size_t t = 0; t < std::min(valid, len); ++t) s += src[t];
            out.at(b, c) = s * inv[b];
        }
    }
    return make_result<T>(std::move(out), {x}, [lengths, inv, batch, ch, len](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t valid = std::min(len, std::max<std::size_t>(1, detail::valid_length(lengths, b, len)));
            for (std::size_t c = 0; c < ch; ++c) {
                const T go = n.grad.at(b, c) * inv[b];
                for (std::size_t t = 0; t < valid; ++t) g.at(b, c, t) += go;
            }
        }
    });
}

/// Global max over time: [B, C, L] -> [B, C]. Ties pick the earliest step.
template <class T>
Var<T> max_time(const Var<T>& x, const Lengths& lengths = {}) {
    detail::check_rank(x.shape(), 3, "max_time");
    const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    Tensor<T> out(Shape{batch, ch});
    std::vector<std::size_t> arg(batch * ch);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t valid = std::max<std::size_t>(1, detail::valid_length(lengths, b, len));
        for (std::size_t c = 0; c < ch; ++c) {
            const T* src = &x.value().at(b, c, 0);
            std::size_t best = 0;
            for (std::size_t t = 1; t < valid; ++t)
                if (src[t] > src[best]) best = t;
            arg[b * ch + c] = best;
            out.at(b, c) = src[best];
        }
    }
    return make_result<T>(std::move(out), {x}, [arg, batch, ch](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c) g.at(b, c, arg[b * ch + c]) += n.grad.at(b, c);
    });
}

/// y = x W^T + b with x [B, in], W [out, in], b [out].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
    detail::check_rank(x.shape(), 2, "linear");
    const std::size_t batch = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
    if (w.dim(1) != in) {
        throw std::invalid_argument("linear: input width " + std::to_string(in) + " does not match weight " +
                                    shape_str(w.shape()));
    }
    Tensor<T> out(Shape{batch, out_dim});
    ConstMatrixMap<T> xm(x.value().data(), batch, in);
    ConstMatrixMap<T> wm(w.value().data(), out_dim, in);
    MatrixMap<T> om(out.data(), batch, out_dim);
    om.noalias() = xm * wm.transpose();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out_dim; ++o) om(b, o) += bias.value()[o];
    return make_result<T>(std::move(out), {x, w, bias}, [xv = x.value(), wv = w.value(), batch, in, out_dim](Node<T>& n) {
        ConstMatrixMap<T> gm(n.grad.data(), batch, out_dim);
        if (detail::wants_grad(n, 0)) {
            MatrixMap<T> gx(detail::parent_grad(n, 0).data(), batch, in);
            gx.noalias() += gm * ConstMatrixMap<T>(wv.data(), out_dim, in);
        }
        if (detail::wants_grad(n, 1)) {
            MatrixMap<T> gw(detail::parent_grad(n, 1).data(), out_dim, in);
            gw.noalias() += gm.transpose() * ConstMatrixMap<T>(xv.data(), batch, in);
        }
        if (detail::wants_grad(n, 2)) {
            auto& gb = detail::parent_grad(n, 2);
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t o = 0; o < out_dim; ++o) gb[o] += gm(b, o);
        }
    });
}

struct Conv1dGeometry {
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t pad_left = 0;
    std::size_t pad_right = 0;

    /// Output length stays equal to input length for stride 1.
    static Conv1dGeometry same(std::size_t kernel) {
        return {kernel, 1, (kernel - 1) / 2, kernel - 1 - (kernel - 1) / 2};
    }

    std::size_t output_length(std::size_t length) const {
        const std::size_t padded = length + pad_left + pad_right;
        if (padded < kernel) return 0;
        return (padded - kernel) / stride + 1;
    }
};

/// 1-D convolution (cross-correlation) via im2col and one GEMM per call.
/// x [B, Cin, L], w [Cout, Cin, K], bias [Cout].
template <class T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const Conv1dGeometry& geo) {
    detail::check_rank(x.shape(), 3, "conv1d");
    const std::size_t batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
    const std::size_t cout = w.dim(0), k = geo.kernel;
    if (w.dim(1) != cin || w.dim(2) != k) {
        throw std::invalid_argument("conv1d: input " + shape_str(x.shape()) + " incompatible with weight " +
                                    shape_str(w.shape()));
    }
    const std::size_t lout = geo.output_length(len);
    if (lout == 0) throw std::invalid_argument("conv1d: input length " + std::to_string(len) + " too short");

    const std::size_t rows = cin * k, cols_n = batch * lout;
    auto cols = std::make_shared<RowMatrix<T>>(RowMatrix<T>::Zero(rows, cols_n));
    const T* xv = x.value().data();
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < cin; ++c) {
            const T* src = xv + (b * cin + c) * len;
            for (std::size_t kk = 0; kk < k; ++kk) {
                T* dst = cols->data() + (c * k + kk) * cols_n + b * lout;
                for (std::size_t t = 0; t < lout; ++t) {
                    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * geo.stride + kk) -
                                               static_cast<std::ptrdiff_t>(geo.pad_left);
                    if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) dst[t] = src[pos];
                }
            }
        }

    ConstMatrixMap<T> wm(w.value().data(), cout, rows);
    RowMatrix<T> om = wm * (*cols);
    Tensor<T> out(Shape{batch, cout, lout});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < cout; ++o) {
            const T bo = bias.value()[o];
            const T* src = om.data() + o * cols_n + b * lout;
            T* dst = &out.at(b, o, 0);
            for (std::size_t t = 0; t < lout; ++t) dst[t] = src[t] + bo;
        }

    return make_result<T>(std::move(out), {x, w, bias},
                          [cols, wv = w.value(), geo, batch, cin, len, cout, k, lout, rows, cols_n](Node<T>& n) {
                              RowMatrix<T> gm(cout, cols_n);
                              for (std::size_t b = 0; b < batch; ++b)
                                  for (std::size_t o = 0; o < cout; ++o)
                                      std::copy_n(&n.grad.at(b, o, 0), lout, gm.data() + o * cols_n + b * lout);
                              if (detail::wants_grad(n, 1)) {
                                  MatrixMap<T> gw(detail::parent_grad(n, 1).data(), cout, rows);
                                  gw.noalias() += gm * cols->transpose();
                              }
                              if (detail::wants_grad(n, 2)) {
                                  auto& gb = detail::parent_grad(n, 2);
                                  for (std::size_t o = 0; o < cout; ++o) gb[o] += gm.row(o).sum();
                              }
                              if (detail::wants_grad(n, 0)) {
                                  RowMatrix<T> gcols = ConstMatrixMap<T>(wv.data(), cout, rows).transpose() * gm;
                                  auto& gx = detail::parent_grad(n, 0);
                                  for (std::size_t b = 0; b < batch; ++b)
                                      for (std::size_t c = 0; c < cin; ++c) {
                                          T* dst = gx.data() + (b * cin + c) * len;
                                          for (std::size_t kk = 0; kk < k; ++kk) {
                                              const T* src = gcols.data() + (c * k + kk) * cols_n + b * lout;
                                              for (std::size_t t = 0; t < lout; ++t) {
                                                  const std::ptrdiff_t pos =
                                                      static_cast<std::ptrdiff_t>(t * geo.stride + kk) -
                                                      static_cast<std::ptrdiff_t>(geo.pad_left);
                                                  if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len))
                                                      dst[pos] += src[t];
                                              }
                                          }
                                      }
                              }
                          });
}

/// Inverted dropout; identity when rate is 0 or rng is null.
template <class T, class Rng>
Var<T> dropout(const Var<T>& x, T rate, Rng* rng) {
    if (rng == nullptr || rate <= T{0}) return x;
    if (rate >= T{1}) throw std::invalid_argument("dropout rate must be < 1");
    std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
    const T factor = T{1} / (T{1} - rate);
    std::vector<T> mask(x.size());
    for (auto& m : mask) m = keep(*rng) ? factor : T{0};
    Tensor<T> out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return make_result<T>(std::move(out), {x}, [mask = std::move(mask)](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += mask[i] * n.grad[i];
    });
}

/// Token lookup producing channels-first [B, D, L]. Row `pad_id` of the
/// table never receives gradient.
template <class T>
Var<T> embedding(const std::vector<int>& ids, std::size_t batch, std::size_t length, const Var<T>& table,
                 int pad_id = 0) {
    if (ids.size() != batch * length) throw std::invalid_argument("embedding: id count does not match batch x length");
    const std::size_t vocab = table.dim(0), d = table.dim(1);
    Tensor<T> out(Shape{batch, d, length});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < length; ++t) {
            const int id = ids[b * length + t];
            if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
                throw std::out_of_range("embedding: token id " + std::to_string(id) + " outside vocabulary of " +
                                        std::to_string(vocab));
            }
            const T* row = table.value().data() + static_cast<std::size_t>(id) * d;
            for (std::size_t c = 0; c < d; ++c) out.at(b, c, t) = row[c];
        }
    return make_result<T>(std::move(out), {table}, [ids, batch, length, d, pad_id](Node<T>& n) {
        auto& g = detail::parent_grad(n, 0);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t t = 0; t < length; ++t) {
                const int id = ids[b * length + t];
                if (id == pad_id) continue;
                T* row = g.data() + static_cast<std::size_t>(id) * d;
                for (std::size_t c = 0; c < d; ++c) row[c] += n.grad.at(b, c, t);
            }
    });
}

}  // namespace drsc
