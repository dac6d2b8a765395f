// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "m3s/errors.hpp"

namespace m3s::ad {
namespace {

template <typename T>
bool tracking(const Tensor<T>& t) {
  return active_tape<T>() != nullptr && t.requires_grad();
}

template <typename T>
std::span<T> grad_of(const Tensor<T>& t) {
  if (!t.requires_grad()) return {};
  return t.node().ensure_grad();
}

template <typename T>
void check_finite(const char* op, const std::vector<T>& values) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

template <typename T, typename Backward>
Tensor<T> finish(const char* op, Shape shape, std::vector<T> values, bool track, Backward backward) {
  check_finite(op, values);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = track;
  if (track) {
    active_tape<T>()->record([node, backward = std::move(backward)]() mutable {
      if (node->grad.empty()) return;
      backward(*node);
    });
  }
  return Tensor<T>(std::move(node));
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw ConfigError(std::string(op) + ": " + detail);
}

// Returns the number of times b repeats inside a (b's shape must be a suffix of a's).
std::size_t broadcast_outer(const char* op, const Shape& a, const Shape& b) {
  if (b.size() > a.size() || !std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    shape_error(op, "cannot broadcast " + to_string(b) + " onto " + to_string(a));
  }
  return numel(a) / numel(b);
}

struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) shape_error(op, "axis " + std::to_string(axis) + " out of range for " + to_string(s));
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

template <typename T>
Tensor<T> binary(const char* op, BinaryKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t outer = broadcast_outer(op, a.shape(), b.shape());
  const std::size_t inner = b.size();
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(a.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t k = o * inner + i;
      switch (kind) {
        case BinaryKind::kAdd: out[k] = av[k] + bv[i]; break;
        case BinaryKind::kSub: out[k] = av[k] - bv[i]; break;
        case BinaryKind::kMul: out[k] = av[k] * bv[i]; break;
        case BinaryKind::kDiv: out[k] = av[k] / bv[i]; break;
      }
    }
  }
  const bool track = tracking(a) || tracking(b);
  return finish<T>(op, a.shape(), std::move(out), track, [a, b, kind, outer, inner](Node<T>& y) {
    auto ga = grad_of(a);
    auto gb = grad_of(b);
    const auto av = a.data();
    const auto bv = b.data();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = o * inner + i;
        const T g = y.grad[k];
        switch (kind) {
          case BinaryKind::kAdd:
            if (!ga.empty()) ga[k] += g;
            if (!gb.empty()) gb[i] += g;
            break;
          case BinaryKind::kSub:
            if (!ga.empty()) ga[k] += g;
            if (!gb.empty()) gb[i] -= g;
            break;
          case BinaryKind::kMul:
            if (!ga.empty()) ga[k] += g * bv[i];
            if (!gb.empty()) gb[i] += g * av[k];
            break;
          case BinaryKind::kDiv:
            if (!ga.empty()) ga[k] += g / bv[i];
            if (!gb.empty()) gb[i] -= g * av[k] / (bv[i] * bv[i]);
            break;
        }
      }
    }
  });
}

template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const char* op, const Tensor<T>& a, Fwd fwd, Deriv deriv) {
  const auto av = a.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return finish<T>(op, a.shape(), std::move(out), tracking(a), [a, deriv](Node<T>& y) {
    auto ga = grad_of(a);
    const auto av = a.data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += y.grad[i] * deriv(av[i], y.value[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("add", BinaryKind::kAdd, a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("sub", BinaryKind::kSub, a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("mul", BinaryKind::kMul, a, b);
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("div", BinaryKind::kDiv, a, b);
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary<T>("add_scalar", a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return unary<T>("scale", a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  constexpr const char* op = "matmul";
  if (a.rank() < 2 || b.rank() < 2) shape_error(op, "operands need rank >= 2");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t bk = transpose_b ? bs.back() : bs[bs.size() - 2];
  const std::size_t n = transpose_b ? bs[bs.size() - 2] : bs.back();
  if (bk != k) shape_error(op, "inner extents differ: " + to_string(as) + " x " + to_string(bs));

  const std::size_t batches = numel(as) / (m * k);
  const bool shared_b = bs.size() == 2;
  if (!shared_b) {
    if (!std::equal(as.begin(), as.end() - 2, bs.begin(), bs.end() - 2)) {
      shape_error(op, "batch extents differ: " + to_string(as) + " x " + to_string(bs));
    }
  }
  // A shared right operand folds the batch into rows.
  const std::size_t rows = shared_b ? batches * m : m;
  const std::size_t loops = shared_b ? 1 : batches;

  Shape out_shape(as.begin(), as.end() - 1);
  out_shape.push_back(n);
  std::vector<T> out(numel(out_shape), T(0));
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t l = 0; l < loops; ++l) {
    const T* A = av.data() + l * rows * k;
    const T* B = bv.data() + l * k * n;
    T* C = out.data() + l * rows * n;
    for (std::size_t i = 0; i < rows; ++i) {
      T* crow = C + i * n;
      const T* arow = A + i * k;
      if (transpose_b) {
        for (std::size_t j = 0; j < n; ++j) {
          const T* brow = B + j * k;
          T acc = T(0);
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
          crow[j] = acc;
        }
      } else {
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = arow[p];
          const T* brow = B + p * n;
          for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
      }
    }
  }
  const bool track = tracking(a) || tracking(b);
  return finish<T>(op, std::move(out_shape), std::move(out), track,
                   [a, b, transpose_b, rows, loops, k, n](Node<T>& y) {
    auto ga = grad_of(a);
    auto gb = grad_of(b);
    const auto av = a.data();
    const auto bv = b.data();
    for (std::size_t l = 0; l < loops; ++l) {
      const T* A = av.data() + l * rows * k;
      const T* B = bv.data() + l * k * n;
      const T* G = y.grad.data() + l * rows * n;
      T* GA = ga.empty() ? nullptr : ga.data() + l * rows * k;
      T* GB = gb.empty() ? nullptr : gb.data() + l * k * n;
      for (std::size_t i = 0; i < rows; ++i) {
        const T* grow = G + i * n;
        const T* arow = A + i * k;
        if (GA != nullptr) {
          T* garow = GA + i * k;
          if (transpose_b) {
            // dA[i,:] += sum_j G[i,j] * B[j,:]
            for (std::size_t j = 0; j < n; ++j) {
              const T g = grow[j];
              const T* brow = B + j * k;
              for (std::size_t p = 0; p < k; ++p) garow[p] += g * brow[p];
            }
          } else {
            // dA[i,p] += sum_j G[i,j] * B[p,j]
            for (std::size_t p = 0; p < k; ++p) {
              const T* brow = B + p * n;
              T acc = T(0);
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              garow[p] += acc;
            }
          }
        }
        if (GB != nullptr) {
          if (transpose_b) {
            // dB[j,:] += G[i,j] * A[i,:]
            for (std::size_t j = 0; j < n; ++j) {
              const T g = grow[j];
              T* gbrow = GB + j * k;
              for (std::size_t p = 0; p < k; ++p) gbrow[p] += g * arow[p];
            }
          } else {
            // dB[p,:] += A[i,p] * G[i,:]
            for (std::size_t p = 0; p < k; ++p) {
              const T aip = arow[p];
              T* gbrow = GB + p * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
            }
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    shape_error("reshape", "cannot reshape " + to_string(a.shape()) + " into " + to_string(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return finish<T>("reshape", std::move(shape), std::move(out), tracking(a), [a](Node<T>& y) {
    auto ga = grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += y.grad[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& order) {
  const Shape& s = a.shape();
  const std::size_t r = s.size();
  if (order.size() != r) shape_error("permute", "order rank mismatch");
  std::vector<bool> seen(r, false);
  for (auto o : order) {
    if (o >= r || seen[o]) shape_error("permute", "order is not a permutation");
    seen[o] = true;
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * s[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = s[order[i]];
    src_strides[i] = in_strides[order[i]];
  }
  // map[out_index] = in_index
  std::vector<std::size_t> map(a.size());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < map.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < r; ++d) src += idx[d] * src_strides[d];
    map[flat] = src;
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  const auto av = a.data();
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[map[i]];
  return finish<T>("permute", std::move(out_shape), std::move(out), tracking(a),
                   [a, map = std::move(map)](Node<T>& y) {
    auto ga = grad_of(a);
    for (std::size_t i = 0; i < map.size(); ++i) ga[map[i]] += y.grad[i];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() < 2) shape_error("transpose", "needs rank >= 2");
  std::vector<std::size_t> order(a.rank());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[order.size() - 1], order[order.size() - 2]);
  return permute(a, order);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  constexpr const char* op = "concat";
  if (parts.empty()) shape_error(op, "nothing to concatenate");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) shape_error(op, "axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  bool track = false;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_error(op, "rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) shape_error(op, to_string(s) + " vs " + to_string(first));
    }
    out_shape[axis] += s[axis];
    track = track || tracking(p);
  }
  const auto split = split_axis(op, out_shape, axis);
  std::vector<T> out(numel(out_shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t width = p.shape()[axis] * split.inner;
    const auto pv = p.data();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(pv.data() + o * width, width, out.data() + o * split.extent * split.inner + offset);
    }
    offset += width;
  }
  return finish<T>(op, std::move(out_shape), std::move(out), track, [parts, axis, split](Node<T>& y) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t width = p.shape()[axis] * split.inner;
      auto gp = grad_of(p);
      if (!gp.empty()) {
        for (std::size_t o = 0; o < split.outer; ++o) {
          const T* src = y.grad.data() + o * split.extent * split.inner + offset;
          T* dst = gp.data() + o * width;
          for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
        }
      }
      offset += width;
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t length) {
  constexpr const char* op = "slice";
  const auto split = split_axis(op, a.shape(), axis);
  if (length == 0 || begin + length > split.extent) shape_error(op, "range out of bounds");
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  const std::size_t width = length * split.inner;
  const std::size_t offset = begin * split.inner;
  const std::size_t stride = split.extent * split.inner;
  std::vector<T> out(split.outer * width);
  const auto av = a.data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(av.data() + o * stride + offset, width, out.data() + o * width);
  }
  return finish<T>(op, std::move(out_shape), std::move(out), tracking(a),
                   [a, split, width, offset, stride](Node<T>& y) {
    auto ga = grad_of(a);
    for (std::size_t o = 0; o < split.outer; ++o) {
      for (std::size_t i = 0; i < width; ++i) ga[o * stride + offset + i] += y.grad[o * width + i];
    }
  });
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, std::size_t axis, const std::vector<std::size_t>& sizes) {
  if (axis >= a.rank()) shape_error("split", "axis out of range");
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (total != a.shape()[axis]) shape_error("split", "sizes do not sum to the axis extent");
  std::vector<Tensor<T>> parts;
  std::size_t begin = 0;
  for (auto s : sizes) {
    parts.push_back(slice(a, axis, begin, s));
    begin += s;
  }
  return parts;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  const auto sp = split_axis("softmax", a.shape(), axis);
  const auto av = a.data();
  std::vector<T> out(a.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.extent * sp.inner + in;
      T mx = av[base];
      for (std::size_t e = 1; e < sp.extent; ++e) mx = std::max(mx, av[base + e * sp.inner]);
      T total = T(0);
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const std::size_t k = base + e * sp.inner;
        out[k] = std::exp(av[k] - mx);
        total += out[k];
      }
      for (std::size_t e = 0; e < sp.extent; ++e) out[base + e * sp.inner] /= total;
    }
  }
  return finish<T>("softmax", a.shape(), std::move(out), tracking(a), [a, sp](Node<T>& y) {
    auto ga = grad_of(a);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.extent * sp.inner + in;
        T dot = T(0);
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t k = base + e * sp.inner;
          dot += y.grad[k] * y.value[k];
        }
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t k = base + e * sp.inner;
          ga[k] += y.value[k] * (y.grad[k] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a, std::size_t axis) {
  const auto sp = split_axis("log_softmax", a.shape(), axis);
  const auto av = a.data();
  std::vector<T> out(a.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.extent * sp.inner + in;
      T mx = av[base];
      for (std::size_t e = 1; e < sp.extent; ++e) mx = std::max(mx, av[base + e * sp.inner]);
      T total = T(0);
      for (std::size_t e = 0; e < sp.extent; ++e) total += std::exp(av[base + e * sp.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const std::size_t k = base + e * sp.inner;
        out[k] = av[k] - lse;
      }
    }
  }
  return finish<T>("log_softmax", a.shape(), std::move(out), tracking(a), [a, sp](Node<T>& y) {
    auto ga = grad_of(a);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.extent * sp.inner + in;
        T total = T(0);
        for (std::size_t e = 0; e < sp.extent; ++e) total += y.grad[base + e * sp.inner];
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t k = base + e * sp.inner;
          ga[k] += y.grad[k] - std::exp(y.value[k]) * total;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return unary<T>("log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary<T>(
      "sigmoid", a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary<T>("tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  static const T c = static_cast<T>(std::sqrt(2.0 / 3.14159265358979323846));
  static const T k = T(0.044715);
  return unary<T>(
      "gelu", a,
      [](T x) { return T(0.5) * x * (T(1) + std::tanh(c * (x + k * x * x * x))); },
      [](T x, T) {
        const T u = c * (x + k * x * x * x);
        const T th = std::tanh(u);
        const T du = c * (T(1) + T(3) * k * x * x);
        return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
      });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  constexpr const char* op = "layer_norm";
  const std::size_t d = a.shape().back();
  if (gamma.size() != d || beta.size() != d || gamma.rank() != 1 || beta.rank() != 1) {
    shape_error(op, "gamma/beta must be [" + std::to_string(d) + "]");
  }
  const std::size_t rows = a.size() / d;
  const auto av = a.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<T> out(a.size());
  std::vector<T> xhat(a.size());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = av.data() + r * d;
    T mu = T(0);
    for (std::size_t i = 0; i < d; ++i) mu += x[i];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t i = 0; i < d; ++i) var += (x[i] - mu) * (x[i] - mu);
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t i = 0; i < d; ++i) {
      const T h = (x[i] - mu) * inv;
      xhat[r * d + i] = h;
      out[r * d + i] = h * gv[i] + bv[i];
    }
  }
  const bool track = tracking(a) || tracking(gamma) || tracking(beta);
  return finish<T>(op, a.shape(), std::move(out), track,
                   [a, gamma, beta, d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& y) {
    auto ga = grad_of(a);
    auto gg = grad_of(gamma);
    auto gb = grad_of(beta);
    const auto gv = gamma.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* dy = y.grad.data() + r * d;
      const T* h = xhat.data() + r * d;
      if (!gg.empty()) for (std::size_t i = 0; i < d; ++i) gg[i] += dy[i] * h[i];
      if (!gb.empty()) for (std::size_t i = 0; i < d; ++i) gb[i] += dy[i];
      if (!ga.empty()) {
        T sum_dh = T(0);
        T sum_dh_h = T(0);
        for (std::size_t i = 0; i < d; ++i) {
          const T dh = dy[i] * gv[i];
          sum_dh += dh;
          sum_dh_h += dh * h[i];
        }
        const T scale = inv_std[r] / static_cast<T>(d);
        for (std::size_t i = 0; i < d; ++i) {
          const T dh = dy[i] * gv[i];
          ga[r * d + i] += scale * (static_cast<T>(d) * dh - sum_dh - h[i] * sum_dh_h);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids, Shape prefix) {
  constexpr const char* op = "embedding";
  if (table.rank() != 2) shape_error(op, "table must be [V, D]");
  if (numel(prefix) != ids.size()) shape_error(op, "prefix " + to_string(prefix) + " does not match id count");
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  std::vector<T> out(ids.size() * d);
  const auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  Shape out_shape = std::move(prefix);
  out_shape.push_back(d);
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return finish<T>(op, std::move(out_shape), std::move(out), tracking(table),
                   [table, d, saved = std::move(saved)](Node<T>& y) {
    auto gt = grad_of(table);
    for (std::size_t i = 0; i < saved.size(); ++i) {
      T* dst = gt.data() + static_cast<std::size_t>(saved[i]) * d;
      const T* src = y.grad.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Tensor<T> masked_fill(const Tensor<T>& a, std::span<const std::uint8_t> mask, T value) {
  if (mask.size() != a.size()) shape_error("masked_fill", "mask size does not match " + to_string(a.shape()));
  const auto av = a.data();
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] ? value : av[i];
  std::vector<std::uint8_t> saved(mask.begin(), mask.end());
  return finish<T>("masked_fill", a.shape(), std::move(out), tracking(a),
                   [a, saved = std::move(saved)](Node<T>& y) {
    auto ga = grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (!saved[i]) ga[i] += y.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a, std::size_t axis) {
  const auto sp = split_axis("sum", a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape.push_back(1);
  const auto av = a.data();
  std::vector<T> out(sp.outer * sp.inner, T(0));
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t e = 0; e < sp.extent; ++e) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        out[o * sp.inner + in] += av[(o * sp.extent + e) * sp.inner + in];
      }
    }
  }
  return finish<T>("sum", std::move(out_shape), std::move(out), tracking(a), [a, sp](Node<T>& y) {
    auto ga = grad_of(a);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t e = 0; e < sp.extent; ++e) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          ga[(o * sp.extent + e) * sp.inner + in] += y.grad[o * sp.inner + in];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank()) shape_error("mean", "axis out of range");
  return scale(sum(a, axis), T(1) / static_cast<T>(a.shape()[axis]));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  const auto av = a.data();
  T total = T(0);
  for (T v : av) total += v;
  return finish<T>("sum_all", Shape{1}, std::vector<T>{total}, tracking(a), [a](Node<T>& y) {
    auto ga = grad_of(a);
    for (auto& g : ga) g += y.grad[0];
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b) {
  constexpr const char* op = "cosine_similarity";
  if (a.shape() != b.shape()) shape_error(op, to_string(a.shape()) + " vs " + to_string(b.shape()));
  const std::size_t d = a.shape().back();
  const std::size_t rows = a.size() / d;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape.push_back(1);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(rows);
  std::vector<T> na(rows), nb(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T dot = T(0), aa = T(0), bb = T(0);
    for (std::size_t i = 0; i < d; ++i) {
      const T x = av[r * d + i];
      const T z = bv[r * d + i];
      dot += x * z;
      aa += x * x;
      bb += z * z;
    }
    if (aa == T(0) || bb == T(0)) throw NumericError(std::string(op) + ": zero-norm row " + std::to_string(r));
    na[r] = std::sqrt(aa);
    nb[r] = std::sqrt(bb);
    out[r] = dot / (na[r] * nb[r]);
  }
  const bool track = tracking(a) || tracking(b);
  return finish<T>(op, std::move(out_shape), std::move(out), track,
                   [a, b, d, rows, na = std::move(na), nb = std::move(nb)](Node<T>& y) {
    auto ga = grad_of(a);
    auto gb = grad_of(b);
    const auto av = a.data();
    const auto bv = b.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T g = y.grad[r];
      const T c = y.value[r];
      const T inv_ab = T(1) / (na[r] * nb[r]);
      for (std::size_t i = 0; i < d; ++i) {
        const T x = av[r * d + i];
        const T z = bv[r * d + i];
        if (!ga.empty()) ga[r * d + i] += g * (z * inv_ab - c * x / (na[r] * na[r]));
        if (!gb.empty()) gb[r * d + i] += g * (x * inv_ab - c * z / (nb[r] * nb[r]));
      }
    }
  });
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& a) {
  constexpr const char* op = "l2_normalize";
  const std::size_t d = a.shape().back();
  const std::size_t rows = a.size() / d;
  const auto av = a.data();
  std::vector<T> out(a.size());
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T ss = T(0);
    for (std::size_t i = 0; i < d; ++i) ss += av[r * d + i] * av[r * d + i];
    if (ss == T(0)) throw NumericError(std::string(op) + ": zero-norm row " + std::to_string(r));
    norms[r] = std::sqrt(ss);
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = av[r * d + i] / norms[r];
  }
  return finish<T>(op, a.shape(), std::move(out), tracking(a),
                   [a, d, rows, norms = std::move(norms)](Node<T>& y) {
    auto ga = grad_of(a);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = T(0);
      for (std::size_t i = 0; i < d; ++i) dot += y.grad[r * d + i] * y.value[r * d + i];
      for (std::size_t i = 0; i < d; ++i) {
        ga[r * d + i] += (y.grad[r * d + i] - y.value[r * d + i] * dot) / norms[r];
      }
    }
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> rows) {
  constexpr const char* op = "gather_rows";
  const std::size_t d = a.shape().back();
  const std::size_t total = a.size() / d;
  if (rows.empty()) shape_error(op, "no rows selected");
  for (auto r : rows) {
    if (r >= total) shape_error(op, "row index out of range");
  }
  const auto av = a.data();
  std::vector<T> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(av.data() + rows[i] * d, d, out.data() + i * d);
  std::vector<std::size_t> saved(rows.begin(), rows.end());
  return finish<T>(op, Shape{rows.size(), d}, std::move(out), tracking(a),
                   [a, d, saved = std::move(saved)](Node<T>& y) {
    auto ga = grad_of(a);
    for (std::size_t i = 0; i < saved.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) ga[saved[i] * d + j] += y.grad[i * d + j];
    }
  });
}

template <typename T>
Tensor<T> pick(const Tensor<T>& a, std::span<const std::int32_t> index) {
  constexpr const char* op = "pick";
  if (a.rank() != 2 || index.size() != a.dim(0)) shape_error(op, "expects [R, V] and R indices");
  const std::size_t v = a.dim(1);
  const auto av = a.data();
  std::vector<T> out(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= v) {
      throw DataError("pick: index " + std::to_string(index[r]) + " outside [0, " + std::to_string(v) + ")");
    }
    out[r] = av[r * v + static_cast<std::size_t>(index[r])];
  }
  std::vector<std::int32_t> saved(index.begin(), index.end());
  return finish<T>(op, Shape{index.size()}, std::move(out), tracking(a),
                   [a, v, saved = std::move(saved)](Node<T>& y) {
    auto ga = grad_of(a);
    for (std::size_t r = 0; r < saved.size(); ++r) ga[r * v + static_cast<std::size_t>(saved[r])] += y.grad[r];
  });
}

template <typename T>
Tensor<T> detach(const Tensor<T>& a) {
  return Tensor<T>::constant(a.shape(), std::vector<T>(a.data().begin(), a.data().end()));
}

#define M3S_INSTANTIATE_OPS(T)                                                                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                                     \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool);                               \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                               \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                     \
  template Tensor<T> transpose(const Tensor<T>&);                                                    \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                             \
  template std::vector<Tensor<T>> split(const Tensor<T>&, std::size_t, const std::vector<std::size_t>&); \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                 \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                         \
  template Tensor<T> log_softmax(const Tensor<T>&, std::size_t);                                     \
  template Tensor<T> log(const Tensor<T>&);                                                          \
  template Tensor<T> exp(const Tensor<T>&);                                                          \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                      \
  template Tensor<T> tanh(const Tensor<T>&);                                                         \
  template Tensor<T> gelu(const Tensor<T>&);                                                         \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);            \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const std::int32_t>, Shape);              \
  template Tensor<T> masked_fill(const Tensor<T>&, std::span<const std::uint8_t>, T);                \
  template Tensor<T> sum(const Tensor<T>&, std::size_t);                                             \
  template Tensor<T> mean(const Tensor<T>&, std::size_t);                                            \
  template Tensor<T> sum_all(const Tensor<T>&);                                                      \
  template Tensor<T> mean_all(const Tensor<T>&);                                                     \
  template Tensor<T> cosine_similarity(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> l2_normalize(const Tensor<T>&);                                                 \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);                    \
  template Tensor<T> pick(const Tensor<T>&, std::span<const std::int32_t>);                          \
  template Tensor<T> detach(const Tensor<T>&);

M3S_INSTANTIATE_OPS(float)
M3S_INSTANTIATE_OPS(double)

}  // namespace m3s::ad
