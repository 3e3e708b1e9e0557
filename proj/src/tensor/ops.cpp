#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sbi/kernels.hpp"
#include "sbi/tensor.hpp"

namespace sbi::ad {

namespace {

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

template <class T>
NodePtr<T> new_node(Shape shape, std::vector<T> value, const char* op) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  return node;
}

// Links `out` to its inputs when recording is on and any input needs a
// gradient. Returns whether the caller should install a backward function.
template <class T>
bool track(Node<T>& out, std::initializer_list<const Tensor<T>*> inputs) {
  if (!grad_enabled()) return false;
  bool any = false;
  for (const auto* t : inputs) any = any || t->requires_grad();
  if (!any) return false;
  out.requires_grad = true;
  for (const auto* t : inputs) out.inputs.push_back(t->node());
  return true;
}

template <class T>
bool track_all(Node<T>& out, const std::vector<Tensor<T>>& inputs) {
  if (!grad_enabled()) return false;
  bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
  if (!any) return false;
  out.requires_grad = true;
  for (const auto& t : inputs) out.inputs.push_back(t.node());
  return true;
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

template <class T>
Tensor<T> unary(const Tensor<T>& a, const char* op, T (*f)(T), T (*df_from_y)(T, T)) {
  std::vector<T> y(a.size());
  const auto x = a.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
  auto out = new_node<T>(a.shape(), std::move(y), op);
  if (track(*out, {&a})) {
    Node<T>* an = a.node().get();
    out->backward = [an, df_from_y](Node<T>& self) {
      if (!an->requires_grad) return;
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df_from_y(an->value[i], self.value[i]);
    };
  }
  return Tensor<T>(out);
}

}  // namespace

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 1 || b.rank() != 2 || a.last_dim() != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  const std::size_t k = b.dim(0), n = b.dim(1), m = a.size() / k;
  Shape shape = a.shape();
  shape.back() = n;
  std::vector<T> c(m * n, T(0));
  kernels::omp::gemm_nn(m, n, k, a.values().data(), b.values().data(), c.data());
  auto out = new_node<T>(std::move(shape), std::move(c), "matmul");
  if (track(*out, {&a, &b})) {
    Node<T>* an = a.node().get();
    Node<T>* bn = b.node().get();
    out->backward = [an, bn, m, n, k](Node<T>& self) {
      if (an->requires_grad) {
        kernels::omp::gemm_nt(m, k, n, self.grad.data(), bn->value.data(), an->ensure_grad().data());
      }
      if (bn->requires_grad) {
        kernels::omp::gemm_tn(m, n, k, an->value.data(), self.grad.data(), bn->ensure_grad().data());
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
  auto out = new_node<T>(a.shape(), std::move(y), "add");
  if (track(*out, {&a, &b})) {
    Node<T>* an = a.node().get();
    Node<T>* bn = b.node().get();
    out->backward = [an, bn](Node<T>& self) {
      for (Node<T>* in : {an, bn}) {
        if (!in->requires_grad) continue;
        auto& g = in->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] - b.values()[i];
  auto out = new_node<T>(a.shape(), std::move(y), "sub");
  if (track(*out, {&a, &b})) {
    Node<T>* an = a.node().get();
    Node<T>* bn = b.node().get();
    out->backward = [an, bn](Node<T>& self) {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  if (bias.rank() != 1 || bias.dim(0) != a.last_dim()) {
    throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match " +
                         shape_to_string(a.shape()));
  }
  const std::size_t n = bias.size(), rows = a.size() / n;
  std::vector<T> y(a.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = a.values()[r * n + j] + bias.values()[j];
  auto out = new_node<T>(a.shape(), std::move(y), "add_bias");
  if (track(*out, {&a, &bias})) {
    Node<T>* an = a.node().get();
    Node<T>* bn = bias.node().get();
    out->backward = [an, bn, rows, n](Node<T>& self) {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[r * n + j];
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * b.values()[i];
  auto out = new_node<T>(a.shape(), std::move(y), "mul");
  if (track(*out, {&a, &b})) {
    Node<T>* an = a.node().get();
    Node<T>* bn = b.node().get();
    out->backward = [an, bn](Node<T>& self) {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * factor;
  auto out = new_node<T>(a.shape(), std::move(y), "scale");
  if (track(*out, {&a})) {
    Node<T>* an = a.node().get();
    out->backward = [an, factor](Node<T>& self) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& a, const Tensor<T>& s) {
  if (s.size() != 1) throw DimensionError("mul_scalar: expected one-element scalar, got " + shape_to_string(s.shape()));
  const T sv = s.values()[0];
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * sv;
  auto out = new_node<T>(a.shape(), std::move(y), "mul_scalar");
  if (track(*out, {&a, &s})) {
    Node<T>* an = a.node().get();
    Node<T>* sn = s.node().get();
    out->backward = [an, sn](Node<T>& self) {
      if (an->requires_grad) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * sn->value[0];
      }
      if (sn->requires_grad) {
        T acc = T(0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * an->value[i];
        sn->ensure_grad()[0] += acc;
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary<T>(
      a, "tanh", [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary<T>(
      a, "sigmoid", [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary<T>(
      a, "relu", [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.values()) acc += v;
  auto out = new_node<T>(Shape{1}, std::vector<T>{acc}, "sum");
  if (track(*out, {&a})) {
    Node<T>* an = a.node().get();
    out->backward = [an](Node<T>& self) {
      auto& g = an->ensure_grad();
      for (auto& gi : g) gi += self.grad[0];
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(std::max<std::size_t>(1, a.size())));
}

template <class T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_last: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t width = 0;
  for (const auto& p : parts) {
    Shape lead_a(parts[0].shape().begin(), parts[0].shape().end() - 1);
    Shape lead_b(p.shape().begin(), p.shape().end() - 1);
    if (lead_a != lead_b) {
      throw DimensionError("concat_last: leading dims differ " + shape_to_string(parts[0].shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    width += p.last_dim();
  }
  std::vector<T> y(rows * width);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t w = p.last_dim();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.values().data() + r * w, w, y.data() + r * width + offset);
    offset += w;
  }
  Shape shape = parts[0].shape();
  shape.back() = width;
  auto out = new_node<T>(std::move(shape), std::move(y), "concat");
  if (track_all(*out, parts)) {
    std::vector<Node<T>*> ins;
    for (const auto& p : parts) ins.push_back(p.node().get());
    out->backward = [ins, offsets, rows, width](Node<T>& self) {
      for (std::size_t idx = 0; idx < ins.size(); ++idx) {
        Node<T>* in = ins[idx];
        if (!in->requires_grad) continue;
        auto& g = in->ensure_grad();
        const std::size_t w = in->shape.back();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < w; ++j) g[r * w + j] += self.grad[r * width + offsets[idx] + j];
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> slice_last(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  const std::size_t width = a.last_dim();
  if (begin > end || end > width) {
    throw DimensionError("slice_last: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + shape_to_string(a.shape()));
  }
  const std::size_t rows = a.rows(), w = end - begin;
  std::vector<T> y(rows * w);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(a.values().data() + r * width + begin, w, y.data() + r * w);
  Shape shape = a.shape();
  shape.back() = w;
  auto out = new_node<T>(std::move(shape), std::move(y), "slice");
  if (track(*out, {&a})) {
    Node<T>* an = a.node().get();
    out->backward = [an, rows, width, begin, w](Node<T>& self) {
      auto& g = an->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j) g[r * width + begin + j] += self.grad[r * w + j];
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_to_string(a.shape()) + " cannot become " + shape_to_string(shape));
  }
  auto out = new_node<T>(std::move(shape), std::vector<T>(a.values().begin(), a.values().end()), "reshape");
  if (track(*out, {&a})) {
    Node<T>* an = a.node().get();
    out->backward = [an](Node<T>& self) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::int32_t> indices, Shape out_shape) {
  if (table.rank() != 2) throw DimensionError("gather_rows: table must be 2-D, got " + shape_to_string(table.shape()));
  if (shape_numel(out_shape) != indices.size()) {
    throw DimensionError("gather_rows: " + std::to_string(indices.size()) + " indices for shape " +
                         shape_to_string(out_shape));
  }
  const std::size_t n = table.dim(0), d = table.dim(1);
  std::vector<T> y(indices.size() * d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto id = indices[r];
    if (id < 0 || static_cast<std::size_t>(id) >= n) {
      throw IndexError("gather_rows: index " + std::to_string(id) + " outside [0, " + std::to_string(n) + ")");
    }
    std::copy_n(table.values().data() + static_cast<std::size_t>(id) * d, d, y.data() + r * d);
  }
  out_shape.push_back(d);
  auto out = new_node<T>(std::move(out_shape), std::move(y), "gather_rows");
  if (track(*out, {&table})) {
    Node<T>* tn = table.node().get();
    std::vector<std::int32_t> ids(indices.begin(), indices.end());
    out->backward = [tn, ids = std::move(ids), d](Node<T>& self) {
      auto& g = tn->ensure_grad();
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) g[static_cast<std::size_t>(ids[r]) * d + j] += self.grad[r * d + j];
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack: no inputs");
  const std::size_t each = parts[0].size();
  std::vector<T> y;
  y.reserve(each * parts.size());
  for (const auto& p : parts) {
    require_same_shape(parts[0], p, "stack");
    y.insert(y.end(), p.values().begin(), p.values().end());
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), parts[0].shape().begin(), parts[0].shape().end());
  auto out = new_node<T>(std::move(shape), std::move(y), "stack");
  if (track_all(*out, parts)) {
    std::vector<Node<T>*> ins;
    for (const auto& p : parts) ins.push_back(p.node().get());
    out->backward = [ins, each](Node<T>& self) {
      for (std::size_t idx = 0; idx < ins.size(); ++idx) {
        if (!ins[idx]->requires_grad) continue;
        auto& g = ins[idx]->ensure_grad();
        for (std::size_t i = 0; i < each; ++i) g[i] += self.grad[idx * each + i];
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> select_rows(std::span<const std::uint8_t> keep, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "select_rows");
  const std::size_t rows = a.rows(), w = a.last_dim();
  if (keep.size() != rows) {
    throw DimensionError("select_rows: " + std::to_string(keep.size()) + " flags for " + std::to_string(rows) + " rows");
  }
  std::vector<T> y(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = (keep[r] ? a.values().data() : b.values().data()) + r * w;
    std::copy_n(src, w, y.data() + r * w);
  }
  auto out = new_node<T>(a.shape(), std::move(y), "select_rows");
  if (track(*out, {&a, &b})) {
    Node<T>* an = a.node().get();
    Node<T>* bn = b.node().get();
    std::vector<std::uint8_t> flags(keep.begin(), keep.end());
    out->backward = [an, bn, flags = std::move(flags), w](Node<T>& self) {
      for (std::size_t r = 0; r < flags.size(); ++r) {
        Node<T>* target = flags[r] ? an : bn;
        if (!target->requires_grad) continue;
        auto& g = target->ensure_grad();
        for (std::size_t j = 0; j < w; ++j) g[r * w + j] += self.grad[r * w + j];
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " invalid for " + shape_to_string(x.shape()));
  }
  const std::size_t len = x.dim(axis);
  if (len == 0) throw std::invalid_argument("softmax: empty axis in " + shape_to_string(x.shape()));
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t outer = x.size() / (len * inner);
  std::vector<T> y(x.size());
  const auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      T total = T(0);
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        y[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) y[base + j * inner] /= total;
    }
  }
  auto out = new_node<T>(x.shape(), std::move(y), "softmax");
  if (track(*out, {&x})) {
    Node<T>* xn = x.node().get();
    out->backward = [xn, outer, inner, len](Node<T>& self) {
      auto& g = xn->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T dot = T(0);
          for (std::size_t j = 0; j < len; ++j) dot += self.grad[base + j * inner] * self.value[base + j * inner];
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t i = base + j * inner;
            g[i] += self.value[i] * (self.grad[i] - dot);
          }
        }
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const std::size_t len = x.last_dim(), rows = x.rows();
  if (len == 0) throw std::invalid_argument("log_softmax: empty axis");
  std::vector<T> y(x.size());
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * len;
    const T mx = *std::max_element(row, row + len);
    T total = T(0);
    for (std::size_t j = 0; j < len; ++j) total += std::exp(row[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < len; ++j) y[r * len + j] = row[j] - lse;
  }
  auto out = new_node<T>(x.shape(), std::move(y), "log_softmax");
  if (track(*out, {&x})) {
    Node<T>* xn = x.node().get();
    out->backward = [xn, rows, len](Node<T>& self) {
      auto& g = xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        T gsum = T(0);
        for (std::size_t j = 0; j < len; ++j) gsum += self.grad[r * len + j];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t i = r * len + j;
          g[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
        }
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias) {
  const std::size_t n = x.last_dim(), rows = x.rows();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_to_string(gain.shape()) + "/" +
                         shape_to_string(bias.shape()) + " do not match " + shape_to_string(x.shape()));
  }
  std::vector<T> y(x.size()), xhat(x.size()), inv_std(rows);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * n;
    T mu = T(0);
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = T(0);
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    inv_std[r] = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEpsilon));
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t i = r * n + j;
      xhat[i] = (row[j] - mu) * inv_std[r];
      y[i] = gain.values()[j] * xhat[i] + bias.values()[j];
    }
  }
  auto out = new_node<T>(x.shape(), std::move(y), "layer_norm");
  if (track(*out, {&x, &gain, &bias})) {
    Node<T>* xn = x.node().get();
    Node<T>* gn = gain.node().get();
    Node<T>* bn = bias.node().get();
    out->backward = [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, n](Node<T>& self) {
      if (gn->requires_grad) {
        auto& g = gn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i] * xhat[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
      }
      if (xn->requires_grad) {
        auto& g = xn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          T mean_d = T(0), mean_dx = T(0);
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t i = r * n + j;
            const T d = self.grad[i] * gn->value[j];
            mean_d += d;
            mean_dx += d * xhat[i];
          }
          mean_d /= static_cast<T>(n);
          mean_dx /= static_cast<T>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t i = r * n + j;
            const T d = self.grad[i] * gn->value[j];
            g[i] += inv_std[r] * (d - mean_d - xhat[i] * mean_dx);
          }
        }
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets, double label_smoothing,
                        std::span<const std::uint8_t> mask) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [n, V], got " + shape_to_string(logits.shape()));
  const std::size_t n = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(n) + " rows");
  }
  if (!mask.empty() && mask.size() != n) throw DimensionError("cross_entropy: mask length mismatch");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw std::invalid_argument("cross_entropy: label smoothing must lie in [0, 1)");
  }
  std::size_t count = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (!mask.empty() && !mask[r]) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[r]) + " outside [0, " + std::to_string(vocab) + ")");
    }
    ++count;
  }
  const T eps = static_cast<T>(label_smoothing);
  const T off = eps / static_cast<T>(vocab);
  const T on = T(1) - eps + off;
  std::vector<T> probs(n * vocab, T(0));
  T loss = T(0);
  const auto lv = logits.values();
  for (std::size_t r = 0; r < n; ++r) {
    if (!mask.empty() && !mask[r]) continue;
    const T* row = lv.data() + r * vocab;
    const T mx = *std::max_element(row, row + vocab);
    T total = T(0);
    for (std::size_t j = 0; j < vocab; ++j) total += std::exp(row[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < vocab; ++j) {
      const T logp = row[j] - lse;
      probs[r * vocab + j] = std::exp(logp);
      const T q = static_cast<std::size_t>(targets[r]) == j ? on : off;
      if (q != T(0)) loss -= q * logp;
    }
  }
  const T denom = count ? static_cast<T>(count) : T(1);
  auto out = new_node<T>(Shape{1}, std::vector<T>{loss / denom}, "cross_entropy");
  if (track(*out, {&logits})) {
    Node<T>* ln = logits.node().get();
    std::vector<std::int32_t> tg(targets.begin(), targets.end());
    std::vector<std::uint8_t> mk(mask.begin(), mask.end());
    out->backward = [ln, probs = std::move(probs), tg = std::move(tg), mk = std::move(mk), n, vocab, on, off,
                     denom](Node<T>& self) {
      auto& g = ln->ensure_grad();
      const T scale_g = self.grad[0] / denom;
      for (std::size_t r = 0; r < n; ++r) {
        if (!mk.empty() && !mk[r]) continue;
        for (std::size_t j = 0; j < vocab; ++j) {
          const T q = static_cast<std::size_t>(tg[r]) == j ? on : off;
          g[r * vocab + j] += scale_g * (probs[r * vocab + j] - q);
        }
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> dropout(const Tensor<T>& a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw std::invalid_argument("dropout: rate must be below 1");
  std::bernoulli_distribution keep(1.0 - p);
  const T kept = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> m(a.size());
  for (auto& mi : m) mi = keep(rng) ? kept : T(0);
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * m[i];
  auto out = new_node<T>(a.shape(), std::move(y), "dropout");
  if (track(*out, {&a})) {
    Node<T>* an = a.node().get();
    out->backward = [an, m = std::move(m)](Node<T>& self) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * m[i];
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                    std::span<const T> additive_mask, EmptyRows empty_rows, std::vector<T>* weights_out) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3 || q.dim(0) != k.dim(0) || k.dim(0) != v.dim(0) ||
      q.dim(2) != k.dim(2) || k.dim(1) != v.dim(1)) {
    throw DimensionError("attention: incompatible q/k/v shapes " + shape_to_string(q.shape()) + ", " +
                         shape_to_string(k.shape()) + ", " + shape_to_string(v.shape()));
  }
  const std::size_t batch = q.dim(0), tq = q.dim(1), tk = k.dim(1), d = q.dim(2), dv = v.dim(2);
  if (heads == 0 || d % heads != 0 || dv % heads != 0) {
    throw std::invalid_argument("attention: dimension " + std::to_string(d) + " not divisible by " +
                                std::to_string(heads) + " heads");
  }
  if (!additive_mask.empty() && additive_mask.size() != batch * tq * tk) {
    throw DimensionError("attention: mask has " + std::to_string(additive_mask.size()) + " entries, expected " +
                         std::to_string(batch * tq * tk));
  }
  const auto hidden = [&](std::size_t b, std::size_t i, std::size_t j) {
    return !additive_mask.empty() && additive_mask[(b * tq + i) * tk + j] == -std::numeric_limits<T>::infinity();
  };
  if (empty_rows == EmptyRows::kError) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < tq; ++i) {
        bool any = false;
        for (std::size_t j = 0; j < tk && !any; ++j) any = !hidden(b, i, j);
        if (!any) throw std::invalid_argument("attention: every key is masked for a query row");
      }
  }

  const std::size_t dh = d / heads, dvh = dv / heads;
  const T scale_qk = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<T> probs(batch * heads * tq * tk, T(0));
  std::vector<T> y(batch * tq * dv, T(0));
  const T* qv = q.values().data();
  const T* kv = k.values().data();
  const T* vv = v.values().data();
  const auto pairs = static_cast<long long>(batch * heads);

#pragma omp parallel for schedule(static) if (batch * heads * tq * tk * d > kernels::omp::kParallelThreshold)
  for (long long bh = 0; bh < pairs; ++bh) {
    const std::size_t b = static_cast<std::size_t>(bh) / heads, h = static_cast<std::size_t>(bh) % heads;
    for (std::size_t i = 0; i < tq; ++i) {
      T* p = probs.data() + ((b * heads + h) * tq + i) * tk;
      const T* qi = qv + (b * tq + i) * d + h * dh;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < tk; ++j) {
        if (hidden(b, i, j)) {
          p[j] = -std::numeric_limits<T>::infinity();
          continue;
        }
        const T* kj = kv + (b * tk + j) * d + h * dh;
        T s = T(0);
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        s = s * scale_qk + (additive_mask.empty() ? T(0) : additive_mask[(b * tq + i) * tk + j]);
        p[j] = s;
        mx = std::max(mx, s);
      }
      if (mx == -std::numeric_limits<T>::infinity()) {
        std::fill(p, p + tk, T(0));
        continue;
      }
      T total = T(0);
      for (std::size_t j = 0; j < tk; ++j) {
        p[j] = std::exp(p[j] - mx);
        total += p[j];
      }
      T* yi = y.data() + (b * tq + i) * dv + h * dvh;
      for (std::size_t j = 0; j < tk; ++j) {
        p[j] /= total;
        if (p[j] == T(0)) continue;
        const T* vj = vv + (b * tk + j) * dv + h * dvh;
        for (std::size_t c = 0; c < dvh; ++c) yi[c] += p[j] * vj[c];
      }
    }
  }
  if (weights_out) *weights_out = probs;

  auto out = new_node<T>(Shape{batch, tq, dv}, std::move(y), "attention");
  if (track(*out, {&q, &k, &v})) {
    Node<T>* qn = q.node().get();
    Node<T>* kn = k.node().get();
    Node<T>* vn = v.node().get();
    out->backward = [qn, kn, vn, probs = std::move(probs), batch, heads, tq, tk, d, dv, dh, dvh,
                     scale_qk](Node<T>& self) {
      T* gq = qn->requires_grad ? qn->ensure_grad().data() : nullptr;
      T* gk = kn->requires_grad ? kn->ensure_grad().data() : nullptr;
      T* gv = vn->requires_grad ? vn->ensure_grad().data() : nullptr;
      const T* qv = qn->value.data();
      const T* kv = kn->value.data();
      const T* vv = vn->value.data();
      const T* gy = self.grad.data();
      const auto pairs = static_cast<long long>(batch * heads);
#pragma omp parallel for schedule(static) if (batch * heads * tq * tk * d > kernels::omp::kParallelThreshold)
      for (long long bh = 0; bh < pairs; ++bh) {
        const std::size_t b = static_cast<std::size_t>(bh) / heads, h = static_cast<std::size_t>(bh) % heads;
        std::vector<T> dp(tk);
        for (std::size_t i = 0; i < tq; ++i) {
          const T* p = probs.data() + ((b * heads + h) * tq + i) * tk;
          const T* gyi = gy + (b * tq + i) * dv + h * dvh;
          T dot = T(0);
          for (std::size_t j = 0; j < tk; ++j) {
            if (p[j] == T(0)) {
              dp[j] = T(0);
              continue;
            }
            const T* vj = vv + (b * tk + j) * dv + h * dvh;
            T s = T(0);
            for (std::size_t c = 0; c < dvh; ++c) s += gyi[c] * vj[c];
            dp[j] = s;
            dot += p[j] * s;
            if (gv) {
              T* gvj = gv + (b * tk + j) * dv + h * dvh;
              for (std::size_t c = 0; c < dvh; ++c) gvj[c] += p[j] * gyi[c];
            }
          }
          const T* qi = qv + (b * tq + i) * d + h * dh;
          T* gqi = gq ? gq + (b * tq + i) * d + h * dh : nullptr;
          for (std::size_t j = 0; j < tk; ++j) {
            if (p[j] == T(0)) continue;
            const T ds = p[j] * (dp[j] - dot) * scale_qk;
            const T* kj = kv + (b * tk + j) * d + h * dh;
            if (gqi)
              for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
            if (gk) {
              T* gkj = gk + (b * tk + j) * d + h * dh;
              for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
            }
          }
        }
      }
    };
  }
  return Tensor<T>(out);
}

template <class T>
Tensor<T> additive_attention(const Tensor<T>& query_proj, const Tensor<T>& keys_proj, const Tensor<T>& score,
                             const Tensor<T>& values, std::span<const std::uint8_t> visible,
                             std::vector<T>* weights_out) {
  if (query_proj.rank() != 2 || keys_proj.rank() != 3 || values.rank() != 3 || score.size() != query_proj.dim(1) ||
      keys_proj.dim(0) != query_proj.dim(0) || keys_proj.dim(2) != query_proj.dim(1) ||
      values.dim(0) != keys_proj.dim(0) || values.dim(1) != keys_proj.dim(1)) {
    throw DimensionError("additive_attention: incompatible shapes " + shape_to_string(query_proj.shape()) + ", " +
                         shape_to_string(keys_proj.shape()) + ", " + shape_to_string(values.shape()));
  }
  const std::size_t batch = query_proj.dim(0), d = query_proj.dim(1), m = keys_proj.dim(1), dv = values.dim(2);
  if (visible.size() != batch * m) throw DimensionError("additive_attention: visibility mask length mismatch");

  std::vector<T> hidden(batch * m * d, T(0)), alpha(batch * m, T(0)), y(batch * dv, T(0));
  const T* qv = query_proj.values().data();
  const T* kv = keys_proj.values().data();
  const T* sv = score.values().data();
  const T* vv = values.values().data();
  for (std::size_t b = 0; b < batch; ++b) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      if (!visible[b * m + j]) continue;
      T* t = hidden.data() + (b * m + j) * d;
      T e = T(0);
      for (std::size_t c = 0; c < d; ++c) {
        t[c] = std::tanh(qv[b * d + c] + kv[(b * m + j) * d + c]);
        e += sv[c] * t[c];
      }
      alpha[b * m + j] = e;
      mx = std::max(mx, e);
    }
    if (mx == -std::numeric_limits<T>::infinity()) continue;
    T total = T(0);
    for (std::size_t j = 0; j < m; ++j) {
      if (!visible[b * m + j]) continue;
      alpha[b * m + j] = std::exp(alpha[b * m + j] - mx);
      total += alpha[b * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (!visible[b * m + j]) continue;
      alpha[b * m + j] /= total;
      for (std::size_t c = 0; c < dv; ++c) y[b * dv + c] += alpha[b * m + j] * vv[(b * m + j) * dv + c];
    }
  }
  if (weights_out) *weights_out = alpha;

  auto out = new_node<T>(Shape{batch, dv}, std::move(y), "additive_attention");
  if (track(*out, {&query_proj, &keys_proj, &score, &values})) {
    Node<T>* qn = query_proj.node().get();
    Node<T>* kn = keys_proj.node().get();
    Node<T>* sn = score.node().get();
    Node<T>* vn = values.node().get();
    std::vector<std::uint8_t> vis(visible.begin(), visible.end());
    out->backward = [qn, kn, sn, vn, vis = std::move(vis), hidden = std::move(hidden), alpha = std::move(alpha),
                     batch, d, m, dv](Node<T>& self) {
      T* gq = qn->requires_grad ? qn->ensure_grad().data() : nullptr;
      T* gk = kn->requires_grad ? kn->ensure_grad().data() : nullptr;
      T* gs = sn->requires_grad ? sn->ensure_grad().data() : nullptr;
      T* gv = vn->requires_grad ? vn->ensure_grad().data() : nullptr;
      const T* vv = vn->value.data();
      const T* sv = sn->value.data();
      std::vector<T> da(m);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* gy = self.grad.data() + b * dv;
        T dot = T(0);
        for (std::size_t j = 0; j < m; ++j) {
          da[j] = T(0);
          if (!vis[b * m + j]) continue;
          const T a = alpha[b * m + j];
          T s = T(0);
          for (std::size_t c = 0; c < dv; ++c) {
            s += gy[c] * vv[(b * m + j) * dv + c];
            if (gv) gv[(b * m + j) * dv + c] += a * gy[c];
          }
          da[j] = s;
          dot += a * s;
        }
        for (std::size_t j = 0; j < m; ++j) {
          if (!vis[b * m + j]) continue;
          const T de = alpha[b * m + j] * (da[j] - dot);
          const T* t = hidden.data() + (b * m + j) * d;
          for (std::size_t c = 0; c < d; ++c) {
            if (gs) gs[c] += de * t[c];
            const T du = de * sv[c] * (T(1) - t[c] * t[c]);
            if (gq) gq[b * d + c] += du;
            if (gk) gk[(b * m + j) * d + c] += du;
          }
        }
      }
    };
  }
  return Tensor<T>(out);
}

// ---------------------------------------------------------------------------

#define SBI_INSTANTIATE_OPS(T)                                                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                   \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                   \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                                                \
  template Tensor<T> mul_scalar(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> tanh(const Tensor<T>&);                                                                    \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                                    \
  template Tensor<T> sum(const Tensor<T>&);                                                                     \
  template Tensor<T> mean(const Tensor<T>&);                                                                    \
  template Tensor<T> concat_last(const std::vector<Tensor<T>>&);                                                \
  template Tensor<T> slice_last(const Tensor<T>&, std::size_t, std::size_t);                                    \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                          \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::int32_t>, Shape);                       \
  template Tensor<T> stack(const std::vector<Tensor<T>>&);                                                      \
  template Tensor<T> select_rows(std::span<const std::uint8_t>, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                                    \
  template Tensor<T> log_softmax(const Tensor<T>&);                                                             \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::int32_t>, double,                     \
                                   std::span<const std::uint8_t>);                                              \
  template Tensor<T> dropout(const Tensor<T>&, double, std::mt19937_64&);                                       \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,               \
                               std::span<const T>, EmptyRows, std::vector<T>*);                                 \
  template Tensor<T> additive_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                        std::span<const std::uint8_t>, std::vector<T>*);

SBI_INSTANTIATE_OPS(float)
SBI_INSTANTIATE_OPS(double)

#undef SBI_INSTANTIATE_OPS

}  // namespace sbi::ad
