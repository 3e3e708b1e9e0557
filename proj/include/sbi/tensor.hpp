#pragma once

// Dense tensors with reverse-mode differentiation.
//
// A Tensor is a shared handle to a graph node. Operations executed while
// gradient recording is enabled link their result to their inputs; calling
// backward() on a scalar walks that record once in reverse topological order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbi::ad {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an index (token id, target) is out of range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t last_dim() const { return node_->shape.back(); }
  std::size_t rows() const { return size() / last_dim(); }

  std::span<const T> values() const { return node_->value; }
  /// Direct write access; only for leaves (parameters, inputs) between passes.
  std::span<T> mutable_values() { return node_->value; }
  T item() const;
  T at(std::size_t flat_index) const { return node_->value.at(flat_index); }

  bool requires_grad() const { return node_->requires_grad; }
  /// Gradient buffer; all zeros when nothing has been propagated.
  std::span<const T> grad() const;
  void zero_grad();

  /// Copy of the values with no graph history.
  Tensor detach() const;

  const char* op_name() const { return node_->op; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Whether operations are currently being recorded for differentiation.
bool grad_enabled();

/// Disables recording for the current thread while in scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---------------------------------------------------------------------------
// Operations. All shapes are row-major; "rows" means all leading dimensions
// flattened against the last one.

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
/// a + bias broadcast over every row; bias has shape [last_dim(a)].
template <class T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias);
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor);
/// a * s for a one-element tensor s.
template <class T>
Tensor<T> mul_scalar(const Tensor<T>& a, const Tensor<T>& s);

template <class T>
Tensor<T> tanh(const Tensor<T>& a);
template <class T>
Tensor<T> sigmoid(const Tensor<T>& a);
template <class T>
Tensor<T> relu(const Tensor<T>& a);

template <class T>
Tensor<T> sum(const Tensor<T>& a);
template <class T>
Tensor<T> mean(const Tensor<T>& a);

/// Concatenate along the last axis; leading dimensions must agree.
template <class T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts);
/// Columns [begin, end) of the last axis.
template <class T>
Tensor<T> slice_last(const Tensor<T>& a, std::size_t begin, std::size_t end);
template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

/// Rows of a [N, d] table selected by index; result shape is out_shape + [d].
template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::int32_t> indices, Shape out_shape);
/// Stack equally shaped tensors along a new leading axis.
template <class T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts);

/// Row r of the result is a[r] where keep[r] != 0, else b[r].
template <class T>
Tensor<T> select_rows(std::span<const std::uint8_t> keep, const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
template <class T>
Tensor<T> log_softmax(const Tensor<T>& x);

inline constexpr double kLayerNormEpsilon = 1e-6;

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias);

/// Mean cross entropy of logits [n, V] against targets smoothed by
/// `label_smoothing`: q = (1 - eps) * onehot + eps / V. Rows whose mask entry is
/// zero are excluded; an empty mask means every row counts.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets, double label_smoothing,
                        std::span<const std::uint8_t> mask = {});

/// Inverted dropout; identity when p == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& a, double p, std::mt19937_64& rng);

/// What a query row with no visible key produces.
enum class EmptyRows {
  kError,  // throw std::invalid_argument
  kZero,   // zero output row, zero gradient
};

/// Multi-head scaled dot-product attention.
///
/// q: [B, Tq, d], k: [B, Tk, d], v: [B, Tk, dv]. `additive_mask` holds B*Tq*Tk
/// entries added to the scores before the softmax (use -inf to hide a key), or
/// is empty for no mask. Heads split d and dv into equal column slices.
/// When `weights_out` is non-null it receives the B*heads*Tq*Tk attention rows.
template <class T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                    std::span<const T> additive_mask, EmptyRows empty_rows, std::vector<T>* weights_out = nullptr);

/// Additive (Bahdanau) attention.
///
/// query_proj: [B, d] (already W·z), keys_proj: [B, M, d] (already U·h),
/// score: [d], values: [B, M, dv]. visible has B*M entries. Returns [B, dv]
/// with context = sum_j softmax_j(score · tanh(query + key_j)) * value_j; rows
/// with nothing visible get a zero context.
template <class T>
Tensor<T> additive_attention(const Tensor<T>& query_proj, const Tensor<T>& keys_proj, const Tensor<T>& score,
                             const Tensor<T>& values, std::span<const std::uint8_t> visible,
                             std::vector<T>* weights_out = nullptr);

/// Reverse pass from a scalar loss. Accumulates into every reachable
/// requires_grad tensor; returns the number of operations visited.
template <class T>
std::size_t backward(const Tensor<T>& loss);

// Operator sugar for the common binary ops.
template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}

}  // namespace sbi::ad
