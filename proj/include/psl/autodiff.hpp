// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode automatic differentiation over dense float64
// tensors. Each op allocates a new graph node; a node records its parents and
// a backward closure only when at least one input requires a gradient.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace psl {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

enum class OpKind {
  add,
  sub,
  mul,
  matmul,
  scale,
  sum,
  mean,
  relu,
  silu,
  tanh,
  square,
  concat,
  broadcast,
  mse,
};

std::string_view op_name(OpKind kind);
/// Throws ConfigError for names outside the supported op set.
OpKind parse_op_kind(std::string_view name);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// 2-D tensor with a single row.
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Direct write access; intended for leaves (parameters and inputs).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  /// Drops the gradient buffer entirely.
  void clear_grad();

  std::uint64_t id() const;
  const std::string& name() const;
  void set_name(std::string name);
  bool is_leaf() const;

  /// Leaf copy of the values that does not require a gradient.
  Tensor detach() const;

  detail::Node* node() const noexcept { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct OpBuilder;
};

/// Extra arguments for ops that take a non-tensor parameter.
struct OpParams {
  double factor = 1.0;       // scale
  std::size_t rows = 0;      // broadcast target row count
};

/// Generic op entry point. Shape mismatches raise DimensionError naming the op.
Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, OpParams params = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor square(const Tensor& a);
/// Concatenates 2-D tensors with equal row counts along columns.
Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
/// Repeats a [n] or [1,n] tensor to [rows,n].
Tensor broadcast(const Tensor& a, std::size_t rows);
/// Mean squared difference, a scalar.
Tensor mse(const Tensor& a, const Tensor& b);

/// Accumulates d(loss)/d(leaf) into every leaf that requires a gradient.
/// A loss that does not require a gradient is a no-op.
void backward(const Tensor& loss);

}  // namespace psl
