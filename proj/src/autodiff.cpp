// SPDX-License-Identifier: Apache-2.0
#include "psl/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "psl/error.hpp"

namespace psl {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(std::size_t i, double g) {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    grad[i] += g;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
  }
};

namespace {
std::atomic<std::uint64_t> next_node_id{1};
}

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> values) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace detail

using detail::Node;

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::matmul: return "matmul";
    case OpKind::scale: return "scale";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::relu: return "relu";
    case OpKind::silu: return "silu";
    case OpKind::tanh: return "tanh";
    case OpKind::square: return "square";
    case OpKind::concat: return "concat";
    case OpKind::broadcast: return "broadcast";
    case OpKind::mse: return "mse";
  }
  return "?";
}

OpKind parse_op_kind(std::string_view name) {
  for (int k = 0; k <= static_cast<int>(OpKind::mse); ++k) {
    auto kind = static_cast<OpKind>(k);
    if (op_name(kind) == name) return kind;
  }
  throw ConfigError("unknown op kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Tensor

namespace {
void check_extents(const Shape& shape) {
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
}
}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_extents(shape);
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_extents(shape);
  if (values.size() != shape_numel(shape))
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_to_string(shape));
  auto node = detail::make_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  auto n = values.size();
  return from({1, n}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->values.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on non-matrix of shape " + shape_to_string(shape()));
  return shape()[0];
}
std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on non-matrix of shape " + shape_to_string(shape()));
  return shape()[1];
}

std::span<const double> Tensor::values() const { return node_->values; }
std::span<double> Tensor::mutable_values() { return node_->values; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->values[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->values[r * cols() + c]; }

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}
void Tensor::clear_grad() {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

std::uint64_t Tensor::id() const { return node_->id; }
const std::string& Tensor::name() const { return node_->name; }
void Tensor::set_name(std::string name) { node_->name = std::move(name); }
bool Tensor::is_leaf() const { return node_->parents.empty(); }

Tensor Tensor::detach() const { return from(shape(), node_->values, false); }

// ---------------------------------------------------------------------------
// Ops

struct OpBuilder {
  static Tensor make(Shape shape, std::vector<double> values, std::span<const Tensor> inputs,
                     std::function<void(Node&)> backward_fn) {
    auto node = detail::make_node(std::move(shape), std::move(values));
    bool record = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (record) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (const auto& in : inputs) node->parents.push_back(in.node_);
      node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
  }
};

namespace {

[[noreturn]] void shape_error(OpKind kind, std::span<const Tensor> inputs, const std::string& detail = "") {
  std::ostringstream os;
  os << op_name(kind) << ": incompatible shapes";
  for (const auto& t : inputs) os << ' ' << shape_to_string(t.shape());
  if (!detail.empty()) os << " (" << detail << ')';
  throw DimensionError(os.str());
}

void require_arity(OpKind kind, std::span<const Tensor> inputs, std::size_t n) {
  if (inputs.size() != n)
    throw ConfigError(std::string(op_name(kind)) + " expects " + std::to_string(n) + " inputs, got " +
                      std::to_string(inputs.size()));
  for (const auto& t : inputs)
    if (!t.defined()) throw ContractError(std::string(op_name(kind)) + ": undefined input tensor");
}

void require_same_shape(OpKind kind, std::span<const Tensor> inputs) {
  if (inputs[0].shape() != inputs[1].shape()) shape_error(kind, inputs);
}

Tensor binary_elementwise(OpKind kind, std::span<const Tensor> in) {
  require_arity(kind, in, 2);
  require_same_shape(kind, in);
  const auto a = in[0].values();
  const auto b = in[1].values();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (kind) {
      case OpKind::add: out[i] = a[i] + b[i]; break;
      case OpKind::sub: out[i] = a[i] - b[i]; break;
      default: out[i] = a[i] * b[i]; break;
    }
  }
  return OpBuilder::make(in[0].shape(), std::move(out), in, [kind](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const auto n = self.values.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = self.grad[i];
      switch (kind) {
        case OpKind::add:
          if (na.requires_grad) na.accumulate(i, g);
          if (nb.requires_grad) nb.accumulate(i, g);
          break;
        case OpKind::sub:
          if (na.requires_grad) na.accumulate(i, g);
          if (nb.requires_grad) nb.accumulate(i, -g);
          break;
        default:
          if (na.requires_grad) na.accumulate(i, g * nb.values[i]);
          if (nb.requires_grad) nb.accumulate(i, g * na.values[i]);
          break;
      }
    }
  });
}

Tensor matmul_op(std::span<const Tensor> in) {
  require_arity(OpKind::matmul, in, 2);
  const auto& A = in[0];
  const auto& B = in[1];
  if (A.rank() != 2 || B.rank() != 2 || A.shape()[1] != B.shape()[0]) shape_error(OpKind::matmul, in);
  const std::size_t m = A.shape()[0], k = A.shape()[1], n = B.shape()[1];
  const auto a = A.values();
  const auto b = B.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = &b[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  return OpBuilder::make({m, n}, std::move(out), in, [m, k, n](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const auto& g = self.grad;
    if (na.requires_grad) {
      na.ensure_grad();
      // dA = G B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * nb.values[p * n + j];
          na.grad[i * k + p] += acc;
        }
    }
    if (nb.requires_grad) {
      nb.ensure_grad();
      // dB = A^T G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = na.values[i * k + p];
          for (std::size_t j = 0; j < n; ++j) nb.grad[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Tensor scale_op(std::span<const Tensor> in, double factor) {
  require_arity(OpKind::scale, in, 1);
  std::vector<double> out(in[0].values().begin(), in[0].values().end());
  for (auto& v : out) v *= factor;
  return OpBuilder::make(in[0].shape(), std::move(out), in, [factor](Node& self) {
    Node& na = *self.parents[0];
    for (std::size_t i = 0; i < self.values.size(); ++i) na.accumulate(i, factor * self.grad[i]);
  });
}

Tensor reduce_op(OpKind kind, std::span<const Tensor> in) {
  require_arity(kind, in, 1);
  const auto a = in[0].values();
  double acc = 0.0;
  for (double v : a) acc += v;
  const double denom = kind == OpKind::mean ? static_cast<double>(a.size()) : 1.0;
  return OpBuilder::make({}, {acc / denom}, in, [denom](Node& self) {
    Node& na = *self.parents[0];
    const double g = self.grad[0] / denom;
    for (std::size_t i = 0; i < na.values.size(); ++i) na.accumulate(i, g);
  });
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor unary_op(OpKind kind, std::span<const Tensor> in) {
  require_arity(kind, in, 1);
  const auto a = in[0].values();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    switch (kind) {
      case OpKind::relu: out[i] = x > 0.0 ? x : 0.0; break;
      case OpKind::silu: out[i] = x * sigmoid(x); break;
      case OpKind::tanh: out[i] = std::tanh(x); break;
      default: out[i] = x * x; break;
    }
  }
  return OpBuilder::make(in[0].shape(), std::move(out), in, [kind](Node& self) {
    Node& na = *self.parents[0];
    for (std::size_t i = 0; i < self.values.size(); ++i) {
      const double x = na.values[i];
      double d = 0.0;
      switch (kind) {
        case OpKind::relu: d = x > 0.0 ? 1.0 : 0.0; break;
        case OpKind::silu: {
          const double s = sigmoid(x);
          d = s * (1.0 + x * (1.0 - s));
          break;
        }
        case OpKind::tanh: d = 1.0 - self.values[i] * self.values[i]; break;
        default: d = 2.0 * x; break;
      }
      na.accumulate(i, d * self.grad[i]);
    }
  });
}

Tensor concat_op(std::span<const Tensor> in) {
  if (in.empty()) throw ConfigError("concat expects at least one input");
  for (const auto& t : in)
    if (!t.defined()) throw ContractError("concat: undefined input tensor");
  const std::size_t m = in[0].rank() == 2 ? in[0].shape()[0] : 0;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& t : in) {
    if (t.rank() != 2 || t.shape()[0] != m) shape_error(OpKind::concat, in);
    widths.push_back(t.shape()[1]);
    total += t.shape()[1];
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < in.size(); ++p) {
    const auto v = in[p].values();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(&v[i * widths[p]], widths[p], &out[i * total + offset]);
    offset += widths[p];
  }
  return OpBuilder::make({m, total}, std::move(out), in, [m, total, widths](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      Node& np = *self.parents[p];
      if (np.requires_grad) {
        np.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[p]; ++j) np.grad[i * widths[p] + j] += self.grad[i * total + offset + j];
      }
      offset += widths[p];
    }
  });
}

Tensor broadcast_op(std::span<const Tensor> in, std::size_t rows) {
  require_arity(OpKind::broadcast, in, 1);
  const auto& a = in[0];
  std::size_t n = 0;
  if (a.rank() == 1) {
    n = a.shape()[0];
  } else if (a.rank() == 2 && a.shape()[0] == 1) {
    n = a.shape()[1];
  } else {
    shape_error(OpKind::broadcast, in, "expects [n] or [1,n]");
  }
  if (rows == 0) shape_error(OpKind::broadcast, in, "target rows must be positive");
  const auto v = a.values();
  std::vector<double> out(rows * n);
  for (std::size_t i = 0; i < rows; ++i) std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(i * n));
  return OpBuilder::make({rows, n}, std::move(out), in, [rows, n](Node& self) {
    Node& na = *self.parents[0];
    na.ensure_grad();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < n; ++j) na.grad[j] += self.grad[i * n + j];
  });
}

Tensor mse_op(std::span<const Tensor> in) {
  require_arity(OpKind::mse, in, 2);
  require_same_shape(OpKind::mse, in);
  const auto a = in[0].values();
  const auto b = in[1].values();
  const double count = static_cast<double>(a.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return OpBuilder::make({}, {acc / count}, in, [count](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const double g = self.grad[0] * 2.0 / count;
    for (std::size_t i = 0; i < na.values.size(); ++i) {
      const double d = na.values[i] - nb.values[i];
      if (na.requires_grad) na.accumulate(i, g * d);
      if (nb.requires_grad) nb.accumulate(i, -g * d);
    }
  });
}

}  // namespace

Tensor forward_op(OpKind kind, std::span<const Tensor> inputs, OpParams params) {
  switch (kind) {
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul: return binary_elementwise(kind, inputs);
    case OpKind::matmul: return matmul_op(inputs);
    case OpKind::scale: return scale_op(inputs, params.factor);
    case OpKind::sum:
    case OpKind::mean: return reduce_op(kind, inputs);
    case OpKind::relu:
    case OpKind::silu:
    case OpKind::tanh:
    case OpKind::square: return unary_op(kind, inputs);
    case OpKind::concat: return concat_op(inputs);
    case OpKind::broadcast: return broadcast_op(inputs, params.rows);
    case OpKind::mse: return mse_op(inputs);
  }
  throw ConfigError("unknown op kind");
}

namespace {
Tensor op2(OpKind kind, const Tensor& a, const Tensor& b) {
  const Tensor in[2] = {a, b};
  return forward_op(kind, in);
}
Tensor op1(OpKind kind, const Tensor& a, OpParams p = {}) {
  const Tensor in[1] = {a};
  return forward_op(kind, in, p);
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return op2(OpKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return op2(OpKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return op2(OpKind::mul, a, b); }
Tensor matmul(const Tensor& a, const Tensor& b) { return op2(OpKind::matmul, a, b); }
Tensor scale(const Tensor& a, double factor) { return op1(OpKind::scale, a, {.factor = factor}); }
Tensor sum(const Tensor& a) { return op1(OpKind::sum, a); }
Tensor mean(const Tensor& a) { return op1(OpKind::mean, a); }
Tensor relu(const Tensor& a) { return op1(OpKind::relu, a); }
Tensor silu(const Tensor& a) { return op1(OpKind::silu, a); }
Tensor tanh(const Tensor& a) { return op1(OpKind::tanh, a); }
Tensor square(const Tensor& a) { return op1(OpKind::square, a); }
Tensor concat(std::span<const Tensor> parts) { return forward_op(OpKind::concat, parts); }
Tensor concat(std::initializer_list<Tensor> parts) {
  return forward_op(OpKind::concat, std::span<const Tensor>(parts.begin(), parts.size()));
}
Tensor broadcast(const Tensor& a, std::size_t rows) { return op1(OpKind::broadcast, a, {.rows = rows}); }
Tensor mse(const Tensor& a, const Tensor& b) { return op2(OpKind::mse, a, b); }

// ---------------------------------------------------------------------------
// Backward

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on undefined tensor");
  if (loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got shape " + shape_to_string(loss.shape()));
  Node* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS over nodes that participate in gradient flow.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.contains(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are per-call scratch; leaf gradients accumulate.
  for (Node* n : order)
    if (!n->parents.empty()) n->grad.assign(n->values.size(), 0.0);
  root->accumulate(0, 1.0);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
  for (Node* n : order)
    if (!n->parents.empty()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
}

}  // namespace psl
