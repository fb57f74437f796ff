#pragma once

// Define-by-run reverse-mode differentiation over dense row-major tensors of
// rank <= 2. Ops record onto the thread's active Tape (see TapeScope) only when
// some input requires a gradient; without an active tape they compute values.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tpp::ad {

using Shape = std::vector<std::size_t>;

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;

  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return constant(Shape{rows, cols}, std::move(values));
  }
  static Tensor full(std::size_t rows, std::size_t cols, double v);
  static Tensor scalar(double v) { return full(1, 1, v); }
  /// Leaf that accumulates gradients.
  static Tensor parameter(std::size_t rows, std::size_t cols, std::vector<double> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->rows(); }
  std::size_t cols() const { return node_->cols(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  /// Mutable access for parameter updates; not for use on recorded nodes.
  std::span<double> mutable_values() { return node_->value; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const;

  /// Gradient (zeros if nothing has flowed in yet).
  std::vector<double> grad() const;
  void zero_grad() { node_->grad.clear(); }

  /// Value copy without gradient tracking.
  Tensor detach() const { return constant(shape(), node_->value); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape() { reset(); }

  void record(NodePtr node) { nodes_.push_back(std::move(node)); }
  /// Fills gradients of every requires_grad ancestor of `loss`.
  /// Throws NonScalarLoss, or TapeConsumed on a second call without reset().
  void backward(const Tensor& loss);
  void reset();
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<NodePtr> nodes_;
  bool consumed_ = false;
};

/// Installs a tape as the thread's active tape for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Suspends recording for its lifetime (inference paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

/// Builds a node from precomputed values. When any parent requires a gradient
/// and a tape is active, the node is recorded and `backward` will be invoked
/// with the node once its gradient is complete.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   BackwardFn backward);

// Elementwise binary ops accept equal shapes or an operand that broadcasts
// (1x1, 1xN or Bx1) to the other's shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws DomainError on non-positive input.
Tensor log(const Tensor& a);
/// max(x,0) + log1p(exp(-|x|)).
Tensor softplus(const Tensor& a);
/// expm1(x)/x with the removable singularity filled in.
Tensor exprel(const Tensor& a);
/// log of the standard normal CDF.
Tensor log_ndtr(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);       // -> 1x1
Tensor mean(const Tensor& a);      // -> 1x1
Tensor sum_cols(const Tensor& a);  // row sums -> Bx1
Tensor sum_rows(const Tensor& a);  // column sums -> 1xN
/// Sums each run of `group` consecutive rows: (R*group) x N -> R x N.
Tensor sum_row_groups(const Tensor& a, std::size_t group);

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t len);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
/// Selects rows by index (with repetition allowed).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
Tensor broadcast(const Tensor& a, std::size_t rows, std::size_t cols);

// Composites.
Tensor logsumexp_cols(const Tensor& a);  // -> Bx1
Tensor log_softmax_cols(const Tensor& a);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);

struct GradCheckEntry {
  std::size_t param = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Compares tape gradients of `f` against central differences. `f` must build
/// its loss from `params` afresh on every call. Relative error is
/// |a - n| / max(|a|, |n|, abs_floor).
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           double step = 1e-5, double tol = 1e-4, double abs_floor = 1e-5);

}  // namespace tpp::ad
