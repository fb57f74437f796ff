#include "tpp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "tpp/error.hpp"
#include "tpp/stats.hpp"

namespace tpp::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

thread_local Tape* g_active = nullptr;

Shape shape2(std::size_t r, std::size_t c) { return Shape{r, c}; }

std::string shape_str(const Tensor& t) {
  return "(" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")";
}

void check_rank(const Shape& s) {
  if (s.size() > 2) throw Error(ErrorCode::ShapeMismatch, "rank > 2 tensors are not supported");
}

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

void accumulate(Node& parent, const std::vector<double>& g) {
  if (!parent.requires_grad) return;
  auto& pg = parent.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
}

template <class F, class D>
Tensor unary(const Tensor& a, F f, D dfdx) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_result(a.shape(), std::move(out), {a}, [dfdx](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.ensure_grad();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      pg[i] += self.grad[i] * dfdx(p.value[i], self.value[i]);
    }
  });
}

// Broadcasts operands of an elementwise op to a common shape.
std::pair<Tensor, Tensor> align(const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return {a, b};
  const std::size_t r = std::max(a.rows(), b.rows());
  const std::size_t c = std::max(a.cols(), b.cols());
  auto fits = [&](const Tensor& t) {
    return (t.rows() == r || t.rows() == 1) && (t.cols() == c || t.cols() == 1);
  };
  if (!fits(a) || !fits(b)) {
    throw Error(ErrorCode::ShapeMismatch, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
  }
  return {broadcast(a, r, c), broadcast(b, r, c)};
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  check_rank(shape);
  if (numel(shape) != values.size()) {
    throw Error(ErrorCode::ShapeMismatch, "value count does not match shape");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double v) {
  return constant(shape2(rows, cols), std::vector<double>(rows * cols, v));
}

Tensor Tensor::parameter(std::size_t rows, std::size_t cols, std::vector<double> values) {
  Tensor t = constant(shape2(rows, cols), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw Error(ErrorCode::NonScalarLoss, "item() on non-scalar " + shape_str(*this));
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw Error(ErrorCode::TapeConsumed, "backward already ran on this tape");
  if (loss.size() != 1) throw Error(ErrorCode::NonScalarLoss, "loss has shape " + shape_str(loss));
  consumed_ = true;
  if (!loss.requires_grad()) return;
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.grad.empty() && n.backward) n.backward(n);
    // The graph is single-use; dropping edges now keeps teardown iterative.
    n.backward = nullptr;
    n.parents.clear();
  }
}

void Tape::reset() {
  // Release in reverse creation order to keep destructor recursion shallow.
  while (!nodes_.empty()) nodes_.pop_back();
  consumed_ = false;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

Tape* active_tape() { return g_active; }

NoGradGuard::NoGradGuard() : previous_(g_active) { g_active = nullptr; }
NoGradGuard::~NoGradGuard() { g_active = previous_; }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                   BackwardFn backward) {
  check_rank(shape);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs && g_active != nullptr) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
    g_active->record(n);
  }
  return Tensor(std::move(n));
}

Tensor broadcast(const Tensor& a, std::size_t rows, std::size_t cols) {
  if (a.rows() == rows && a.cols() == cols) return a;
  if ((a.rows() != rows && a.rows() != 1) || (a.cols() != cols && a.cols() != 1)) {
    throw Error(ErrorCode::ShapeMismatch, "cannot broadcast " + shape_str(a) + " to (" +
                                              std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
  const std::size_t ar = a.rows(), ac = a.cols();
  const auto& av = a.values();
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out[r * cols + c] = av[(ar == 1 ? 0 : r) * ac + (ac == 1 ? 0 : c)];
  return make_result(shape2(rows, cols), std::move(out), {a}, [ar, ac, rows, cols](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        pg[(ar == 1 ? 0 : r) * ac + (ac == 1 ? 0 : c)] += self.grad[r * cols + c];
  });
}

Tensor add(const Tensor& a0, const Tensor& b0) {
  auto [a, b] = align(a0, b0);
  std::vector<double> out(a.size());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad);
  });
}

Tensor sub(const Tensor& a0, const Tensor& b0) {
  auto [a, b] = align(a0, b0);
  std::vector<double> out(a.size());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    Node& q = *self.parents[1];
    if (!q.requires_grad) return;
    auto& qg = q.ensure_grad();
    for (std::size_t i = 0; i < qg.size(); ++i) qg[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a0, const Tensor& b0) {
  auto [a, b] = align(a0, b0);
  std::vector<double> out(a.size());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& p = *self.parents[0];
    Node& q = *self.parents[1];
    if (p.requires_grad) {
      auto& pg = p.ensure_grad();
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] * q.value[i];
    }
    if (q.requires_grad) {
      auto& qg = q.ensure_grad();
      for (std::size_t i = 0; i < qg.size(); ++i) qg[i] += self.grad[i] * p.value[i];
    }
  });
}

Tensor div(const Tensor& a0, const Tensor& b0) {
  auto [a, b] = align(a0, b0);
  std::vector<double> out(a.size());
  const auto &av = a.values(), &bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (bv[i] == 0.0) throw Error(ErrorCode::DomainError, "division by zero");
    out[i] = av[i] / bv[i];
  }
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& p = *self.parents[0];
    Node& q = *self.parents[1];
    if (p.requires_grad) {
      auto& pg = p.ensure_grad();
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] / q.value[i];
    }
    if (q.requires_grad) {
      auto& qg = q.ensure_grad();
      for (std::size_t i = 0; i < qg.size(); ++i) qg[i] -= self.grad[i] * self.value[i] / q.value[i];
    }
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "matmul " + shape_str(a) + " x " + shape_str(b));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> out(n * m);
  Map(out.data(), n, m).noalias() = MapC(a.values().data(), n, k) * MapC(b.values().data(), k, m);
  return make_result(shape2(n, m), std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& p = *self.parents[0];
    Node& q = *self.parents[1];
    MapC g(self.grad.data(), n, m);
    if (p.requires_grad) {
      Map(p.ensure_grad().data(), n, k).noalias() += g * MapC(q.value.data(), k, m).transpose();
    }
    if (q.requires_grad) {
      Map(q.ensure_grad().data(), k, m).noalias() += MapC(p.value.data(), n, k).transpose() * g;
    }
  });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double x : a.values()) {
    if (!(x > 0.0)) throw Error(ErrorCode::DomainError, "log of non-positive value " + std::to_string(x));
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

namespace {

double exprel_value(double x) {
  if (std::abs(x) < 1e-5) return 1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0;
  return std::expm1(x) / x;
}

double exprel_deriv(double x) {
  // d/dx (e^x - 1)/x = (x e^x - e^x + 1) / x^2
  if (std::abs(x) < 1e-3) return 0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0;
  return (x * std::exp(x) - std::expm1(x)) / (x * x);
}

}  // namespace

Tensor exprel(const Tensor& a) {
  return unary(a, exprel_value, [](double x, double) { return exprel_deriv(x); });
}

Tensor log_ndtr(const Tensor& a) {
  return unary(a, stats::log_normal_cdf, [](double x, double y) {
    const double log_pdf = -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
    return std::exp(log_pdf - y);
  });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return make_result(shape2(1, 1), {s}, {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (double& g : p.ensure_grad()) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor sum_cols(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r, 0.0);
  const auto& av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += av[i * c + j];
  return make_result(shape2(r, 1), std::move(out), {a}, [r, c](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) pg[i * c + j] += self.grad[i];
  });
}

Tensor sum_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(c, 0.0);
  const auto& av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += av[i * c + j];
  return make_result(shape2(1, c), std::move(out), {a}, [r, c](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) pg[i * c + j] += self.grad[j];
  });
}

Tensor sum_row_groups(const Tensor& a, std::size_t group) {
  const std::size_t r = a.rows(), c = a.cols();
  if (group == 0 || r % group != 0) throw Error(ErrorCode::ShapeMismatch, "row count not divisible by group");
  const std::size_t out_r = r / group;
  std::vector<double> out(out_r * c, 0.0);
  const auto& av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[(i / group) * c + j] += av[i * c + j];
  return make_result(shape2(out_r, c), std::move(out), {a}, [r, c, group](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) pg[i * c + j] += self.grad[(i / group) * c + j];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
  const std::size_t r = a.rows(), c = a.cols();
  if (start + len > c) throw Error(ErrorCode::ShapeMismatch, "column slice out of range");
  std::vector<double> out(r * len);
  const auto& av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(i * c + start), len,
                out.begin() + static_cast<std::ptrdiff_t>(i * len));
  return make_result(shape2(r, len), std::move(out), {a}, [r, c, start, len](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < len; ++j) pg[i * c + start + j] += self.grad[i * len + j];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t len) {
  const std::size_t r = a.rows(), c = a.cols();
  if (start + len > r) throw Error(ErrorCode::ShapeMismatch, "row slice out of range");
  const auto& av = a.values();
  std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(start * c),
                          av.begin() + static_cast<std::ptrdiff_t>((start + len) * c));
  return make_result(shape2(len, c), std::move(out), {a}, [c, start](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) pg[start * c + i] += self.grad[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rows() != r) throw Error(ErrorCode::ShapeMismatch, "concat_cols row mismatch");
    offsets.push_back(c);
    c += p.cols();
  }
  std::vector<double> out(r * c);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].values();
    const std::size_t pc = parts[k].cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < pc; ++j) out[i * c + offsets[k] + j] = pv[i * pc + j];
  }
  return make_result(shape2(r, c), std::move(out), parts, [r, c, offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& pg = p.ensure_grad();
      const std::size_t pc = p.cols();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < pc; ++j) pg[i * pc + j] += self.grad[i * c + offsets[k] + j];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  const std::size_t c = parts[0].cols();
  std::size_t r = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.cols() != c) throw Error(ErrorCode::ShapeMismatch, "concat_rows column mismatch");
    r += p.rows();
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return make_result(shape2(r, c), std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& pp : self.parents) {
      Node& p = *pp;
      if (p.requires_grad) {
        auto& pg = p.ensure_grad();
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[off + i];
      }
      off += p.value.size();
    }
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t c = a.cols();
  const auto& av = a.values();
  std::vector<double> out(index.size() * c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= a.rows()) throw Error(ErrorCode::ShapeMismatch, "gather index out of range");
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(index[i] * c), c,
                out.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result(shape2(idx.size(), c), std::move(out), {a}, [idx, c](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) pg[idx[i] * c + j] += self.grad[i * c + j];
  });
}

Tensor logsumexp_cols(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> m(r, -INFINITY);
  const auto& av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m[i] = std::max(m[i], av[i * c + j]);
  for (double& x : m)
    if (!std::isfinite(x)) x = 0.0;
  // The shift is a constant; the result is exact for any shift value.
  const Tensor shift = Tensor::constant(shape2(r, 1), m);
  return add(log(sum_cols(exp(sub(a, shift)))), shift);
}

Tensor log_softmax_cols(const Tensor& a) { return sub(a, logsumexp_cols(a)); }

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator-(const Tensor& a) { return neg(a); }

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                           double step, double tol, double abs_floor) {
  for (auto& p : params) p.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const std::vector<double> analytic = params[pi].grad();
    auto vals = params[pi].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + step;
      const double fp = f().item();
      vals[i] = orig - step;
      const double fm = f().item();
      vals[i] = orig;
      GradCheckEntry e;
      e.param = pi;
      e.index = i;
      e.analytic = analytic[i];
      e.numeric = (fp - fm) / (2.0 * step);
      e.rel_error = std::abs(e.analytic - e.numeric) /
                    std::max({std::abs(e.analytic), std::abs(e.numeric), abs_floor});
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      report.entries.push_back(e);
    }
  }
  for (auto& p : params) p.zero_grad();
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace tpp::ad
