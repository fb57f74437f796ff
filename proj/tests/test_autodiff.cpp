#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "tpp/autodiff.hpp"
#include "tpp/error.hpp"
#include "tpp/random.hpp"

using namespace tpp;
using ad::Tensor;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * uniform01(rng);
  return v;
}

std::size_t random_dim(Rng& rng) { return 1 + static_cast<std::size_t>(uniform01(rng) * 4.0); }

// Weighted sum so that every output coordinate carries a distinct cotangent.
Tensor weighted(const Tensor& y, Rng& rng) {
  return ad::sum(ad::mul(y, Tensor::constant(y.rows(), y.cols(), random_values(y.size(), rng, -1.0, 1.0))));
}

void check_unary(const std::string& name, const std::function<Tensor(const Tensor&)>& op, double lo, double hi) {
  Rng rng = make_rng(17, {std::hash<std::string>{}(name)});
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = random_dim(rng), c = random_dim(rng);
    Tensor x = Tensor::parameter(r, c, random_values(r * c, rng, lo, hi));
    Rng wr = make_rng(trial, {1});
    const auto weights = random_values(r * c, wr, -1.0, 1.0);
    auto f = [&] { return ad::sum(ad::mul(op(x), Tensor::constant(r, c, weights))); };
    const auto rep = ad::grad_check(f, {x}, 1e-5, 1e-4);
    ASSERT_TRUE(rep.passed) << name << " trial " << trial << " max rel " << rep.max_rel_error;
  }
}

void check_binary(const std::string& name, const std::function<Tensor(const Tensor&, const Tensor&)>& op,
                  bool broadcast_b, double lo_b = -2.0) {
  Rng rng = make_rng(23, {std::hash<std::string>{}(name)});
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = random_dim(rng), c = random_dim(rng);
    std::size_t br = r, bc = c;
    if (broadcast_b) {
      const double u = uniform01(rng);
      if (u < 0.33) br = 1;
      else if (u < 0.66) bc = 1;
      else br = bc = 1;
    }
    Tensor a = Tensor::parameter(r, c, random_values(r * c, rng, -2.0, 2.0));
    Tensor b = Tensor::parameter(br, bc, random_values(br * bc, rng, lo_b, 2.0));
    const auto weights = random_values(r * c, rng, -1.0, 1.0);
    auto f = [&] { return ad::sum(ad::mul(op(a, b), Tensor::constant(r, c, weights))); };
    const auto rep = ad::grad_check(f, {a, b}, 1e-5, 1e-4);
    ASSERT_TRUE(rep.passed) << name << " trial " << trial << " max rel " << rep.max_rel_error;
  }
}

}  // namespace

TEST(Autodiff, SoftplusAtZero) {
  Tensor x = Tensor::parameter(1, 1, {0.0});
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const Tensor y = ad::softplus(x);
  EXPECT_NEAR(y.item(), std::log(2.0), 1e-15);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.5);
}

TEST(Autodiff, SoftplusIsOverflowSafe) {
  const Tensor y = ad::softplus(Tensor::constant(1, 3, {800.0, -800.0, 30.0}));
  EXPECT_EQ(y.at(0, 0), 800.0);
  EXPECT_GE(y.at(0, 1), 0.0);
  EXPECT_TRUE(std::isfinite(y.at(0, 1)));
  EXPECT_NEAR(y.at(0, 2), 30.0 + std::log1p(std::exp(-30.0)), 1e-12);
}

TEST(Autodiff, MatmulShape) {
  const Tensor a = Tensor::full(2, 3, 1.0), b = Tensor::full(3, 4, 2.0);
  const Tensor c = ad::matmul(a, b);
  EXPECT_EQ(c.rows(), 2u);
  EXPECT_EQ(c.cols(), 4u);
  EXPECT_EQ(c.at(1, 3), 6.0);
  try {
    ad::matmul(a, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Autodiff, TanhGradientAtZero) {
  Tensor x = Tensor::parameter(1, 5, std::vector<double>(5, 0.0));
  ad::Tape tape;
  ad::TapeScope scope(tape);
  tape.backward(ad::sum(ad::tanh(x)));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Autodiff, QuadraticGradient) {
  Tensor w = Tensor::parameter(1, 2, {1.0, 2.0});
  ad::Tape tape;
  ad::TapeScope scope(tape);
  tape.backward(ad::sum(ad::mul(w, w)));
  EXPECT_EQ(w.grad(), (std::vector<double>{2.0, 4.0}));
}

TEST(Autodiff, IndependentLossGivesZeroGradient) {
  Tensor w = Tensor::parameter(1, 2, {1.0, 2.0});
  Tensor v = Tensor::parameter(1, 1, {3.0});
  ad::Tape tape;
  ad::TapeScope scope(tape);
  tape.backward(ad::sum(ad::exp(v)));
  EXPECT_EQ(w.grad(), (std::vector<double>{0.0, 0.0}));
}

TEST(Autodiff, BackwardErrors) {
  Tensor w = Tensor::parameter(1, 2, {1.0, 2.0});
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const Tensor y = ad::mul(w, w);
  try {
    tape.backward(y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonScalarLoss);
  }
  const Tensor s = ad::sum(y);
  tape.backward(s);
  try {
    tape.backward(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TapeConsumed);
  }
  tape.reset();
  EXPECT_FALSE(tape.consumed());
}

TEST(Autodiff, LogDomainError) {
  try {
    ad::log(Tensor::constant(1, 2, {1.0, 0.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DomainError);
  }
}

TEST(Autodiff, BroadcastMismatch) {
  EXPECT_THROW(ad::add(Tensor::full(2, 3, 1.0), Tensor::full(3, 2, 1.0)), Error);
}

TEST(Autodiff, GradientsAccumulateAcrossUses) {
  Tensor x = Tensor::parameter(1, 1, {3.0});
  ad::Tape tape;
  ad::TapeScope scope(tape);
  tape.backward(ad::sum(x + x + ad::mul(x, x)));
  EXPECT_EQ(x.grad()[0], 8.0);
}

TEST(Autodiff, NoRecordingWithoutTape) {
  Tensor x = Tensor::parameter(1, 1, {3.0});
  const Tensor y = ad::exp(x);
  EXPECT_FALSE(y.requires_grad());
  ad::Tape tape;
  ad::TapeScope scope(tape);
  {
    ad::NoGradGuard guard;
    EXPECT_FALSE(ad::exp(x).requires_grad());
  }
  EXPECT_TRUE(ad::exp(x).requires_grad());
}

TEST(Autodiff, LinearityOfBackward) {
  Rng rng = make_rng(5, {});
  Tensor x = Tensor::parameter(3, 2, random_values(6, rng, -1.0, 1.0));
  auto f = [&] { return ad::sum(ad::tanh(ad::matmul(x, Tensor::constant(2, 2, {1, 2, 3, 4})))); };
  auto g = [&] { return ad::sum(ad::exp(x)); };
  auto grad_of = [&](const std::function<Tensor()>& h) {
    x.zero_grad();
    ad::Tape tape;
    ad::TapeScope scope(tape);
    tape.backward(h());
    return x.grad();
  };
  const auto gf = grad_of(f), gg = grad_of(g);
  const auto gc = grad_of([&] { return ad::scale(f(), 2.0) + ad::scale(g(), -3.0); });
  for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc[i], 2.0 * gf[i] - 3.0 * gg[i], 1e-14);
}

TEST(Autodiff, GradientsAreDeterministic) {
  auto run = [] {
    Rng rng = make_rng(9, {});
    Tensor x = Tensor::parameter(4, 3, random_values(12, rng, -1.0, 1.0));
    ad::Tape tape;
    ad::TapeScope scope(tape);
    tape.backward(ad::sum(ad::log_softmax_cols(ad::softplus(x))));
    return x.grad();
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, Square) {
  Tensor x = Tensor::parameter(1, 1, {3.0});
  const auto rep = ad::grad_check([&] { return ad::sum(ad::mul(x, x)); }, {x}, 1e-5, 1e-6);
  EXPECT_TRUE(rep.passed);
  ASSERT_EQ(rep.entries.size(), 1u);
  EXPECT_NEAR(rep.entries[0].analytic, 6.0, 1e-12);
  EXPECT_NEAR(rep.entries[0].numeric, 6.0, 1e-6);
}

TEST(GradCheck, SoftplusChainDepthTen) {
  Tensor x = Tensor::parameter(1, 3, {-1.0, 0.2, 1.5});
  auto f = [&] {
    Tensor y = x;
    for (int i = 0; i < 10; ++i) y = ad::softplus(ad::add_scalar(ad::scale(y, 0.9), -0.5));
    return ad::sum(y);
  };
  EXPECT_TRUE(ad::grad_check(f, {x}, 1e-5, 1e-4).passed);
}

TEST(GradCheck, DetectsWrongGradient) {
  Tensor x = Tensor::parameter(1, 1, {1.0});
  auto f = [&] {
    return ad::make_result({1, 1}, {x.item() * x.item()}, {x}, [](ad::Node& self) {
      auto& g = self.parents[0]->ensure_grad();
      g[0] += self.grad[0];  // should be 2x
    });
  };
  EXPECT_FALSE(ad::grad_check(f, {x}, 1e-5, 1e-4).passed);
}

TEST(Primitives, UnaryRandomized) {
  check_unary("tanh", [](const Tensor& x) { return ad::tanh(x); }, -3.0, 3.0);
  check_unary("sigmoid", [](const Tensor& x) { return ad::sigmoid(x); }, -4.0, 4.0);
  check_unary("exp", [](const Tensor& x) { return ad::exp(x); }, -2.0, 2.0);
  check_unary("log", [](const Tensor& x) { return ad::log(x); }, 0.2, 3.0);
  check_unary("softplus", [](const Tensor& x) { return ad::softplus(x); }, -5.0, 5.0);
  check_unary("exprel", [](const Tensor& x) { return ad::exprel(x); }, -3.0, 3.0);
  check_unary("log_ndtr", [](const Tensor& x) { return ad::log_ndtr(x); }, -6.0, 4.0);
  check_unary("square", [](const Tensor& x) { return ad::square(x); }, -2.0, 2.0);
  check_unary("neg", [](const Tensor& x) { return ad::neg(x); }, -2.0, 2.0);
  check_unary("scale", [](const Tensor& x) { return ad::scale(x, -1.7); }, -2.0, 2.0);
  check_unary("add_scalar", [](const Tensor& x) { return ad::add_scalar(x, 0.3); }, -2.0, 2.0);
  check_unary("log_softmax", [](const Tensor& x) { return ad::log_softmax_cols(x); }, -3.0, 3.0);
  check_unary("logsumexp", [](const Tensor& x) { return ad::broadcast(ad::logsumexp_cols(x), x.rows(), x.cols()); },
              -3.0, 3.0);
  check_unary("sum_cols", [](const Tensor& x) { return ad::broadcast(ad::sum_cols(x), x.rows(), x.cols()); }, -1, 1);
  check_unary("sum_rows", [](const Tensor& x) { return ad::broadcast(ad::sum_rows(x), x.rows(), x.cols()); }, -1, 1);
  check_unary("mean", [](const Tensor& x) { return ad::broadcast(ad::mean(x), x.rows(), x.cols()); }, -1, 1);
  check_unary("slice_concat", [](const Tensor& x) {
    if (x.cols() < 2) return ad::concat_rows({ad::slice_rows(x, 0, x.rows())});
    return ad::concat_cols({ad::slice_cols(x, 1, x.cols() - 1), ad::slice_cols(x, 0, 1)});
  }, -1, 1);
  check_unary("gather", [](const Tensor& x) {
    std::vector<std::size_t> idx(x.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = (i * 7 + 1) % x.rows();
    return ad::gather_rows(x, idx);
  }, -1, 1);
  check_unary("row_groups", [](const Tensor& x) {
    const Tensor doubled = ad::concat_rows({x, ad::scale(x, 0.5)});
    return ad::broadcast(ad::sum_rows(ad::sum_row_groups(doubled, 2 * x.rows())), x.rows(), x.cols());
  }, -1, 1);
}

TEST(Primitives, BinaryRandomized) {
  check_binary("add", [](const Tensor& a, const Tensor& b) { return a + b; }, false);
  check_binary("sub", [](const Tensor& a, const Tensor& b) { return a - b; }, true);
  check_binary("mul", [](const Tensor& a, const Tensor& b) { return a * b; }, true);
  check_binary("div", [](const Tensor& a, const Tensor& b) { return ad::div(a, b); }, true, 0.5);
  check_binary("add_broadcast", [](const Tensor& a, const Tensor& b) { return a + b; }, true);
}

TEST(Primitives, MatmulRandomized) {
  Rng rng = make_rng(31, {});
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = random_dim(rng), k = random_dim(rng), m = random_dim(rng);
    Tensor a = Tensor::parameter(n, k, random_values(n * k, rng, -1.0, 1.0));
    Tensor b = Tensor::parameter(k, m, random_values(k * m, rng, -1.0, 1.0));
    const auto w = random_values(n * m, rng, -1.0, 1.0);
    auto f = [&] { return ad::sum(ad::mul(ad::matmul(a, b), Tensor::constant(n, m, w))); };
    ASSERT_TRUE(ad::grad_check(f, {a, b}, 1e-5, 1e-4).passed) << "trial " << trial;
  }
}

TEST(Primitives, SpecialFunctionValues) {
  const Tensor e = ad::exprel(Tensor::constant(1, 3, {0.0, 1e-10, 1.0}));
  EXPECT_EQ(e.at(0, 0), 1.0);
  EXPECT_NEAR(e.at(0, 1), 1.0, 1e-10);
  EXPECT_NEAR(e.at(0, 2), std::expm1(1.0), 1e-15);
  const Tensor l = ad::log_ndtr(Tensor::constant(1, 3, {0.0, -40.0, 5.0}));
  EXPECT_NEAR(l.at(0, 0), std::log(0.5), 1e-15);
  EXPECT_TRUE(std::isfinite(l.at(0, 1)));
  EXPECT_NEAR(l.at(0, 1), -804.608442013754, 1e-6);
  EXPECT_NEAR(l.at(0, 2), std::log1p(-0.5 * std::erfc(5.0 / std::sqrt(2.0))), 1e-15);
}
