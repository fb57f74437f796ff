#include <Eigen/Dense>
#include <vector>

#include "internal.hpp"
#include "tpp/error.hpp"
#include "tpp/models.hpp"

namespace tpp {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const Mat>;
using Map = Eigen::Map<Mat>;
using RowVec = Eigen::RowVectorXd;

constexpr double kScaleInit = 0.5413;

struct Field {
  Mat w1, w2;
  RowVec b1, b2;

  Mat eval(const Mat& x) const {
    const Mat a1 = ((x * w1).rowwise() + b1).array().tanh().matrix();
    return ((a1 * w2).rowwise() + b2).array().tanh().matrix();
  }

  struct Grads {
    Mat w1, w2;
    RowVec b1, b2;
  };

  // Vector-Jacobian product at x; accumulates parameter gradients into g.
  Mat vjp(const Mat& x, const Mat& gout, Grads& g) const {
    const Mat a1 = ((x * w1).rowwise() + b1).array().tanh().matrix();
    const Mat out = ((a1 * w2).rowwise() + b2).array().tanh().matrix();
    const Mat gz2 = (gout.array() * (1.0 - out.array().square())).matrix();
    g.w2.noalias() += a1.transpose() * gz2;
    g.b2 += gz2.colwise().sum();
    const Mat gz1 = ((gz2 * w2.transpose()).array() * (1.0 - a1.array().square())).matrix();
    g.w1.noalias() += x.transpose() * gz1;
    g.b1 += gz1.colwise().sum();
    return gz1 * w1.transpose();
  }
};

Mat to_mat(const ad::Node& n) { return CMap(n.value.data(), static_cast<Eigen::Index>(n.rows()), static_cast<Eigen::Index>(n.cols())); }

// One RK4 step with per-row step sizes h.
Mat rk4_step(const Field& f, const Mat& x, const Eigen::VectorXd& h) {
  const Mat k1 = f.eval(x);
  const Mat k2 = f.eval(x + (0.5 * h).asDiagonal() * k1);
  const Mat k3 = f.eval(x + (0.5 * h).asDiagonal() * k2);
  const Mat k4 = f.eval(x + h.asDiagonal() * k3);
  return x + (h / 6.0).asDiagonal() * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void add_into(ad::Node& p, const double* src, std::size_t n) {
  if (!p.requires_grad) return;
  auto& g = p.ensure_grad();
  for (std::size_t i = 0; i < n; ++i) g[i] += src[i];
}

}  // namespace

OdeTppModel::OdeTppModel(ModelConfig cfg) : TppModel(std::move(cfg)) {
  Rng rng = make_rng(cfg_.seed, {0x0de0u});
  const auto d = static_cast<std::size_t>(cfg_.hidden_size), k = static_cast<std::size_t>(num_types());
  embed_ = EventEmbedding(params_, cfg_, rng);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "update.l" + std::to_string(l);
    layer_w_.push_back(params_.add_uniform(p + ".w", l == 0 ? 2 * d : d, d, rng));
    layer_b_.push_back(params_.add_zeros(p + ".b", 1, d));
  }
  f_w1_ = params_.add_uniform("field.w1", d, d, rng);
  f_b1_ = params_.add_zeros("field.b1", 1, d);
  f_w2_ = params_.add_uniform("field.w2", d, d, rng);
  f_b2_ = params_.add_zeros("field.b2", 1, d);
  out_w_ = params_.add_uniform("out.w", d, k, rng);
  out_b_ = params_.add_zeros("out.b", 1, k);
  out_scale_ = params_.add("out.scale", 1, k, std::vector<double>(k, kScaleInit));
}

ad::Tensor OdeTppModel::integrate(const ad::Tensor& h, std::span<const double> durations, int steps) const {
  const std::size_t n = h.rows(), d = h.cols();
  if (durations.size() != n) throw Error(ErrorCode::ShapeMismatch, "one duration per row required");
  if (steps < 1) throw Error(ErrorCode::BadConfig, "ode_steps must be >= 1");
  // Rows with zero duration pass through unchanged and are skipped.
  std::vector<Eigen::Index> active;
  for (std::size_t r = 0; r < n; ++r) {
    if (durations[r] != 0.0) active.push_back(static_cast<Eigen::Index>(r));
  }
  if (active.empty()) return h;
  Eigen::VectorXd step(static_cast<Eigen::Index>(active.size()));
  for (std::size_t i = 0; i < active.size(); ++i) step[static_cast<Eigen::Index>(i)] = durations[active[i]] / steps;

  auto field_of = [](const ad::Node& w1, const ad::Node& b1, const ad::Node& w2, const ad::Node& b2) {
    Field f{to_mat(w1), to_mat(w2), to_mat(b1), to_mat(b2)};
    return f;
  };
  const Field f = field_of(*f_w1_.node(), *f_b1_.node(), *f_w2_.node(), *f_b2_.node());
  const Mat h0 = to_mat(*h.node());
  Mat x = h0(active, Eigen::all);
  for (int s = 0; s < steps; ++s) x = rk4_step(f, x, step);
  Mat full = h0;
  full(active, Eigen::all) = x;
  std::vector<double> value(full.data(), full.data() + full.size());

  // The trajectory is recomputed during backward instead of being kept alive.
  return ad::make_result(ad::Shape{n, d}, std::move(value), {h, f_w1_, f_b1_, f_w2_, f_b2_},
                         [step, steps, field_of, active](ad::Node& self) {
                           auto& ps = self.parents;
                           const Field f = field_of(*ps[1], *ps[2], *ps[3], *ps[4]);
                           std::vector<Mat> traj;
                           traj.reserve(static_cast<std::size_t>(steps));
                           Mat x = to_mat(*ps[0])(active, Eigen::all);
                           for (int s = 0; s < steps; ++s) {
                             traj.push_back(x);
                             x = rk4_step(f, x, step);
                           }
                           Field::Grads g{Mat::Zero(f.w1.rows(), f.w1.cols()), Mat::Zero(f.w2.rows(), f.w2.cols()),
                                          RowVec::Zero(f.b1.size()), RowVec::Zero(f.b2.size())};
                           const Mat gout = CMap(self.grad.data(), static_cast<Eigen::Index>(self.rows()),
                                                 static_cast<Eigen::Index>(self.cols()));
                           Mat gx = gout(active, Eigen::all);
                           const Eigen::VectorXd h6 = step / 6.0, h3 = step / 3.0, h2 = 0.5 * step;
                           for (int s = steps - 1; s >= 0; --s) {
                             const Mat& x0 = traj[static_cast<std::size_t>(s)];
                             const Mat k1 = f.eval(x0);
                             const Mat x2 = x0 + h2.asDiagonal() * k1;
                             const Mat k2 = f.eval(x2);
                             const Mat x3 = x0 + h2.asDiagonal() * k2;
                             const Mat k3 = f.eval(x3);
                             const Mat x4 = x0 + step.asDiagonal() * k3;
                             Mat gk1 = h6.asDiagonal() * gx;
                             Mat gk2 = h3.asDiagonal() * gx;
                             Mat gk3 = h3.asDiagonal() * gx;
                             const Mat gk4 = h6.asDiagonal() * gx;
                             Mat gnext = gx;
                             const Mat gx4 = f.vjp(x4, gk4, g);
                             gnext += gx4;
                             gk3 += step.asDiagonal() * gx4;
                             const Mat gx3 = f.vjp(x3, gk3, g);
                             gnext += gx3;
                             gk2 += h2.asDiagonal() * gx3;
                             const Mat gx2 = f.vjp(x2, gk2, g);
                             gnext += gx2;
                             gk1 += h2.asDiagonal() * gx2;
                             gnext += f.vjp(x0, gk1, g);
                             gx = std::move(gnext);
                           }
                           Mat gh = gout;
                           gh(active, Eigen::all) = gx;
                           add_into(*ps[0], gh.data(), static_cast<std::size_t>(gh.size()));
                           add_into(*ps[1], g.w1.data(), static_cast<std::size_t>(g.w1.size()));
                           add_into(*ps[2], g.b1.data(), static_cast<std::size_t>(g.b1.size()));
                           add_into(*ps[3], g.w2.data(), static_cast<std::size_t>(g.w2.size()));
                           add_into(*ps[4], g.b2.data(), static_cast<std::size_t>(g.b2.size()));
                         });
}

ModelState OdeTppModel::forward(const PaddedBatch& batch) const {
  check_batch(batch);
  const std::size_t bsz = batch.batch_size, d = static_cast<std::size_t>(cfg_.hidden_size);
  ModelState st;
  st.batch_size = bsz;
  st.num_anchors = batch.max_len + 1;
  const std::vector<int> bos(bsz, num_types());
  const std::vector<double> zero(bsz, 0.0);
  ad::Tensor h = detail::tanh_stack(ad::concat_cols({embed_(bos, zero), ad::Tensor::full(bsz, d, 0.0)}),
                                    layer_w_, layer_b_);
  st.hidden.push_back(h);
  for (std::size_t j = 0; j < batch.max_len; ++j) {
    const auto dts = detail::column_dtimes(batch, j);
    const ad::Tensor h_left = integrate(h, dts, cfg_.ode_steps);
    st.left.push_back(h_left);
    const ad::Tensor e = embed_(detail::column_types(batch, j), dts);
    h = detail::tanh_stack(ad::concat_cols({e, h_left}), layer_w_, layer_b_);
    const ad::Tensor m = detail::column_mask(batch, j);
    st.embedding.push_back(ad::mul(e, m));
    st.hidden.push_back(ad::mul(h, m));
  }
  return st;
}

ad::Tensor OdeTppModel::intensities_at(const ModelState& state, const PaddedBatch& batch, std::size_t anchor,
                                       std::span<const double> times, std::size_t samples_per_row) const {
  const auto el = detail::elapsed_values(batch, anchor, times, samples_per_row);
  const ad::Tensor h = detail::expand_rows(state.hidden.at(anchor), samples_per_row);
  return head(integrate(h, el, cfg_.ode_steps));
}

ad::Tensor OdeTppModel::head(const ad::Tensor& h) const {
  return detail::scaled_softplus(ad::matmul(h, out_w_) + out_b_, out_scale_);
}

ad::Tensor OdeTppModel::event_intensities(const ModelState& state, const PaddedBatch& batch, std::size_t anchor) const {
  // Rows without a closing event are masked out by the caller.
  (void)batch;
  return head(state.left.at(anchor));
}

}  // namespace tpp
