#pragma once

// Dual-branch network.
//
//   dynamic:  h   = relu(W1 x_d + b1)
//             h'  = (1 + c_scale) * h + c_shift      (modulation on; h' = h otherwise)
//             z_d = W2 h' + b2
//   static:   g   = relu(V1 x_s + c1)
//             z_s = V2 g + c2
//             [c_scale; c_shift] = M g + m           (2 * hidden_dyn rows)
//   head:     logit = U2 relu(U1 [z_d; z_s] + u1) + u2
//
// Every function works on column batches: inputs are (features x B).

#include "mccl/losses.hpp"
#include "mccl/random.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mccl {

struct ModelConfig {
  int latent_dim = 8;
  int hidden_dyn = 32;
  int hidden_stat = 16;
  int hidden_head = 16;
  bool modulation = true;

  void validate() const {
    if (latent_dim < 2) throw std::invalid_argument("model latent_dim must be >= 2");
    if (hidden_dyn < 1 || hidden_stat < 1 || hidden_head < 1) {
      throw std::invalid_argument("model hidden widths must be >= 1");
    }
  }
};

template <typename Scalar>
struct ModelParams {
  Mat<Scalar> dyn_w1, dyn_w2, stat_w1, stat_w2, mod_w, head_w1, head_w2;
  Vec<Scalar> dyn_b1, dyn_b2, stat_b1, stat_b2, mod_b, head_b1, head_b2;

  Eigen::Index in_dyn() const { return dyn_w1.cols(); }
  Eigen::Index in_stat() const { return stat_w1.cols(); }
  Eigen::Index latent_dim() const { return dyn_w2.rows(); }
};

// fn(name, a_tensor, b_tensor...) over matching tensors of one or more
// parameter sets, in a fixed order.
template <typename Fn, typename P, typename... Ps>
void for_each_tensor(Fn&& fn, P& p, Ps&... ps) {
  fn("dyn_w1", p.dyn_w1, ps.dyn_w1...);
  fn("dyn_b1", p.dyn_b1, ps.dyn_b1...);
  fn("dyn_w2", p.dyn_w2, ps.dyn_w2...);
  fn("dyn_b2", p.dyn_b2, ps.dyn_b2...);
  fn("stat_w1", p.stat_w1, ps.stat_w1...);
  fn("stat_b1", p.stat_b1, ps.stat_b1...);
  fn("stat_w2", p.stat_w2, ps.stat_w2...);
  fn("stat_b2", p.stat_b2, ps.stat_b2...);
  fn("mod_w", p.mod_w, ps.mod_w...);
  fn("mod_b", p.mod_b, ps.mod_b...);
  fn("head_w1", p.head_w1, ps.head_w1...);
  fn("head_b1", p.head_b1, ps.head_b1...);
  fn("head_w2", p.head_w2, ps.head_w2...);
  fn("head_b2", p.head_b2, ps.head_b2...);
}

template <typename Scalar>
bool same_shape(const ModelParams<Scalar>& a, const ModelParams<Scalar>& b) {
  bool ok = true;
  for_each_tensor([&ok](const char*, const auto& x, const auto& y) {
    ok = ok && x.rows() == y.rows() && x.cols() == y.cols();
  }, a, b);
  return ok;
}

template <typename Scalar>
Eigen::Index parameter_count(const ModelParams<Scalar>& p) {
  Eigen::Index n = 0;
  for_each_tensor([&n](const char*, const auto& t) { n += t.size(); }, p);
  return n;
}

template <typename Scalar>
ModelParams<Scalar> zeros_like(const ModelParams<Scalar>& p) {
  ModelParams<Scalar> out = p;
  for_each_tensor([](const char*, auto& t) { t.setZero(); }, out);
  return out;
}

template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& p) {
  ModelParams<To> out;
  for_each_tensor([](const char*, auto& dst, const auto& src) { dst = src.template cast<To>(); }, out, p);
  return out;
}

template <typename Scalar>
ModelParams<Scalar>& operator+=(ModelParams<Scalar>& a, const ModelParams<Scalar>& b) {
  if (!same_shape(a, b)) throw std::invalid_argument("ModelParams: shape mismatch");
  for_each_tensor([](const char*, auto& x, const auto& y) { x += y; }, a, b);
  return a;
}

template <typename Scalar>
ModelParams<Scalar> operator+(ModelParams<Scalar> a, const ModelParams<Scalar>& b) {
  return a += b;
}

template <typename Scalar>
ModelParams<Scalar> operator*(Scalar s, ModelParams<Scalar> a) {
  for_each_tensor([s](const char*, auto& x) { x *= s; }, a);
  return a;
}

// Uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out)); biases zero.
inline double glorot_bound(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& cfg, Eigen::Index in_dyn, Eigen::Index in_stat,
                                std::uint64_t seed) {
  cfg.validate();
  if (in_dyn < 1 || in_stat < 0) throw std::invalid_argument("init_params: bad input geometry");
  Rng rng = stream_rng(seed, {0x1a17});
  const Eigen::Index k = cfg.latent_dim;
  auto weight = [&rng](Eigen::Index rows, Eigen::Index cols) {
    const double a = glorot_bound(cols, rows);
    std::uniform_real_distribution<double> dist(-a, a);
    Mat<Scalar> w(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) w(r, c) = static_cast<Scalar>(dist(rng));
    }
    return w;
  };
  ModelParams<Scalar> p;
  p.dyn_w1 = weight(cfg.hidden_dyn, in_dyn);
  p.dyn_w2 = weight(k, cfg.hidden_dyn);
  p.stat_w1 = weight(cfg.hidden_stat, std::max<Eigen::Index>(in_stat, 1));
  if (in_stat == 0) p.stat_w1.resize(cfg.hidden_stat, 0);
  p.stat_w2 = weight(k, cfg.hidden_stat);
  p.mod_w = weight(2 * cfg.hidden_dyn, cfg.hidden_stat);
  p.head_w1 = weight(cfg.hidden_head, 2 * k);
  p.head_w2 = weight(1, cfg.hidden_head);
  p.dyn_b1 = Vec<Scalar>::Zero(cfg.hidden_dyn);
  p.dyn_b2 = Vec<Scalar>::Zero(k);
  p.stat_b1 = Vec<Scalar>::Zero(cfg.hidden_stat);
  p.stat_b2 = Vec<Scalar>::Zero(k);
  p.mod_b = Vec<Scalar>::Zero(2 * cfg.hidden_dyn);
  p.head_b1 = Vec<Scalar>::Zero(cfg.hidden_head);
  p.head_b2 = Vec<Scalar>::Zero(1);
  return p;
}

template <typename Scalar>
struct ForwardTrace {
  Mat<Scalar> x_dyn, x_stat;
  Mat<Scalar> dyn_pre, dyn_hidden, mod_coef, dyn_mod, z_d;
  Mat<Scalar> stat_pre, stat_hidden, z_s;
  Mat<Scalar> head_in, head_pre, head_hidden;
  Mat<Scalar> logits;  // 1 x B
};

template <typename Scalar>
ForwardTrace<Scalar> forward(const ModelConfig& cfg, const ModelParams<Scalar>& p, Mat<Scalar> x_dyn,
                             Mat<Scalar> x_stat) {
  if (x_dyn.rows() != p.in_dyn() || x_stat.rows() != p.in_stat() || x_dyn.cols() != x_stat.cols()) {
    throw std::invalid_argument("forward: input geometry does not match the parameters");
  }
  const Eigen::Index hd = p.dyn_w1.rows();
  ForwardTrace<Scalar> tr;
  tr.x_dyn = std::move(x_dyn);
  tr.x_stat = std::move(x_stat);

  tr.stat_pre = (p.stat_w1 * tr.x_stat).colwise() + p.stat_b1;
  tr.stat_hidden = tr.stat_pre.cwiseMax(Scalar(0));
  tr.z_s = (p.stat_w2 * tr.stat_hidden).colwise() + p.stat_b2;

  tr.dyn_pre = (p.dyn_w1 * tr.x_dyn).colwise() + p.dyn_b1;
  tr.dyn_hidden = tr.dyn_pre.cwiseMax(Scalar(0));
  if (cfg.modulation) {
    tr.mod_coef = (p.mod_w * tr.stat_hidden).colwise() + p.mod_b;
    tr.dyn_mod = ((tr.mod_coef.topRows(hd).array() + Scalar(1)) * tr.dyn_hidden.array() +
                  tr.mod_coef.bottomRows(hd).array()).matrix();
  } else {
    tr.dyn_mod = tr.dyn_hidden;
  }
  tr.z_d = (p.dyn_w2 * tr.dyn_mod).colwise() + p.dyn_b2;

  tr.head_in.resize(tr.z_d.rows() + tr.z_s.rows(), tr.z_d.cols());
  tr.head_in << tr.z_d, tr.z_s;
  tr.head_pre = (p.head_w1 * tr.head_in).colwise() + p.head_b1;
  tr.head_hidden = tr.head_pre.cwiseMax(Scalar(0));
  tr.logits = (p.head_w2 * tr.head_hidden).colwise() + p.head_b2;
  return tr;
}

// Reverse-mode gradients given upstream d/dlogit (1 x B) and an optional extra
// d/dz_d (K x B, empty for none). Head parameters only see `dlogit`.
template <typename Scalar>
ModelParams<Scalar> backward(const ModelConfig& cfg, const ModelParams<Scalar>& p, const ForwardTrace<Scalar>& tr,
                             const Mat<Scalar>& dlogit, const Mat<Scalar>& dz_d_extra) {
  const Eigen::Index b = tr.logits.cols();
  const Eigen::Index k = p.latent_dim();
  const Eigen::Index hd = p.dyn_w1.rows();
  if (dlogit.rows() != 1 || dlogit.cols() != b) throw std::invalid_argument("backward: dlogit shape");
  if (dz_d_extra.size() != 0 && (dz_d_extra.rows() != k || dz_d_extra.cols() != b)) {
    throw std::invalid_argument("backward: dz_d shape");
  }
  auto relu_mask = [](const Mat<Scalar>& pre) {
    return (pre.array() > Scalar(0)).template cast<Scalar>();
  };

  ModelParams<Scalar> g;
  g.head_w2 = dlogit * tr.head_hidden.transpose();
  g.head_b2 = dlogit.rowwise().sum();
  const Mat<Scalar> d_head_pre = ((p.head_w2.transpose() * dlogit).array() * relu_mask(tr.head_pre)).matrix();
  g.head_w1 = d_head_pre * tr.head_in.transpose();
  g.head_b1 = d_head_pre.rowwise().sum();
  const Mat<Scalar> d_head_in = p.head_w1.transpose() * d_head_pre;

  Mat<Scalar> dz_d = d_head_in.topRows(k);
  if (dz_d_extra.size() != 0) dz_d += dz_d_extra;
  const Mat<Scalar> dz_s = d_head_in.bottomRows(k);

  g.dyn_w2 = dz_d * tr.dyn_mod.transpose();
  g.dyn_b2 = dz_d.rowwise().sum();
  const Mat<Scalar> d_mod = p.dyn_w2.transpose() * dz_d;

  g.stat_w2 = dz_s * tr.stat_hidden.transpose();
  g.stat_b2 = dz_s.rowwise().sum();
  Mat<Scalar> d_stat_hidden = p.stat_w2.transpose() * dz_s;

  Mat<Scalar> d_dyn_hidden;
  if (cfg.modulation) {
    Mat<Scalar> d_coef(2 * hd, b);
    d_coef.topRows(hd) = (d_mod.array() * tr.dyn_hidden.array()).matrix();
    d_coef.bottomRows(hd) = d_mod;
    g.mod_w = d_coef * tr.stat_hidden.transpose();
    g.mod_b = d_coef.rowwise().sum();
    d_stat_hidden += p.mod_w.transpose() * d_coef;
    d_dyn_hidden = (d_mod.array() * (tr.mod_coef.topRows(hd).array() + Scalar(1))).matrix();
  } else {
    g.mod_w = Mat<Scalar>::Zero(p.mod_w.rows(), p.mod_w.cols());
    g.mod_b = Vec<Scalar>::Zero(p.mod_b.size());
    d_dyn_hidden = d_mod;
  }

  const Mat<Scalar> d_dyn_pre = (d_dyn_hidden.array() * relu_mask(tr.dyn_pre)).matrix();
  g.dyn_w1 = d_dyn_pre * tr.x_dyn.transpose();
  g.dyn_b1 = d_dyn_pre.rowwise().sum();

  const Mat<Scalar> d_stat_pre = (d_stat_hidden.array() * relu_mask(tr.stat_pre)).matrix();
  g.stat_w1 = d_stat_pre * tr.x_stat.transpose();
  g.stat_b1 = d_stat_pre.rowwise().sum();
  return g;
}

// p <- p - lr * g
template <typename Scalar>
void sgd_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads, Scalar lr) {
  if (!same_shape(params, grads)) throw std::invalid_argument("sgd_step: shape mismatch");
  for_each_tensor([lr](const char*, auto& p, const auto& g) { p -= lr * g; }, params, grads);
}

// Stacks patch tensors into (features x B) matrices.
template <typename Scalar, typename PatchPtrRange>
Mat<Scalar> stack_dynamic(const PatchPtrRange& patches, Eigen::Index rows) {
  Mat<Scalar> x(rows, static_cast<Eigen::Index>(patches.size()));
  Eigen::Index c = 0;
  for (const auto* p : patches) x.col(c++) = p->dyn.template cast<Scalar>();
  return x;
}

template <typename Scalar, typename PatchPtrRange>
Mat<Scalar> stack_static(const PatchPtrRange& patches, Eigen::Index rows) {
  Mat<Scalar> x(rows, static_cast<Eigen::Index>(patches.size()));
  Eigen::Index c = 0;
  for (const auto* p : patches) x.col(c++) = p->stat.template cast<Scalar>();
  return x;
}

}  // namespace mccl
