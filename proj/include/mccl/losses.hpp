#pragma once

// Contrastive objectives, binary cross-entropy and the magnitude-matched
// combination of the two, each returning analytic gradients.
//
// Latent batches are K x B matrices: one column per sample.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mccl {

struct LossConfig {
  double margin = 5.0;  // triplet hinge margin m >= 0
  double p = 2.0;       // norm order of the triplet distance, p >= 1
  double tau = 0.1;     // SCL temperature > 0

  void validate() const {
    if (!(margin >= 0.0)) throw std::invalid_argument("loss margin must be >= 0");
    if (!(p >= 1.0)) throw std::invalid_argument("loss norm order must be >= 1");
    if (!(tau > 0.0)) throw std::invalid_argument("loss temperature must be > 0");
  }
};

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

// ||x||_p and its gradient; the gradient at x = 0 is taken as 0.
template <typename Scalar>
Scalar pnorm_with_grad(const Vec<Scalar>& x, Scalar p, Vec<Scalar>* grad) {
  Scalar d;
  if (p == Scalar(2)) {
    d = x.norm();
    if (grad) *grad = d > Scalar(0) ? Vec<Scalar>(x / d) : Vec<Scalar>::Zero(x.size());
    return d;
  }
  if (p == Scalar(1)) {
    d = x.template lpNorm<1>();
    if (grad) *grad = x.array().sign().matrix();
    return d;
  }
  d = std::pow(x.array().abs().pow(p).sum(), Scalar(1) / p);
  if (grad) {
    if (d > Scalar(0)) {
      *grad = (x.array().sign() * x.array().abs().pow(p - Scalar(1)) / std::pow(d, p - Scalar(1))).matrix();
    } else {
      *grad = Vec<Scalar>::Zero(x.size());
    }
  }
  return d;
}

}  // namespace detail

template <typename Scalar>
struct TripletLoss {
  Scalar value = 0;
  Vec<Scalar> grad_anchor;
  Vec<Scalar> grad_positive;
  Vec<Scalar> grad_negative;
};

// max(d(a,p) - d(a,n) + m, 0) with d the p-norm distance. The exact hinge
// point takes the zero subgradient.
template <typename DA, typename DP, typename DN>
TripletLoss<typename DA::Scalar> triplet_margin_loss(const Eigen::MatrixBase<DA>& za,
                                                     const Eigen::MatrixBase<DP>& zp,
                                                     const Eigen::MatrixBase<DN>& zn, const LossConfig& cfg) {
  using Scalar = typename DA::Scalar;
  if (za.size() != zp.size() || za.size() != zn.size()) {
    throw std::invalid_argument("triplet_margin_loss: latent length mismatch");
  }
  const Scalar p = static_cast<Scalar>(cfg.p);
  Vec<Scalar> gap, gan;
  const Vec<Scalar> dap_vec = za - zp;
  const Vec<Scalar> dan_vec = za - zn;
  const Scalar dap = detail::pnorm_with_grad<Scalar>(dap_vec, p, &gap);
  const Scalar dan = detail::pnorm_with_grad<Scalar>(dan_vec, p, &gan);
  const Scalar raw = dap - dan + static_cast<Scalar>(cfg.margin);

  TripletLoss<Scalar> out;
  const Eigen::Index k = za.size();
  if (raw > Scalar(0)) {
    out.value = raw;
    out.grad_anchor = gap - gan;
    out.grad_positive = -gap;
    out.grad_negative = gan;
  } else {
    out.value = Scalar(0);
    out.grad_anchor = Vec<Scalar>::Zero(k);
    out.grad_positive = Vec<Scalar>::Zero(k);
    out.grad_negative = Vec<Scalar>::Zero(k);
  }
  return out;
}

template <typename Scalar>
struct BatchTripletLoss {
  Scalar value = 0;
  Mat<Scalar> grad_anchor;  // K x N
  Mat<Scalar> grad_positive;
  Mat<Scalar> grad_negative;
  Eigen::Index active = 0;  // triplets with an open hinge
};

// Mean of the per-triplet hinge over the columns of A, P, N.
template <typename Scalar>
BatchTripletLoss<Scalar> triplet_margin_loss_batch(const Mat<Scalar>& anchors, const Mat<Scalar>& positives,
                                                   const Mat<Scalar>& negatives, const LossConfig& cfg) {
  if (anchors.rows() != positives.rows() || anchors.rows() != negatives.rows() ||
      anchors.cols() != positives.cols() || anchors.cols() != negatives.cols()) {
    throw std::invalid_argument("triplet_margin_loss_batch: shape mismatch");
  }
  const Eigen::Index n = anchors.cols();
  BatchTripletLoss<Scalar> out;
  out.grad_anchor = Mat<Scalar>::Zero(anchors.rows(), n);
  out.grad_positive = Mat<Scalar>::Zero(anchors.rows(), n);
  out.grad_negative = Mat<Scalar>::Zero(anchors.rows(), n);
  if (n == 0) return out;
  const Scalar inv = Scalar(1) / static_cast<Scalar>(n);
  Scalar sum = 0;
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto t = triplet_margin_loss(anchors.col(c), positives.col(c), negatives.col(c), cfg);
    sum += t.value;
    if (t.value > Scalar(0)) ++out.active;
    out.grad_anchor.col(c) = t.grad_anchor * inv;
    out.grad_positive.col(c) = t.grad_positive * inv;
    out.grad_negative.col(c) = t.grad_negative * inv;
  }
  out.value = sum * inv;
  return out;
}

template <typename Scalar>
struct ContrastiveLoss {
  Scalar value = 0;
  Mat<Scalar> grad;  // K x B
  Eigen::Index valid_anchors = 0;
  bool defined = false;  // false when no anchor has a positive partner
};

// Supervised contrastive loss over the columns of Z. Columns are L2-normalized
// before the dot products; anchors without a same-label partner are left out
// of the average.
template <typename Scalar>
ContrastiveLoss<Scalar> supervised_contrastive_loss(const Mat<Scalar>& z, const std::vector<int>& labels,
                                                    const LossConfig& cfg) {
  const Eigen::Index b = z.cols();
  if (b < 2) throw std::invalid_argument("supervised_contrastive_loss: batch size must be >= 2");
  if (static_cast<Eigen::Index>(labels.size()) != b) {
    throw std::invalid_argument("supervised_contrastive_loss: label count mismatch");
  }
  const Scalar tau = static_cast<Scalar>(cfg.tau);
  const Scalar eps = static_cast<Scalar>(1e-12);

  const Vec<Scalar> norms = z.colwise().norm().transpose().cwiseMax(eps);
  const Mat<Scalar> u = z * norms.cwiseInverse().asDiagonal();
  const Mat<Scalar> sim = (u.transpose() * u) / tau;

  ContrastiveLoss<Scalar> out;
  out.grad = Mat<Scalar>::Zero(z.rows(), b);
  // g(i, k) = dL/dsim(i, k), accumulated for valid anchors then scaled by 1/V.
  Mat<Scalar> g = Mat<Scalar>::Zero(b, b);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    Eigen::Index n_pos = 0;
    for (Eigen::Index k = 0; k < b; ++k) n_pos += (k != i && labels[k] == labels[i]) ? 1 : 0;
    if (n_pos == 0) continue;
    ++out.valid_anchors;

    Scalar row_max = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index k = 0; k < b; ++k) {
      if (k != i) row_max = std::max(row_max, sim(i, k));
    }
    Scalar denom = 0;
    for (Eigen::Index k = 0; k < b; ++k) {
      if (k != i) denom += std::exp(sim(i, k) - row_max);
    }
    const Scalar lse = row_max + std::log(denom);
    const Scalar inv_pos = Scalar(1) / static_cast<Scalar>(n_pos);
    Scalar anchor_loss = 0;
    for (Eigen::Index k = 0; k < b; ++k) {
      if (k == i) continue;
      const bool positive = labels[k] == labels[i];
      if (positive) anchor_loss += (lse - sim(i, k)) * inv_pos;
      g(i, k) = std::exp(sim(i, k) - lse) - (positive ? inv_pos : Scalar(0));
    }
    total += anchor_loss;
  }
  if (out.valid_anchors == 0) return out;
  out.defined = true;
  const Scalar inv_valid = Scalar(1) / static_cast<Scalar>(out.valid_anchors);
  out.value = total * inv_valid;
  g *= inv_valid;

  // sim = U^T U / tau, so dL/dU = U (G + G^T) / tau; then back through the normalization.
  const Mat<Scalar> du = u * (g + g.transpose()) / tau;
  for (Eigen::Index c = 0; c < b; ++c) {
    const Scalar proj = u.col(c).dot(du.col(c));
    out.grad.col(c) = (du.col(c) - u.col(c) * proj) / norms(c);
  }
  return out;
}

template <typename Scalar>
struct CrossEntropy {
  Scalar value = 0;
  Scalar grad = 0;  // d value / d logit
};

// softplus(logit) - y * logit, evaluated without overflow.
template <typename Scalar>
CrossEntropy<Scalar> binary_cross_entropy(Scalar logit, int y) {
  const Scalar softplus = std::max(logit, Scalar(0)) + std::log1p(std::exp(-std::abs(logit)));
  const Scalar sigma = logit >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-logit))
                                          : std::exp(logit) / (Scalar(1) + std::exp(logit));
  return {softplus - static_cast<Scalar>(y) * logit, sigma - static_cast<Scalar>(y)};
}

// Scaling factor |l_ce| / |l_cl|, or 0 when the contrastive term vanishes.
template <typename Scalar>
Scalar contrastive_weight(Scalar l_ce, Scalar l_cl) {
  return std::abs(l_cl) > Scalar(0) ? std::abs(l_ce) / std::abs(l_cl) : Scalar(0);
}

template <typename Scalar, typename Grad>
struct Combined {
  Scalar value = 0;
  Scalar gamma = 0;
  Grad grad;
};

// l_ce + gamma * l_cl with gamma held constant during differentiation.
template <typename Scalar, typename Grad>
Combined<Scalar, Grad> combined_objective(Scalar l_ce, const Grad& grad_ce, Scalar l_cl, const Grad& grad_cl) {
  if (!std::isfinite(l_ce) || !std::isfinite(l_cl)) {
    throw std::invalid_argument("combined_objective: non-finite loss value");
  }
  Combined<Scalar, Grad> out;
  out.gamma = contrastive_weight(l_ce, l_cl);
  out.value = l_ce + out.gamma * l_cl;
  out.grad = grad_ce + out.gamma * grad_cl;
  return out;
}

}  // namespace mccl
