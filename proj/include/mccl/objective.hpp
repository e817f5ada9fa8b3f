#pragma once

// Training objective: mean binary cross-entropy over the batch anchors plus a
// magnitude-matched contrastive term on the dynamic latents z_d.

#include "mccl/losses.hpp"
#include "mccl/model.hpp"

#include <optional>
#include <vector>

namespace mccl {

enum class ContrastiveKind { none, triplet, scl };

template <typename Scalar>
struct ObjectiveInputs {
  Mat<Scalar> x_dyn, x_stat;  // anchors, one column each
  std::vector<int> labels;
  // Triplet members. Column k of pos_*/neg_* pairs with anchor column triplet_anchor[k].
  std::vector<Eigen::Index> triplet_anchor;
  Mat<Scalar> pos_dyn, pos_stat, neg_dyn, neg_stat;
};

struct ObjectiveOptions {
  ContrastiveKind kind = ContrastiveKind::none;
  LossConfig loss;
  // Also return the separate CE and CL gradients (two backward passes).
  bool keep_components = false;
  // Use this weight instead of |CE| / |CL| (finite-difference checks freeze it).
  std::optional<double> fixed_gamma;
};

template <typename Scalar>
struct ObjectiveResult {
  Scalar value = 0;
  Scalar ce = 0;
  Scalar cl = 0;
  Scalar gamma = 0;
  Eigen::Index triplets = 0;
  ModelParams<Scalar> grad;
  ModelParams<Scalar> grad_ce;  // only with keep_components
  ModelParams<Scalar> grad_cl;
  Mat<Scalar> z_d;  // latents of the anchor columns
};

template <typename Scalar>
ObjectiveResult<Scalar> compute_objective(const ModelConfig& cfg, const ModelParams<Scalar>& params,
                                          const ObjectiveInputs<Scalar>& in, const ObjectiveOptions& opt) {
  const Eigen::Index b = in.x_dyn.cols();
  if (b == 0) throw std::invalid_argument("compute_objective: empty batch");
  if (static_cast<Eigen::Index>(in.labels.size()) != b) {
    throw std::invalid_argument("compute_objective: label count mismatch");
  }
  const bool triplet = opt.kind == ContrastiveKind::triplet;
  const Eigen::Index n = triplet ? static_cast<Eigen::Index>(in.triplet_anchor.size()) : 0;
  if (triplet && (in.pos_dyn.cols() != n || in.neg_dyn.cols() != n || in.pos_stat.cols() != n ||
                  in.neg_stat.cols() != n)) {
    throw std::invalid_argument("compute_objective: triplet column mismatch");
  }

  // One forward over [anchors | positives | negatives].
  Mat<Scalar> x_dyn(in.x_dyn.rows(), b + 2 * n);
  Mat<Scalar> x_stat(in.x_stat.rows(), b + 2 * n);
  x_dyn.leftCols(b) = in.x_dyn;
  x_stat.leftCols(b) = in.x_stat;
  if (n > 0) {
    x_dyn.middleCols(b, n) = in.pos_dyn;
    x_dyn.rightCols(n) = in.neg_dyn;
    x_stat.middleCols(b, n) = in.pos_stat;
    x_stat.rightCols(n) = in.neg_stat;
  }
  const ForwardTrace<Scalar> tr = forward(cfg, params, std::move(x_dyn), std::move(x_stat));
  const Eigen::Index total = b + 2 * n;

  ObjectiveResult<Scalar> out;
  out.triplets = n;
  out.z_d = tr.z_d.leftCols(b);

  Mat<Scalar> dlogit = Mat<Scalar>::Zero(1, total);
  Scalar ce_sum = 0;
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(b);
  for (Eigen::Index c = 0; c < b; ++c) {
    const auto l = binary_cross_entropy(tr.logits(0, c), in.labels[c]);
    ce_sum += l.value;
    dlogit(0, c) = l.grad * inv_b;
  }
  out.ce = ce_sum * inv_b;

  Mat<Scalar> dz_cl = Mat<Scalar>::Zero(tr.z_d.rows(), total);
  if (triplet && n > 0) {
    Mat<Scalar> za(tr.z_d.rows(), n);
    for (Eigen::Index k = 0; k < n; ++k) za.col(k) = tr.z_d.col(in.triplet_anchor[k]);
    const auto tl = triplet_margin_loss_batch<Scalar>(za, tr.z_d.middleCols(b, n), tr.z_d.rightCols(n), opt.loss);
    out.cl = tl.value;
    for (Eigen::Index k = 0; k < n; ++k) dz_cl.col(in.triplet_anchor[k]) += tl.grad_anchor.col(k);
    dz_cl.middleCols(b, n) = tl.grad_positive;
    dz_cl.rightCols(n) = tl.grad_negative;
  } else if (opt.kind == ContrastiveKind::scl && b >= 2) {
    const auto sl = supervised_contrastive_loss<Scalar>(out.z_d, in.labels, opt.loss);
    if (sl.defined) {
      out.cl = sl.value;
      dz_cl.leftCols(b) = sl.grad;
    }
  }

  out.gamma = opt.fixed_gamma ? static_cast<Scalar>(*opt.fixed_gamma) : contrastive_weight(out.ce, out.cl);
  if (opt.keep_components) {
    const Mat<Scalar> none;
    out.grad_ce = backward(cfg, params, tr, dlogit, none);
    out.grad_cl = backward(cfg, params, tr, Mat<Scalar>(Mat<Scalar>::Zero(1, total)), dz_cl);
    if (opt.fixed_gamma) {
      out.value = out.ce + out.gamma * out.cl;
      out.grad = out.grad_ce + out.gamma * out.grad_cl;
    } else {
      auto combined = combined_objective(out.ce, out.grad_ce, out.cl, out.grad_cl);
      out.value = combined.value;
      out.grad = std::move(combined.grad);
    }
  } else {
    out.value = out.ce + out.gamma * out.cl;
    out.grad = backward(cfg, params, tr, dlogit, Mat<Scalar>(out.gamma * dz_cl));
  }
  return out;
}

}  // namespace mccl
