#pragma once

#include <vector>

#include "dasc/autograd.hpp"

namespace dasc {

using ad::Var;

struct LossWeights {
  double seg = 3.0;
  double weight = 0.01;
  double adv_seg = 0.001;
  double adv_fea = 0.001;
  double dis = 10.0;
  /// Upper clamp on the per-pixel adversarial weight lambda_dis * Dis.
  double max_pixel_weight = 10.0;

  void validate() const;
};

enum class Side { kGenerator, kDiscriminator };

/// lambda_seg * CE(P0) + CE(P1) + CE(P2). When `p0` is undefined (base DA) the
/// first term is omitted. `target` holds foreground targets (N,1,H,W).
Var seg_loss(const Var& p0, const Var& p1, const Var& p2, const Tensor& target, double lambda_seg);

/// Per-pixel 1 - cos(p1, p2) of softmax maps, (N,1,H,W), values in [0,2].
Var cosine_discrepancy(const Var& p1, const Var& p2);

/// clamp(lambda_dis * dis_map, 0, max_weight).
Tensor adversarial_pixel_weights(const Tensor& dis_map, double lambda_dis, double max_weight);

/// Mask-level adversarial objective on raw discriminator scores.
/// Discriminator side: BCE(src -> 1) + weighted BCE(tgt -> 0).
/// Generator side: weighted non-saturating BCE(tgt -> 1); `d_src` is ignored.
/// The weight map is a constant (no gradient flows into it).
Var adv_seg_loss(const Var& d_src, const Var& d_tgt, const Tensor& dis_map, double lambda_dis, Side side,
                 double max_weight = 10.0);

/// Value of the minimax objective E[log s(src)] + E[lambda_dis Dis log(1 - s(tgt))].
double adv_seg_value(const Tensor& d_src, const Tensor& d_tgt, const Tensor& dis_map, double lambda_dis);

/// Cosine similarity of the flattened conv weights of the two auxiliary decoders.
Var weight_discrepancy(const std::vector<Var>& aux1_weights, const std::vector<Var>& aux2_weights);

/// Unweighted feature-level adversarial objective; sides as in adv_seg_loss.
Var adv_fea_loss(const Var& d_src, const Var& d_tgt, Side side);
double adv_fea_value(const Tensor& d_src, const Tensor& d_tgt);

/// Mean two-class cross-entropy of class probabilities against integer tags.
Var cam_ce_loss(const Var& class_probs, const std::vector<int>& class_tags);

struct DaLossParts {
  Var seg;
  Var weight;
  Var adv_seg;
  Var adv_fea;
};

/// seg + l_weight * weight + l_adv_seg * adv_seg + l_adv_fea * adv_fea; base
/// mode drops the feature term. Undefined parts are skipped.
Var total_da_loss(const DaLossParts& parts, const LossWeights& w, bool base_mode);

}  // namespace dasc
