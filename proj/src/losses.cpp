#include "dasc/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dasc/error.hpp"
#include "dasc/ops.hpp"

namespace dasc {
namespace {

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double mean_log_sigmoid(const Tensor& t, double sign) {
  double s = 0.0;
  for (double v : t.vec()) s += log_sigmoid(sign * v);
  return s / static_cast<double>(t.size());
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {seg, weight, adv_seg, adv_fea, dis, max_pixel_weight}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and non-negative");
  }
}

Var seg_loss(const Var& p0, const Var& p1, const Var& p2, const Tensor& target, double lambda_seg) {
  std::vector<std::pair<double, Var>> terms;
  if (p0.defined()) terms.emplace_back(lambda_seg, ops::cross_entropy_2class(p0, target));
  terms.emplace_back(1.0, ops::cross_entropy_2class(p1, target));
  terms.emplace_back(1.0, ops::cross_entropy_2class(p2, target));
  return ops::weighted_sum(terms);
}

Var cosine_discrepancy(const Var& p1, const Var& p2) { return ops::cosine_discrepancy(p1, p2); }

Tensor adversarial_pixel_weights(const Tensor& dis_map, double lambda_dis, double max_weight) {
  Tensor w(dis_map.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::clamp(lambda_dis * dis_map[i], 0.0, max_weight);
  return w;
}

Var adv_seg_loss(const Var& d_src, const Var& d_tgt, const Tensor& dis_map, double lambda_dis, Side side,
                 double max_weight) {
  if (dis_map.shape() != d_tgt.shape()) {
    throw ShapeError("adv_seg_loss: Dis map " + shape_str(dis_map.shape()) + " vs target scores " +
                     shape_str(d_tgt.shape()));
  }
  const Tensor w = adversarial_pixel_weights(dis_map, lambda_dis, max_weight);
  if (side == Side::kGenerator) return ops::bce_with_logits(d_tgt, 1.0, &w);
  return ops::add(ops::bce_with_logits(d_src, 1.0, nullptr), ops::bce_with_logits(d_tgt, 0.0, &w));
}

double adv_seg_value(const Tensor& d_src, const Tensor& d_tgt, const Tensor& dis_map, double lambda_dis) {
  if (dis_map.shape() != d_tgt.shape()) throw ShapeError("adv_seg_value: Dis map shape mismatch");
  double t = 0.0;
  for (std::size_t i = 0; i < d_tgt.size(); ++i) t += lambda_dis * dis_map[i] * log_sigmoid(-d_tgt[i]);
  return mean_log_sigmoid(d_src, 1.0) + t / static_cast<double>(d_tgt.size());
}

Var weight_discrepancy(const std::vector<Var>& aux1_weights, const std::vector<Var>& aux2_weights) {
  if (aux1_weights.empty()) throw ConfigError("weight_discrepancy: no weights");
  return ops::cosine_similarity_flat(aux1_weights, aux2_weights);
}

Var adv_fea_loss(const Var& d_src, const Var& d_tgt, Side side) {
  if (side == Side::kGenerator) return ops::bce_with_logits(d_tgt, 1.0, nullptr);
  // Batch sizes may differ (partial last batches); per-sample maps may not.
  const Shape& a = d_src.shape();
  const Shape& b = d_tgt.shape();
  if (a.size() != b.size() || a.empty() || !std::equal(a.begin() + 1, a.end(), b.begin() + 1)) {
    throw ShapeError("adv_fea_loss: source scores " + shape_str(a) + " vs target " + shape_str(b));
  }
  return ops::add(ops::bce_with_logits(d_src, 1.0, nullptr), ops::bce_with_logits(d_tgt, 0.0, nullptr));
}

double adv_fea_value(const Tensor& d_src, const Tensor& d_tgt) {
  return mean_log_sigmoid(d_src, 1.0) + mean_log_sigmoid(d_tgt, -1.0);
}

Var cam_ce_loss(const Var& class_probs, const std::vector<int>& class_tags) {
  return ops::nll_of_probs(class_probs, class_tags);
}

Var total_da_loss(const DaLossParts& parts, const LossWeights& w, bool base_mode) {
  if (!parts.seg.defined()) throw ConfigError("total_da_loss: segmentation term is required");
  std::vector<std::pair<double, Var>> terms{{1.0, parts.seg}};
  if (parts.weight.defined()) terms.emplace_back(w.weight, parts.weight);
  if (parts.adv_seg.defined()) terms.emplace_back(w.adv_seg, parts.adv_seg);
  if (!base_mode && parts.adv_fea.defined()) terms.emplace_back(w.adv_fea, parts.adv_fea);
  return ops::weighted_sum(terms);
}

}  // namespace dasc
