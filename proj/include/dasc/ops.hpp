#pragma once

// Differentiable operations on ad::Var. Forward passes delegate to the
// data-parallel kernels; every op defines its exact vector-Jacobian product.

#include <utility>
#include <vector>

#include "dasc/autograd.hpp"
#include "dasc/kernels.hpp"

namespace dasc::ops {

using ad::Var;

Var conv2d(const Var& x, const Var& weight, const Var* bias, const kernels::ConvGeometry& g);

/// Training-mode batch norm. Receives the batch mean and biased variance per
/// channel so the caller can update running statistics.
Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps, std::vector<double>* mean,
                     std::vector<double>* var);
Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta, const Tensor& running_mean,
                    const Tensor& running_var, double eps);

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// x: (N,C,H,W) times f: (N,1,H,W), broadcast over channels.
Var mul_channel_broadcast(const Var& x, const Var& f);

Var maxpool2d(const Var& x, int kernel, int stride, int pad);
Var resize_bilinear(const Var& x, int out_h, int out_w);
Var concat_channels(const std::vector<Var>& parts);
Var global_avg_pool(const Var& x);
Var softmax_channels(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);
/// Weighted sum of scalar Vars.
Var weighted_sum(const std::vector<std::pair<double, Var>>& terms);

/// Per-pixel 1 - cos(p1, p2) over the channel vector; returns (N,1,H,W).
/// Pixels where either vector is zero yield 0.
Var cosine_discrepancy(const Var& p1, const Var& p2);

/// Cosine similarity of the concatenation of `a` against that of `b`.
Var cosine_similarity_flat(const std::vector<Var>& a, const std::vector<Var>& b);

/// Mean per-pixel two-class cross-entropy of logits (N,2,H,W) against soft
/// foreground targets (N,1,H,W) in [0,1]; hard masks are 0/1 targets.
Var cross_entropy_2class(const Var& logits, const Tensor& fg_target);

/// Mean of weight * BCE(sigmoid(scores), label). `weights` may be null.
Var bce_with_logits(const Var& scores, double label, const Tensor* weights);

/// -(1/N) sum_i log probs[i, tag_i] for probabilities shaped (N,M,1,1) or (N,M).
Var nll_of_probs(const Var& probs, const std::vector<int>& tags);

}  // namespace dasc::ops
