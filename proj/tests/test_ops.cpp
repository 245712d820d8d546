// Vector-Jacobian products of every differentiable op against central differences.

#include <gtest/gtest.h>

#include "dasc/ops.hpp"
#include "gradcheck.hpp"

using namespace dasc;
using check::gradcheck;
using check::LossFn;
using check::random_tensor;

namespace {

// Random linear functional so that every output entry matters.
ad::Var project(const ad::Var& y, const Tensor& r) { return ops::sum(ops::mul(y, ad::constant(r))); }

void check(const char* what, const std::function<ad::Var(const std::vector<ad::Var>&)>& op,
           std::vector<Tensor> inputs, Rng& rng, double tol = 1e-6) {
  Tensor out;
  {
    ad::NoGradGuard ng;
    std::vector<ad::Var> c;
    for (const auto& t : inputs) c.push_back(ad::constant(t));
    out = op(c).value();
  }
  const Tensor r = random_tensor(out.shape(), rng);
  LossFn f = [&](const std::vector<ad::Var>& v) { return project(op(v), r); };
  const auto g = gradcheck(f, inputs, rng, 16);
  EXPECT_LT(g.max_rel_err, tol) << what;
}

TEST(OpGradients, Conv2d) {
  Rng rng = make_rng(1, {});
  for (auto g : {kernels::ConvGeometry::symmetric(1), kernels::ConvGeometry::symmetric(2, 2, 2),
                 kernels::ConvGeometry::same(7, 7, 4, 2)}) {
    check(
        "conv2d",
        [g](const std::vector<ad::Var>& v) { return ops::conv2d(v[0], v[1], &v[2], g); },
        {random_tensor({2, 3, 7, 7}, rng), random_tensor({2, 3, 3, 3}, rng), random_tensor({2}, rng)}, rng);
  }
}

TEST(OpGradients, BatchNorm) {
  Rng rng = make_rng(2, {});
  check(
      "bn_train",
      [](const std::vector<ad::Var>& v) { return ops::batch_norm_train(v[0], v[1], v[2], 1e-5, nullptr, nullptr); },
      {random_tensor({3, 2, 3, 4}, rng), random_tensor({2}, rng, 0.5, 1.5), random_tensor({2}, rng)}, rng);
  const Tensor rm = random_tensor({2}, rng), rv = random_tensor({2}, rng, 0.5, 2.0);
  check(
      "bn_eval",
      [&](const std::vector<ad::Var>& v) { return ops::batch_norm_eval(v[0], v[1], v[2], rm, rv, 1e-5); },
      {random_tensor({2, 2, 3, 3}, rng), random_tensor({2}, rng), random_tensor({2}, rng)}, rng);
}

TEST(OpGradients, Pointwise) {
  Rng rng = make_rng(3, {});
  const Shape s{2, 3, 4, 4};
  check("relu", [](const auto& v) { return ops::relu(v[0]); }, {random_tensor(s, rng)}, rng);
  check("leaky", [](const auto& v) { return ops::leaky_relu(v[0], 0.2); }, {random_tensor(s, rng)}, rng);
  check("sigmoid", [](const auto& v) { return ops::sigmoid(v[0]); }, {random_tensor(s, rng, -4, 4)}, rng);
  check("add", [](const auto& v) { return ops::add(v[0], v[1]); }, {random_tensor(s, rng), random_tensor(s, rng)},
        rng);
  check("mul", [](const auto& v) { return ops::mul(v[0], v[1]); }, {random_tensor(s, rng), random_tensor(s, rng)},
        rng);
  check("scale", [](const auto& v) { return ops::add_scalar(ops::scale(v[0], -1.7), 0.3); }, {random_tensor(s, rng)},
        rng);
  check("bcast", [](const auto& v) { return ops::mul_channel_broadcast(v[0], v[1]); },
        {random_tensor(s, rng), random_tensor({2, 1, 4, 4}, rng)}, rng);
}

TEST(OpGradients, SpatialAndReductions) {
  Rng rng = make_rng(4, {});
  check("maxpool", [](const auto& v) { return ops::maxpool2d(v[0], 3, 2, 1); }, {random_tensor({2, 2, 7, 6}, rng)},
        rng);
  check("resize_up", [](const auto& v) { return ops::resize_bilinear(v[0], 9, 11); },
        {random_tensor({1, 2, 4, 5}, rng)}, rng);
  check("resize_down", [](const auto& v) { return ops::resize_bilinear(v[0], 3, 2); },
        {random_tensor({1, 2, 8, 7}, rng)}, rng);
  check("concat", [](const auto& v) { return ops::concat_channels({v[0], v[1]}); },
        {random_tensor({2, 1, 3, 3}, rng), random_tensor({2, 3, 3, 3}, rng)}, rng);
  check("gap", [](const auto& v) { return ops::global_avg_pool(v[0]); }, {random_tensor({2, 3, 4, 5}, rng)}, rng);
  check("softmax", [](const auto& v) { return ops::softmax_channels(v[0]); }, {random_tensor({2, 3, 3, 3}, rng, -3, 3)},
        rng);
  check("mean", [](const auto& v) { return ops::mean(v[0]); }, {random_tensor({2, 3, 3, 3}, rng)}, rng);
}

TEST(OpGradients, LossPrimitives) {
  Rng rng = make_rng(5, {});
  Tensor target({2, 1, 3, 3});
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = uniform01(rng);
  const Tensor w = random_tensor({2, 1, 3, 3}, rng, 0, 3);
  check("ce2", [&](const auto& v) { return ops::cross_entropy_2class(v[0], target); },
        {random_tensor({2, 2, 3, 3}, rng, -3, 3)}, rng);
  check("bce", [&](const auto& v) { return ops::bce_with_logits(v[0], 1.0, &w); },
        {random_tensor({2, 1, 3, 3}, rng, -3, 3)}, rng);
  check("cos_flat", [](const auto& v) { return ops::cosine_similarity_flat({v[0], v[1]}, {v[2], v[3]}); },
        {random_tensor({3, 2}, rng), random_tensor({4}, rng), random_tensor({3, 2}, rng), random_tensor({4}, rng)}, rng);
}

TEST(Autograd, NoGradProducesConstants) {
  const auto p = ad::parameter(Tensor({2}, 1.0));
  ad::NoGradGuard ng;
  const auto y = ops::scale(p, 2.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, GradientsAccumulateAcrossBackwardCalls) {
  const auto p = ad::parameter(Tensor({3}, 2.0));
  ad::backward(ops::sum(ops::scale(p, 3.0)));
  ad::backward(ops::sum(ops::scale(p, 3.0)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(p.grad()[i], 6.0);
  p.zero_grad();
  EXPECT_TRUE(p.grad().empty());
}

TEST(Autograd, DetachBlocksGradient) {
  const auto p = ad::parameter(Tensor({2}, 1.0));
  const auto y = ops::add(ops::sum(ops::mul(p, p)), ops::sum(ad::detach(ops::scale(p, 5.0))));
  ad::backward(y);
  EXPECT_EQ(p.grad()[0], 2.0);
}

}  // namespace
