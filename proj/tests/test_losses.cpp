#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dasc/error.hpp"
#include "dasc/losses.hpp"
#include "dasc/ops.hpp"
#include "loss_cases.hpp"

using namespace dasc;
using ad::constant;

namespace {

const double kLn2 = std::numbers::ln2;

Tensor two_channel(int h, int w, double a, double b) {
  Tensor t({1, 2, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      t.at(0, 0, y, x) = a;
      t.at(0, 1, y, x) = b;
    }
  return t;
}

TEST(LossGradients, AllLossesMatchFiniteDifferences) {
  for (const auto& r : check::run_loss_gradchecks(20)) {
    SCOPED_TRACE(r.name);
    EXPECT_GE(r.trials, 20);
    EXPECT_GT(r.probes, 0);
    EXPECT_LT(r.max_rel_err, 1e-4);
  }
}

TEST(SegLoss, UniformLogitsGiveClosedForm) {
  Tensor y({1, 1, 4, 5});
  y[3] = y[7] = 1.0;
  const auto z = constant(two_channel(4, 5, 0.0, 0.0));
  for (double lam : {0.0, 1.0, 3.0, 7.5}) EXPECT_NEAR(seg_loss(z, z, z, y, lam).item(), (lam + 2.0) * kLn2, 1e-14);
  // base mode drops the major term
  EXPECT_NEAR(seg_loss(ad::Var(), z, z, y, 3.0).item(), 2.0 * kLn2, 1e-14);
}

TEST(SegLoss, ConfidentCorrectTendsToZeroAndSwapIncreases) {
  Tensor y({1, 1, 3, 3});
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0;
  double prev = 1e9;
  for (double m : {1.0, 5.0, 20.0, 40.0}) {
    const auto good = constant(two_channel(3, 3, -m, m));
    const double v = seg_loss(good, good, good, y, 3.0).item();
    EXPECT_LE(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-15);
  const auto good = constant(two_channel(3, 3, -2, 2)), bad = constant(two_channel(3, 3, 2, -2));
  EXPECT_GT(seg_loss(bad, bad, bad, y, 3.0).item(), seg_loss(good, good, good, y, 3.0).item());
}

TEST(SegLoss, ShapeMismatchThrows) {
  const auto z = constant(two_channel(4, 4, 0, 0));
  EXPECT_THROW(seg_loss(z, z, z, Tensor({1, 1, 3, 4}), 3.0), ShapeError);
}

TEST(CosineDiscrepancy, HandExamples) {
  auto dis = [](double a0, double a1, double b0, double b1) {
    return cosine_discrepancy(constant(two_channel(1, 1, a0, a1)), constant(two_channel(1, 1, b0, b1))).item();
  };
  EXPECT_EQ(dis(0.3, 0.7, 0.3, 0.7), 0.0);
  EXPECT_NEAR(dis(1, 0, 0, 1), 1.0, 1e-15);
  EXPECT_NEAR(dis(1, 0, 0.6, 0.8), 0.4, 1e-15);
  EXPECT_EQ(dis(0, 0, 0.6, 0.8), 0.0);  // zero-vector guard
  EXPECT_NEAR(dis(1, 0, -1, 0), 2.0, 1e-15);
}

TEST(CosineDiscrepancy, RangeAndSymmetry) {
  Rng rng = make_rng(4, {});
  const Tensor a = check::random_tensor({2, 2, 5, 5}, rng), b = check::random_tensor({2, 2, 5, 5}, rng);
  const Tensor ab = cosine_discrepancy(constant(a), constant(b)).value();
  const Tensor ba = cosine_discrepancy(constant(b), constant(a)).value();
  EXPECT_EQ(ab, ba);
  for (std::size_t i = 0; i < ab.size(); ++i) {
    EXPECT_GE(ab[i], 0.0);
    EXPECT_LE(ab[i], 2.0);
  }
}

TEST(AdvSeg, ValueAtHalfWithZeroDisIsLogHalf) {
  const Tensor zeros({2, 1, 4, 4});
  for (double lam : {0.0, 1.0, 10.0}) EXPECT_NEAR(adv_seg_value(zeros, zeros, zeros, lam), std::log(0.5), 1e-15);
}

TEST(AdvSeg, TargetTermIsLinearInLambdaDis) {
  Rng rng = make_rng(5, {});
  const Tensor s = check::random_tensor({1, 1, 3, 3}, rng, -3, 3);
  const Tensor t = check::random_tensor({1, 1, 3, 3}, rng, -3, 3);
  const Tensor dis = check::random_tensor({1, 1, 3, 3}, rng, 0, 2);
  const double base = adv_seg_value(s, t, dis, 0.0);
  const double one = adv_seg_value(s, t, dis, 1.5) - base;
  const double two = adv_seg_value(s, t, dis, 3.0) - base;
  EXPECT_NEAR(two, 2.0 * one, 1e-14);

  // The trainable objective: doubling lambda doubles the target BCE while it stays under the clamp.
  const auto dt = constant(t), ds = constant(s);
  const double g1 = adv_seg_loss(ds, dt, dis, 1.0, Side::kGenerator).item();
  const double g2 = adv_seg_loss(ds, dt, dis, 2.0, Side::kGenerator).item();
  EXPECT_NEAR(g2, 2.0 * g1, 1e-14);
}

TEST(AdvSeg, PerfectDiscriminatorLossVanishes) {
  Tensor s({1, 1, 2, 2}, 60.0), t({1, 1, 2, 2}, -60.0), dis({1, 1, 2, 2}, 0.3);
  EXPECT_LT(adv_seg_loss(constant(s), constant(t), dis, 10.0, Side::kDiscriminator).item(), 1e-20);
  EXPECT_LT(adv_fea_loss(constant(s), constant(t), Side::kDiscriminator).item(), 1e-20);
}

TEST(AdvSeg, PixelWeightsAreClamped) {
  Tensor dis({1, 1, 1, 3});
  dis[0] = 0.0;
  dis[1] = 0.5;
  dis[2] = 2.0;
  const Tensor w = adversarial_pixel_weights(dis, 10.0, 10.0);
  EXPECT_EQ(w[0], 0.0);
  EXPECT_EQ(w[1], 5.0);
  EXPECT_EQ(w[2], 10.0);
  EXPECT_THROW(adv_seg_loss(constant(dis), constant(dis), Tensor({1, 1, 1, 2}), 1.0, Side::kGenerator),
               ShapeError);
}

TEST(AdvFea, ValueAtHalfIsTwoLogHalf) {
  const Tensor z({3, 1, 1, 1});
  EXPECT_NEAR(adv_fea_value(z, z), -1.3862943611198906, 1e-15);
}

TEST(AdvFea, SwappingDomainsSwapsRoles) {
  Rng rng = make_rng(6, {});
  const Tensor a = check::random_tensor({2, 1, 1, 1}, rng, -3, 3), b = check::random_tensor({2, 1, 1, 1}, rng);
  // D(src=a, tgt=b) equals D(src=-b, tgt=-a) since sigma(-x) = 1 - sigma(x).
  Tensor na = a, nb = b;
  for (std::size_t i = 0; i < a.size(); ++i) na[i] = -a[i], nb[i] = -b[i];
  EXPECT_NEAR(adv_fea_loss(constant(a), constant(b), Side::kDiscriminator).item(),
              adv_fea_loss(constant(nb), constant(na), Side::kDiscriminator).item(), 1e-14);
}

TEST(WeightDiscrepancy, HandExamples) {
  auto wd = [](std::vector<double> a, std::vector<double> b) {
    const int n = static_cast<int>(a.size());
    return weight_discrepancy({constant(Tensor({n}, a))}, {constant(Tensor({n}, b))}).item();
  };
  EXPECT_NEAR(wd({1, 2, 3}, {1, 2, 3}), 1.0, 1e-15);
  EXPECT_EQ(wd({1, 0}, {0, 1}), 0.0);
  EXPECT_NEAR(wd({1, 0}, {0.6, 0.8}), 0.6, 1e-15);
  EXPECT_NEAR(wd({1, 0}, {6, 8}), 0.6, 1e-15);  // scale invariant
  EXPECT_THROW(wd({0, 0}, {1, 1}), Error);
}

TEST(CamCe, HandExamplesAndOrderInvariance) {
  Tensor p({2, 2, 1, 1}, 0.5);
  EXPECT_NEAR(cam_ce_loss(constant(p), {0, 1}).item(), kLn2, 1e-15);
  Tensor onehot({2, 2, 1, 1}, std::vector<double>{1, 0, 0, 1});
  EXPECT_EQ(cam_ce_loss(constant(onehot), {0, 1}).item(), 0.0);
  Tensor q({3, 2, 1, 1}, std::vector<double>{0.2, 0.8, 0.9, 0.1, 0.4, 0.6});
  Tensor q_perm({3, 2, 1, 1}, std::vector<double>{0.4, 0.6, 0.2, 0.8, 0.9, 0.1});
  EXPECT_NEAR(cam_ce_loss(constant(q), {1, 0, 1}).item(), cam_ce_loss(constant(q_perm), {1, 1, 0}).item(), 1e-15);
}

TEST(TotalDa, ZeroWeightsLeaveSegLossAndLinearity) {
  DaLossParts parts{constant(Tensor({1}, 0.7)), constant(Tensor({1}, 0.3)), constant(Tensor({1}, 1.9)),
                    constant(Tensor({1}, 1.1))};
  LossWeights zero{3.0, 0.0, 0.0, 0.0, 10.0, 10.0};
  EXPECT_EQ(total_da_loss(parts, zero, false).item(), 0.7);

  LossWeights lw;
  const double full = total_da_loss(parts, lw, false).item();
  EXPECT_NEAR(full, 0.7 + 0.01 * 0.3 + 0.001 * 1.9 + 0.001 * 1.1, 1e-15);
  EXPECT_NEAR(total_da_loss(parts, lw, true).item(), 0.7 + 0.01 * 0.3 + 0.001 * 1.9, 1e-15);

  DaLossParts doubled = parts;
  doubled.weight = constant(Tensor({1}, 0.6));
  EXPECT_NEAR(total_da_loss(doubled, lw, false).item() - full, 0.01 * 0.3, 1e-15);

  // d total / d lambda_k equals the raw term: finite difference in lambda.
  LossWeights bumped = lw;
  bumped.adv_seg += 0.5;
  EXPECT_NEAR((total_da_loss(parts, bumped, false).item() - full) / 0.5, 1.9, 1e-12);
}

TEST(LossWeights, NegativeRejected) {
  LossWeights lw;
  lw.adv_fea = -1;
  EXPECT_THROW(lw.validate(), ConfigError);
}

}  // namespace
