// Parallel kernels against the serial direct-loop definitions.

#include <gtest/gtest.h>

#include "dasc/kernels.hpp"
#include "dasc/reference.hpp"
#include "gradcheck.hpp"

using namespace dasc;
using dasc::check::random_tensor;

namespace {

struct ConvCase {
  int n, c, h, w, o, k, stride, dilation, pad;
};

class ConvAgreement : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvAgreement, ForwardAndBackwardMatchReference) {
  const auto p = GetParam();
  Rng rng = make_rng(11, {static_cast<std::uint64_t>(p.k * 100 + p.stride * 10 + p.dilation)});
  const Tensor x = random_tensor({p.n, p.c, p.h, p.w}, rng);
  const Tensor wt = random_tensor({p.o, p.c, p.k, p.k}, rng);
  const Tensor b = random_tensor({p.o}, rng);
  const auto g = kernels::ConvGeometry::symmetric(p.pad, p.stride, p.dilation);

  const Tensor y = kernels::conv2d_forward(x, wt, &b, g);
  const Tensor yr = ref::conv2d_forward(x, wt, &b, g);
  ASSERT_EQ(y.shape(), yr.shape());
  EXPECT_LT(max_abs_diff(y, yr), 1e-12);

  const Tensor dy = random_tensor(y.shape(), rng);
  Tensor dx, dw, db, dxr, dwr, dbr;
  kernels::conv2d_backward(x, wt, dy, g, &dx, &dw, &db);
  ref::conv2d_backward(x, wt, dy, g, dxr, dwr, dbr);
  EXPECT_LT(max_abs_diff(dx, dxr), 1e-11);
  EXPECT_LT(max_abs_diff(dw, dwr), 1e-11);
  EXPECT_LT(max_abs_diff(db, dbr), 1e-11);
}

INSTANTIATE_TEST_SUITE_P(Geometries, ConvAgreement,
                         ::testing::Values(ConvCase{2, 3, 9, 7, 4, 3, 1, 1, 1}, ConvCase{1, 2, 12, 12, 3, 3, 2, 1, 1},
                                           ConvCase{2, 4, 10, 11, 2, 3, 1, 2, 2},
                                           ConvCase{1, 3, 8, 8, 5, 1, 1, 1, 0}, ConvCase{1, 1, 13, 9, 2, 4, 2, 1, 1},
                                           ConvCase{3, 2, 6, 6, 2, 3, 1, 4, 4}));

TEST(ConvGeometry, SameKeepsCeilSize) {
  for (int in : {7, 8, 31, 64}) {
    for (int s : {1, 2}) {
      const auto g = kernels::ConvGeometry::same(in, in, 4, s);
      EXPECT_EQ(g.out_h(in, 4), (in + s - 1) / s);
      EXPECT_EQ(g.out_w(in, 4), (in + s - 1) / s);
    }
  }
}

TEST(Resize, MatchesReferenceUpAndDown) {
  Rng rng = make_rng(3, {1});
  const Tensor x = random_tensor({2, 3, 7, 5}, rng);
  for (auto [oh, ow] : {std::pair{14, 10}, std::pair{3, 2}, std::pair{7, 5}, std::pair{64, 64}}) {
    EXPECT_LT(max_abs_diff(kernels::resize_bilinear(x, oh, ow), ref::resize_bilinear(x, oh, ow)), 1e-13);
  }
}

TEST(Resize, BackwardIsAdjointOfForward) {
  Rng rng = make_rng(3, {2});
  const Tensor x = random_tensor({1, 2, 6, 9}, rng);
  const Tensor y = kernels::resize_bilinear(x, 16, 11);
  const Tensor dy = random_tensor(y.shape(), rng);
  const Tensor dx = kernels::resize_bilinear_backward(dy, 6, 9);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * dy[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * dx[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(BatchNorm, TrainMatchesReference) {
  Rng rng = make_rng(5, {1});
  const Tensor x = random_tensor({3, 4, 5, 6}, rng, -2, 3);
  const Tensor gamma = random_tensor({4}, rng, 0.5, 1.5);
  const Tensor beta = random_tensor({4}, rng);
  kernels::BatchNormCache cache;
  const Tensor y = kernels::batch_norm_train(x, gamma, beta, 1e-5, cache, nullptr);
  EXPECT_LT(max_abs_diff(y, ref::batch_norm_train(x, gamma, beta, 1e-5)), 1e-12);
}

TEST(MaxPool, MatchesReference) {
  Rng rng = make_rng(6, {1});
  const Tensor x = random_tensor({2, 3, 9, 8}, rng);
  std::vector<int> arg;
  for (auto [k, s, p] : {std::tuple{3, 2, 1}, std::tuple{2, 2, 0}, std::tuple{3, 1, 1}}) {
    EXPECT_EQ(kernels::maxpool_forward(x, k, s, p, arg), ref::maxpool_forward(x, k, s, p));
  }
}

}  // namespace
