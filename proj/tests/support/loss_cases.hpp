#pragma once

// Randomized finite-difference cases for every loss. Shared by the unit tests
// and the acceptance gate so both exercise exactly the same instances.

#include <string>
#include <vector>

#include "dasc/losses.hpp"
#include "dasc/ops.hpp"
#include "gradcheck.hpp"

namespace dasc::check {

struct LossCaseResult {
  std::string name;
  int trials = 0;
  int probes = 0;
  double max_rel_err = 0.0;
};

namespace detail {

inline Tensor random_mask(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (rng() & 1U) ? 1.0 : 0.0;
  return t;
}

inline Tensor random_probs_like(const Shape& s, Rng& rng) {
  Tensor t = random_tensor(s, rng, -2.0, 2.0);
  ad::NoGradGuard ng;
  return ops::softmax_channels(ad::constant(t)).value();
}

template <class Make>
LossCaseResult run_trials(const std::string& name, int trials, std::uint64_t seed, Make make) {
  LossCaseResult r{name, trials, 0, 0.0};
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(t)});
    auto [fn, inputs] = make(rng);
    const GradCheck g = gradcheck(fn, inputs, rng);
    r.probes += g.probes;
    r.max_rel_err = std::max(r.max_rel_err, g.max_rel_err);
  }
  return r;
}

}  // namespace detail

inline std::vector<LossCaseResult> run_loss_gradchecks(int trials = 20, std::uint64_t seed = 2021) {
  using detail::random_mask;
  std::vector<LossCaseResult> out;

  out.push_back(detail::run_trials("seg_loss", trials, seed + 1, [](Rng& rng) {
    const int n = 1 + uniform_int(rng, 0, 1), h = 3 + uniform_int(rng, 0, 2), w = 3 + uniform_int(rng, 0, 2);
    const Tensor y = random_mask({n, 1, h, w}, rng);
    const double lam = uniform(rng, 0.5, 4.0);
    LossFn f = [y, lam](const std::vector<ad::Var>& v) { return seg_loss(v[0], v[1], v[2], y, lam); };
    std::vector<Tensor> in{random_tensor({n, 2, h, w}, rng, -3, 3), random_tensor({n, 2, h, w}, rng, -3, 3),
                           random_tensor({n, 2, h, w}, rng, -3, 3)};
    return std::pair{f, in};
  }));

  out.push_back(detail::run_trials("seg_loss_base", trials, seed + 2, [](Rng& rng) {
    const int h = 3 + uniform_int(rng, 0, 3), w = 4;
    Tensor y = random_tensor({2, 1, h, w}, rng, 0.0, 1.0);  // soft targets too
    LossFn f = [y](const std::vector<ad::Var>& v) { return seg_loss(ad::Var(), v[0], v[1], y, 3.0); };
    std::vector<Tensor> in{random_tensor({2, 2, h, w}, rng, -3, 3), random_tensor({2, 2, h, w}, rng, -3, 3)};
    return std::pair{f, in};
  }));

  out.push_back(detail::run_trials("cosine_discrepancy", trials, seed + 3, [](Rng& rng) {
    const int h = 3 + uniform_int(rng, 0, 2), w = 3;
    const Tensor weights = random_tensor({1, 1, h, w}, rng);
    LossFn f = [weights](const std::vector<ad::Var>& v) {
      auto dis = cosine_discrepancy(ops::softmax_channels(v[0]), ops::softmax_channels(v[1]));
      return ops::sum(ops::mul(dis, ad::constant(weights)));
    };
    std::vector<Tensor> in{random_tensor({1, 2, h, w}, rng, -2, 2), random_tensor({1, 2, h, w}, rng, -2, 2)};
    return std::pair{f, in};
  }));

  for (Side side : {Side::kGenerator, Side::kDiscriminator}) {
    const std::string tag = side == Side::kGenerator ? "generator" : "discriminator";
    out.push_back(detail::run_trials("adv_seg_loss_" + tag, trials, seed + 4 + (side == Side::kGenerator ? 0 : 1),
                                     [side](Rng& rng) {
                                       const int h = 2 + uniform_int(rng, 0, 3), w = 3;
                                       const Tensor dis = random_tensor({2, 1, h, w}, rng, 0.0, 2.0);
                                       const double lam = uniform(rng, 0.1, 10.0);
                                       LossFn f = [dis, lam, side](const std::vector<ad::Var>& v) {
                                         return adv_seg_loss(v[0], v[1], dis, lam, side);
                                       };
                                       std::vector<Tensor> in{random_tensor({2, 1, h, w}, rng, -4, 4),
                                                              random_tensor({2, 1, h, w}, rng, -4, 4)};
                                       return std::pair{f, in};
                                     }));
    out.push_back(detail::run_trials("adv_fea_loss_" + tag, trials, seed + 6 + (side == Side::kGenerator ? 0 : 1),
                                     [side](Rng& rng) {
                                       const int n = 1 + uniform_int(rng, 0, 3);
                                       LossFn f = [side](const std::vector<ad::Var>& v) {
                                         return adv_fea_loss(v[0], v[1], side);
                                       };
                                       std::vector<Tensor> in{random_tensor({n, 1, 2, 2}, rng, -4, 4),
                                                              random_tensor({n, 1, 2, 2}, rng, -4, 4)};
                                       return std::pair{f, in};
                                     }));
  }

  out.push_back(detail::run_trials("weight_discrepancy", trials, seed + 8, [](Rng& rng) {
    const int k = 1 + uniform_int(rng, 0, 2);
    LossFn f = [k](const std::vector<ad::Var>& v) {
      std::vector<ad::Var> a(v.begin(), v.begin() + k), b(v.begin() + k, v.end());
      return weight_discrepancy(a, b);
    };
    std::vector<Tensor> in;
    std::vector<Shape> shapes;
    for (int i = 0; i < k; ++i) shapes.push_back({1 + uniform_int(rng, 0, 2), 2, 3, 3});
    for (int rep = 0; rep < 2; ++rep)
      for (const auto& s : shapes) in.push_back(random_tensor(s, rng));
    return std::pair{f, in};
  }));

  out.push_back(detail::run_trials("cam_ce_loss", trials, seed + 9, [](Rng& rng) {
    const int n = 1 + uniform_int(rng, 0, 5);
    std::vector<int> tags(static_cast<std::size_t>(n));
    for (auto& t : tags) t = static_cast<int>(rng() & 1U);
    LossFn f = [tags](const std::vector<ad::Var>& v) { return cam_ce_loss(ops::softmax_channels(v[0]), tags); };
    std::vector<Tensor> in{random_tensor({n, 2, 1, 1}, rng, -3, 3)};
    return std::pair{f, in};
  }));

  out.push_back(detail::run_trials("total_da_loss", trials, seed + 10, [](Rng& rng) {
    const int h = 3, w = 4;
    const Tensor y = random_mask({1, 1, h, w}, rng);
    const Tensor dis = random_tensor({1, 1, h, w}, rng, 0.0, 2.0);
    LossWeights lw;
    lw.weight = uniform(rng, 0.0, 1.0);
    lw.adv_seg = uniform(rng, 0.0, 1.0);
    lw.adv_fea = uniform(rng, 0.0, 1.0);
    const bool base = (rng() & 1U) != 0;
    LossFn f = [=](const std::vector<ad::Var>& v) {
      DaLossParts parts;
      parts.seg = seg_loss(base ? ad::Var() : v[0], v[1], v[2], y, lw.seg);
      parts.weight = weight_discrepancy({v[3]}, {v[4]});
      parts.adv_seg = adv_seg_loss(ad::Var(), v[5], dis, lw.dis, Side::kGenerator);
      parts.adv_fea = adv_fea_loss(ad::Var(), v[6], Side::kGenerator);
      return total_da_loss(parts, lw, base);
    };
    std::vector<Tensor> in{random_tensor({1, 2, h, w}, rng, -2, 2), random_tensor({1, 2, h, w}, rng, -2, 2),
                           random_tensor({1, 2, h, w}, rng, -2, 2), random_tensor({2, 2, 1, 1}, rng),
                           random_tensor({2, 2, 1, 1}, rng),       random_tensor({1, 1, h, w}, rng, -3, 3),
                           random_tensor({1, 1, 1, 1}, rng, -3, 3)};
    return std::pair{f, in};
  }));

  return out;
}

}  // namespace dasc::check
