#pragma once

// Central-difference gradient checker shared by the unit tests and the
// acceptance gate.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dasc/autograd.hpp"
#include "dasc/rng.hpp"

namespace dasc::check {

using LossFn = std::function<ad::Var(const std::vector<ad::Var>&)>;

struct GradCheck {
  double max_rel_err = 0.0;
  int probes = 0;
};

inline double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); }

/// Compares d f / d inputs[k][i] against (f(x+h) - f(x-h)) / 2h on up to
/// `max_probes` randomly chosen entries per input.
inline GradCheck gradcheck(const LossFn& f, const std::vector<Tensor>& inputs, Rng& rng, int max_probes = 12,
                           double h = 1e-5) {
  std::vector<ad::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(ad::parameter(t));
  ad::backward(f(leaves));
  std::vector<Tensor> grads;
  for (const auto& l : leaves) grads.push_back(l.grad().empty() ? Tensor::zeros_like(l.value()) : l.grad());

  auto eval = [&](const std::vector<Tensor>& xs) {
    ad::NoGradGuard ng;
    std::vector<ad::Var> c;
    for (const auto& t : xs) c.push_back(ad::constant(t));
    return f(c).item();
  };

  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<std::size_t> idx(inputs[k].size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(max_probes)));
    for (std::size_t i : idx) {
      std::vector<Tensor> plus = inputs, minus = inputs;
      plus[k][i] += h;
      minus[k][i] -= h;
      const double num = (eval(plus) - eval(minus)) / (2.0 * h);
      out.max_rel_err = std::max(out.max_rel_err, rel_err(grads[k][i], num));
      ++out.probes;
    }
  }
  return out;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(rng, lo, hi);
  return t;
}

}  // namespace dasc::check
