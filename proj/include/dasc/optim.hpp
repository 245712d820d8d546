#pragma once

#include <cstdint>
#include <vector>

#include "dasc/autograd.hpp"

namespace dasc {

/// base * (1 - iteration/total)^power. Throws when iteration is outside [0, total].
double poly_lr(double base_lr, std::int64_t iteration, std::int64_t total_iterations, double power = 0.9);

struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

class Adam {
 public:
  Adam(std::vector<ad::Var> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update from the accumulated gradients. Parameters without a
  /// gradient this step are left alone (their moments do not decay either).
  void step();
  void zero_grad() const;

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  const AdamState& state() const { return state_; }
  void load_state(AdamState state);
  const std::vector<ad::Var>& params() const { return params_; }

 private:
  std::vector<ad::Var> params_;
  double lr_, beta1_, beta2_, eps_;
  AdamState state_;
};

}  // namespace dasc
