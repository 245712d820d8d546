#include "dasc/optim.hpp"

#include <cmath>
#include <string>

#include "dasc/error.hpp"

namespace dasc {

double poly_lr(double base_lr, std::int64_t iteration, std::int64_t total_iterations, double power) {
  if (total_iterations <= 0) throw ConfigError("poly_lr: total iterations must be positive");
  if (iteration < 0 || iteration > total_iterations) {
    throw ConfigError("poly_lr: iteration " + std::to_string(iteration) + " outside [0, " +
                      std::to_string(total_iterations) + "]");
  }
  if (iteration == total_iterations) return 0.0;
  const double frac = 1.0 - static_cast<double>(iteration) / static_cast<double>(total_iterations);
  return base_lr * std::pow(frac, power);
}

Adam::Adam(std::vector<ad::Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    state_.m.emplace_back(p.shape());
    state_.v.emplace_back(p.shape());
  }
}

void Adam::step() {
  ++state_.step;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.step));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.step));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const Tensor& g = params_[k].grad();
    if (g.empty()) continue;
    Tensor& w = params_[k].mutable_value();
    Tensor& m = state_.m[k];
    Tensor& v = state_.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

void Adam::zero_grad() const {
  for (const auto& p : params_) p.zero_grad();
}

void Adam::load_state(AdamState state) {
  if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
    throw ShapeError("Adam: state does not match parameter count");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (state.m[k].shape() != params_[k].shape() || state.v[k].shape() != params_[k].shape()) {
      throw ShapeError("Adam: state shape mismatch at parameter " + std::to_string(k));
    }
  }
  state_ = std::move(state);
}

}  // namespace dasc
