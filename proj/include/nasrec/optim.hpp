#pragma once

#include <cstdint>
#include <span>

#include "nasrec/params.hpp"

namespace nasrec {

inline constexpr double kDefaultBaseLr = 0.04;
inline constexpr double kAdagradEps = 1e-10;

// accum += grad^2; param -= lr * grad / (sqrt(accum) + eps)
template <typename Real>
void adagrad_update(std::span<Real> params, std::span<const Real> grads, std::span<Real> accum,
                    Real lr, Real eps = Real(kAdagradEps));

template <typename Real>
class Adagrad {
 public:
  explicit Adagrad(double base_lr = kDefaultBaseLr, double eps = kAdagradEps)
      : base_lr_(base_lr), eps_(eps) {}

  // Updates every trainable parameter touched since the last zero_grad(),
  // then clears the gradients.
  void step(ParamStore<Real>& params, double lr) const;

  double base_lr() const { return base_lr_; }
  double eps() const { return eps_; }

 private:
  double base_lr_;
  double eps_;
};

struct LrSchedule {
  double base_lr = kDefaultBaseLr;
  std::int64_t total_steps = 1;
};

// base_lr * 0.5 * (1 + cos(pi * step / total_steps)); no restarts, reaches 0.
double cosine_lr(const LrSchedule& sched, std::int64_t step);

}  // namespace nasrec
