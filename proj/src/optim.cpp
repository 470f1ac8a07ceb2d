#include "nasrec/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace nasrec {

template <typename Real>
void adagrad_update(std::span<Real> params, std::span<const Real> grads, std::span<Real> accum,
                    Real lr, Real eps) {
  if (params.size() != grads.size() || params.size() != accum.size()) {
    throw ShapeError("adagrad_update", {params.size()}, {grads.size(), accum.size()});
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Real gi = grads[i];
    if (gi == Real(0)) continue;
    accum[i] += gi * gi;
    params[i] -= lr * gi / (std::sqrt(accum[i]) + eps);
  }
}

template <typename Real>
void Adagrad<Real>::step(ParamStore<Real>& params, double lr) const {
  for (auto& p : params) {
    if (!p.touched) continue;
    if (p.trainable) {
      adagrad_update<Real>(p.value.data(), p.grad.data(), p.accum.data(), static_cast<Real>(lr),
                           static_cast<Real>(eps_));
    }
    p.grad.fill(Real(0));
    p.touched = false;
  }
}

double cosine_lr(const LrSchedule& sched, std::int64_t step) {
  if (sched.total_steps <= 0) throw Error("cosine_lr: total_steps must be positive");
  if (step < 0 || step > sched.total_steps) {
    throw Error("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                std::to_string(sched.total_steps) + "]");
  }
  if (step == sched.total_steps) return 0.0;
  const double t = static_cast<double>(step) / static_cast<double>(sched.total_steps);
  return sched.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

template void adagrad_update<float>(std::span<float>, std::span<const float>, std::span<float>,
                                    float, float);
template void adagrad_update<double>(std::span<double>, std::span<const double>,
                                     std::span<double>, double, double);
template class Adagrad<float>;
template class Adagrad<double>;

}  // namespace nasrec
