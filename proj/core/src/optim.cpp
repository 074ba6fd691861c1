#include "mdpar/optim.hpp"

#include <cmath>

#include "mdpar/errors.hpp"

namespace mdpar {

AdamW::AdamW(std::vector<NamedTensor> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  slots_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    slots_[i].m.assign(params_[i].value.numel(), Scalar{0});
    slots_[i].v.assign(params_[i].value.numel(), Scalar{0});
  }
}

void AdamW::step(Scalar lr) {
  // Validate first so an aborted step leaves every parameter untouched.
  for (const auto& p : params_) {
    if (!p.value.has_grad()) continue;
    for (Scalar g : p.value.grad()) {
      if (std::isnan(g)) {
        throw ContractError("adamw: NaN gradient in parameter '" + p.name +
                            "'");
      }
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.value.has_grad()) continue;
    auto& slot = slots_[i];
    slot.t += 1;
    auto data = p.value.mutable_data();
    auto grad = p.value.grad();
    const Scalar bc1 =
        Scalar{1} - static_cast<Scalar>(
                        std::pow(static_cast<double>(options_.beta1),
                                 static_cast<double>(slot.t)));
    const Scalar bc2 =
        Scalar{1} - static_cast<Scalar>(
                        std::pow(static_cast<double>(options_.beta2),
                                 static_cast<double>(slot.t)));
    for (std::size_t j = 0; j < data.size(); ++j) {
      // Decoupled decay, independent of the gradient moments.
      data[j] *= (Scalar{1} - lr * options_.weight_decay);
      slot.m[j] = options_.beta1 * slot.m[j] +
                  (Scalar{1} - options_.beta1) * grad[j];
      slot.v[j] = options_.beta2 * slot.v[j] +
                  (Scalar{1} - options_.beta2) * grad[j] * grad[j];
      const Scalar mhat = slot.m[j] / bc1;
      const Scalar vhat = slot.v[j] / bc2;
      data[j] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.value.reset_grad();
}

}  // namespace mdpar
