#include "mdpar/loss.hpp"

#include <algorithm>
#include <cmath>

#include "mdpar/errors.hpp"
#include "mdpar/ops.hpp"

namespace mdpar {

namespace {
constexpr Scalar kRateFloor = Scalar{1e-4};
constexpr Scalar kProbFloor = Scalar{1e-7};
}  // namespace

AttributeWeights compute_weights(const std::string& dataset_id,
                                 const std::vector<Scalar>& positive_rates) {
  AttributeWeights w;
  w.dataset_id = dataset_id;
  w.rates.reserve(positive_rates.size());
  w.weights.reserve(positive_rates.size());
  for (std::size_t j = 0; j < positive_rates.size(); ++j) {
    const Scalar r = positive_rates[j];
    if (!(r >= Scalar{0} && r <= Scalar{1})) {
      throw DataError("compute_weights: rate " + std::to_string(r) +
                      " for attribute " + std::to_string(j) +
                      " outside [0, 1]");
    }
    const Scalar clamped = std::max(r, kRateFloor);
    w.rates.push_back(clamped);
    w.weights.push_back(
        static_cast<Scalar>(std::log(Scalar{1} / clamped + Scalar{1})));
  }
  return w;
}

Scalar LossRates::rate_for(const std::string& dataset_id) const {
  auto it = rates.find(dataset_id);
  if (it == rates.end()) {
    throw RoutingError("loss rates: unknown dataset '" + dataset_id + "'");
  }
  return it->second;
}

Tensor weighted_bce(const Tensor& probs, const Tensor& labels,
                    const Tensor& mask, const AttributeWeights& weights) {
  if (probs.rank() != 2) {
    throw ShapeError("weighted_bce: probs must be [B x C], got " +
                     shape_str(probs.shape()));
  }
  if (labels.shape() != probs.shape() || mask.shape() != probs.shape()) {
    throw ShapeError("weighted_bce: probs " + shape_str(probs.shape()) +
                     ", labels " + shape_str(labels.shape()) + ", mask " +
                     shape_str(mask.shape()) + " must agree");
  }
  const int batch = probs.dim(0), attrs = probs.dim(1);
  if (static_cast<int>(weights.weights.size()) != attrs) {
    throw ShapeError("weighted_bce: " +
                     std::to_string(weights.weights.size()) +
                     " weights for " + std::to_string(attrs) + " attributes");
  }
  auto dl = labels.data();
  auto dm = mask.data();
  for (std::size_t i = 0; i < dl.size(); ++i) {
    if (dl[i] != Scalar{0} && dl[i] != Scalar{1}) {
      throw DataError("weighted_bce: label value " + std::to_string(dl[i]) +
                      " outside {0, 1}");
    }
    if (dm[i] != Scalar{0} && dm[i] != Scalar{1}) {
      throw DataError("weighted_bce: mask value " + std::to_string(dm[i]) +
                      " outside {0, 1}");
    }
  }
  auto dp = probs.data();
  const auto& w = weights.weights;
  Scalar total{0};
  for (int b = 0; b < batch; ++b) {
    for (int j = 0; j < attrs; ++j) {
      const std::size_t i = static_cast<size_t>(b) * attrs + j;
      if (dm[i] == Scalar{0}) continue;
      const Scalar p =
          std::clamp(dp[i], kProbFloor, Scalar{1} - kProbFloor);
      const Scalar term = dl[i] == Scalar{1}
                              ? -std::log(p)
                              : -std::log(Scalar{1} - p);
      total += w[static_cast<size_t>(j)] * term;
    }
  }
  total /= static_cast<Scalar>(batch);
  Tensor r = Tensor::from_data({1}, {total});
  if (grad_enabled() && probs.requires_grad()) {
    auto impl = r.impl();
    impl->requires_grad = true;
    impl->parents.push_back(probs.impl());
    auto* self = impl.get();
    auto* pp = probs.impl().get();
    auto* plab = labels.impl().get();
    auto* pm = mask.impl().get();
    // labels/mask are held alive through the parents list even though no
    // gradient flows into them.
    impl->parents.push_back(labels.impl());
    impl->parents.push_back(mask.impl());
    impl->backward_fn = [self, pp, plab, pm, batch, attrs, w = w] {
      const Scalar g = self->pass_grad[0] / static_cast<Scalar>(batch);
      auto gp = pp->pass_buffer();
      for (int b = 0; b < batch; ++b) {
        for (int j = 0; j < attrs; ++j) {
          const std::size_t i = static_cast<size_t>(b) * attrs + j;
          if (pm->data[i] == Scalar{0}) continue;
          const Scalar p = pp->data[i];
          if (p < kProbFloor || p > Scalar{1} - kProbFloor) continue;  // clamp
          const Scalar d = plab->data[i] == Scalar{1}
                               ? -Scalar{1} / p
                               : Scalar{1} / (Scalar{1} - p);
          gp[i] += g * w[static_cast<size_t>(j)] * d;
        }
      }
    };
  }
  return r;
}

Tensor apply_lossrate(const Tensor& loss, const std::string& dataset_id,
                      const LossRates& rates) {
  return scale(loss, rates.rate_for(dataset_id));
}

}  // namespace mdpar
