#pragma once

#include <map>
#include <string>
#include <vector>

#include "mdpar/tensor.hpp"

namespace mdpar {

// Per-attribute imbalance weights, w_j = log(1/r_j + 1) on rates clamped to
// [1e-4, 1] so absent attributes get a finite large weight.
struct AttributeWeights {
  std::string dataset_id;
  std::vector<Scalar> rates;    // clamped positive rates, in (0, 1]
  std::vector<Scalar> weights;  // all > 0
};

AttributeWeights compute_weights(const std::string& dataset_id,
                                 const std::vector<Scalar>& positive_rates);

// Per-dataset loss multipliers for joint training; unset datasets default
// to 1.0 at registration.
struct LossRates {
  std::map<std::string, Scalar> rates;

  Scalar rate_for(const std::string& dataset_id) const;
};

// L = (1/B) sum_i sum_j mask_ij * w_j * BCE(p_ij, y_ij), with probabilities
// clamped to [1e-7, 1 - 1e-7] inside the logs. Labels and mask must be
// exactly 0/1; masked positions contribute exactly zero.
Tensor weighted_bce(const Tensor& probs, const Tensor& labels,
                    const Tensor& mask, const AttributeWeights& weights);

Tensor apply_lossrate(const Tensor& loss, const std::string& dataset_id,
                      const LossRates& rates);

}  // namespace mdpar
