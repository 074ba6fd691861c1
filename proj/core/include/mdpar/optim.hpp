#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdpar/tensor.hpp"

namespace mdpar {

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct AdamWOptions {
  Scalar lr = Scalar{8e-3};
  Scalar weight_decay = Scalar{1e-4};
  Scalar beta1 = Scalar{0.9};
  Scalar beta2 = Scalar{0.999};
  Scalar eps = Scalar{1e-8};
};

// AdamW with decoupled weight decay. Parameters that received no gradient
// since the last zero_grad() are skipped entirely, which keeps per-dataset
// heads and query tables isolated from each other's training steps.
class AdamW {
 public:
  AdamW(std::vector<NamedTensor> params, AdamWOptions options);

  // One update at learning rate `lr` (overrides options.lr for this step).
  // Any NaN gradient aborts before mutating state, naming the parameter.
  void step(Scalar lr);
  void step() { step(options_.lr); }

  void zero_grad();

  const AdamWOptions& options() const { return options_; }
  const std::vector<NamedTensor>& params() const { return params_; }

  struct Slot {
    std::uint64_t t = 0;  // per-parameter step count for bias correction
    std::vector<Scalar> m;
    std::vector<Scalar> v;
  };
  const std::vector<Slot>& slots() const { return slots_; }
  std::vector<Slot>& slots_mutable() { return slots_; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<Slot> slots_;
  AdamWOptions options_;
};

}  // namespace mdpar
