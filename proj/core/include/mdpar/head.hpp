#pragma once

#include <map>
#include <string>
#include <vector>

#include "mdpar/ops.hpp"
#include "mdpar/tensor.hpp"

namespace mdpar {

enum class Mode { TRAIN, EVAL };

// Per-dataset classifier: per-attribute linear map (no bias; batch norm's
// shift subsumes it), 1-D batch normalization over the batch per attribute
// channel, sigmoid.
struct DatasetHead {
  std::string dataset_id;
  Tensor weight;   // [C x d], row j scores attribute j
  Tensor bn_gain;  // [C]
  Tensor bn_bias;  // [C]
  std::vector<Scalar> bn_running_mean;  // length C
  std::vector<Scalar> bn_running_var;   // length C
  Scalar bn_momentum = Scalar{0.1};
  Scalar bn_eps = Scalar{1e-5};

  int attribute_count() const { return weight.dim(0); }
};

DatasetHead make_head(const std::string& dataset_id, int attribute_count,
                      int dim, RngState& rng);

class HeadRegistry {
 public:
  void register_head(DatasetHead head);

  // Routes by attribute count when the count is unique among registered
  // datasets; on a collision falls back to the dataset id and emits a
  // one-time diagnostic on stderr.
  DatasetHead& route(int query_count, const std::string& dataset_id);

  DatasetHead& by_id(const std::string& dataset_id);
  const std::vector<DatasetHead>& heads() const { return heads_; }
  std::vector<DatasetHead>& heads_mutable() { return heads_; }

 private:
  std::vector<DatasetHead> heads_;  // registration order
  std::map<std::string, std::size_t> id_index_;
  std::map<int, std::vector<std::size_t>> count_index_;
  bool collision_warned_ = false;
};

// probs[b, j] = sigmoid(BN(dot(W_j, f_b[j, :]))). `features` holds one
// [C x d] matrix per batch element. TRAIN mode normalizes with batch
// statistics and updates the running stats; EVAL uses running stats and
// mutates nothing.
Tensor predict(DatasetHead& head, const std::vector<Tensor>& features,
               Mode mode);

}  // namespace mdpar
