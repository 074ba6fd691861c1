#include "mdpar/head.hpp"

#include <iostream>

#include "mdpar/errors.hpp"

namespace mdpar {

DatasetHead make_head(const std::string& dataset_id, int attribute_count,
                      int dim, RngState& rng) {
  DatasetHead head;
  head.dataset_id = dataset_id;
  head.weight = Tensor::gaussian({attribute_count, dim}, rng, 0.02, true);
  head.bn_gain = Tensor::full({attribute_count}, Scalar{1}, true);
  head.bn_bias = Tensor::zeros({attribute_count}, true);
  head.bn_running_mean.assign(static_cast<size_t>(attribute_count), Scalar{0});
  head.bn_running_var.assign(static_cast<size_t>(attribute_count), Scalar{1});
  return head;
}

void HeadRegistry::register_head(DatasetHead head) {
  if (id_index_.count(head.dataset_id)) {
    throw ConfigError("head registry: duplicate dataset id '" +
                      head.dataset_id + "'");
  }
  const std::size_t idx = heads_.size();
  id_index_.emplace(head.dataset_id, idx);
  count_index_[head.attribute_count()].push_back(idx);
  heads_.push_back(std::move(head));
}

DatasetHead& HeadRegistry::by_id(const std::string& dataset_id) {
  auto it = id_index_.find(dataset_id);
  if (it == id_index_.end()) {
    throw RoutingError("head registry: unknown dataset id '" + dataset_id +
                       "'");
  }
  return heads_[it->second];
}

DatasetHead& HeadRegistry::route(int query_count,
                                 const std::string& dataset_id) {
  auto id_it = id_index_.find(dataset_id);
  if (id_it == id_index_.end()) {
    throw RoutingError("head routing: unknown dataset id '" + dataset_id +
                       "'");
  }
  auto count_it = count_index_.find(query_count);
  if (count_it == count_index_.end() || count_it->second.empty()) {
    throw RoutingError("head routing: no registered head with " +
                       std::to_string(query_count) + " attributes");
  }
  const auto& candidates = count_it->second;
  if (candidates.size() == 1) {
    DatasetHead& head = heads_[candidates[0]];
    if (head.dataset_id != dataset_id) {
      throw RoutingError("head routing: query count " +
                         std::to_string(query_count) + " selects '" +
                         head.dataset_id + "' but the batch is tagged '" +
                         dataset_id + "'");
    }
    return head;
  }
  if (!collision_warned_) {
    collision_warned_ = true;
    std::cerr << "head routing: attribute count " << query_count
              << " is shared by multiple datasets; routing by dataset id\n";
  }
  return heads_[id_it->second];
}

Tensor predict(DatasetHead& head, const std::vector<Tensor>& features,
               Mode mode) {
  const int batch = static_cast<int>(features.size());
  if (batch < 1) throw ContractError("predict: empty batch");
  const int attrs = head.attribute_count();
  const int dim = head.weight.dim(1);
  for (const auto& f : features) {
    if (f.rank() != 2 || f.dim(0) != attrs || f.dim(1) != dim) {
      throw ShapeError("predict: feature block " + shape_str(f.shape()) +
                       " does not match head [" + std::to_string(attrs) +
                       ", " + std::to_string(dim) + "]");
    }
  }
  std::vector<Tensor> logit_rows;
  logit_rows.reserve(features.size());
  for (const auto& f : features)
    logit_rows.push_back(rowwise_dot(head.weight, f));
  Tensor logits = stack0(logit_rows);  // [B x C]

  Tensor normed;
  if (mode == Mode::TRAIN) {
    if (batch == 1) {
      throw ContractError(
          "predict: TRAIN mode needs batch size >= 2 (batch variance "
          "undefined)");
    }
    std::vector<Scalar> batch_mean, batch_var;
    normed = batchnorm_train(logits, head.bn_gain, head.bn_bias, head.bn_eps,
                             &batch_mean, &batch_var);
    for (int c = 0; c < attrs; ++c) {
      head.bn_running_mean[c] =
          (Scalar{1} - head.bn_momentum) * head.bn_running_mean[c] +
          head.bn_momentum * batch_mean[c];
      head.bn_running_var[c] =
          (Scalar{1} - head.bn_momentum) * head.bn_running_var[c] +
          head.bn_momentum * batch_var[c];
    }
  } else {
    normed = batchnorm_eval(logits, head.bn_gain, head.bn_bias,
                            head.bn_running_mean, head.bn_running_var,
                            head.bn_eps);
  }
  return sigmoid(normed);
}

}  // namespace mdpar
