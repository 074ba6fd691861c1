#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mdpar/rng.hpp"

namespace mdpar {

// Scalar width is a build-time switch: 64-bit by default so finite-difference
// gradient checks have headroom; -DMDPAR_SCALAR_FLOAT32 selects 32-bit for
// training-only builds.
#if defined(MDPAR_SCALAR_FLOAT32)
using Scalar = float;
#else
using Scalar = double;
#endif

struct TensorImpl;

// Dense row-major n-dimensional array with optional gradient. Tensors are
// value types over a shared node; once a tensor participates in a recorded
// graph its payload is treated as immutable.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, Scalar value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<Scalar> data,
                          bool requires_grad = false);
  static Tensor gaussian(std::vector<int> shape, RngState& rng, double stdev,
                         bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const;
  int rank() const;
  int dim(int i) const;
  std::size_t numel() const;

  std::span<const Scalar> data() const;
  // Writable view. Only valid before the tensor enters a graph.
  std::span<Scalar> mutable_data();
  Scalar item() const;  // requires numel() == 1

  bool requires_grad() const;
  void set_requires_grad(bool v);

  // Gradient accessors. `has_grad()` is false until backward touches this
  // tensor; an untouched gradient is exactly zero by definition.
  bool has_grad() const;
  std::span<const Scalar> grad() const;
  std::span<Scalar> grad_mutable();
  void reset_grad();  // deallocate, back to the untouched state

  std::shared_ptr<TensorImpl> impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct TensorImpl {
  std::vector<int> shape;
  std::vector<Scalar> data;
  bool requires_grad = false;
  std::vector<Scalar> grad;  // empty until first accumulation

  // Scratch gradient for the backward pass in flight. Keeping the per-pass
  // flow separate from `grad` is what makes repeated backward calls
  // accumulate instead of compounding.
  std::vector<Scalar> pass_grad;

  // Autodiff record. `id` is a process-wide creation counter: parents are
  // always created before children, so ascending id is a topological order.
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void()> backward_fn;

  std::span<Scalar> grad_buffer();  // allocates zeros on first touch
  std::span<Scalar> pass_buffer();
};

// Reverse-mode tape. Trace collects every node reachable from a root through
// parent links and orders them so each node appears after all of its inputs.
struct Graph {
  std::vector<std::shared_ptr<TensorImpl>> nodes;  // topological order
  static Graph trace(const Tensor& root);
};

// Populates gradients of everything `loss` depends on. `loss` must be scalar.
// Repeated calls accumulate; call reset_grad (or the optimizer's zero_grad)
// between steps.
void backward(const Tensor& loss);
void backward(const Graph& graph, const Tensor& loss);

// Thread-local switch: while disabled, ops do not record backward closures.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

std::string shape_str(const std::vector<int>& shape);

}  // namespace mdpar
