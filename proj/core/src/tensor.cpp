#include "mdpar/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "mdpar/errors.hpp"

namespace mdpar {

namespace {

std::atomic<std::uint64_t> g_node_counter{0};
thread_local bool g_grad_enabled = true;

std::size_t checked_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) {
      throw ShapeError("tensor dimensions must be >= 1, got " +
                       shape_str(shape));
    }
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::shared_ptr<TensorImpl> make_impl(std::vector<int> shape,
                                      std::vector<Scalar> data,
                                      bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  impl->id = g_node_counter.fetch_add(1, std::memory_order_relaxed);
  return impl;
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  std::size_t n = checked_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<Scalar>(n, Scalar{0}),
                          requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, Scalar value, bool requires_grad) {
  std::size_t n = checked_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<Scalar>(n, value),
                          requires_grad));
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<Scalar> data,
                         bool requires_grad) {
  std::size_t n = checked_numel(shape);
  if (n != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  return Tensor(make_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::gaussian(std::vector<int> shape, RngState& rng, double stdev,
                        bool requires_grad) {
  std::size_t n = checked_numel(shape);
  std::vector<Scalar> data(n);
  for (auto& v : data) v = static_cast<Scalar>(stdev * rng_normal(rng));
  return Tensor(make_impl(std::move(shape), std::move(data), requires_grad));
}

const std::vector<int>& Tensor::shape() const { return impl_->shape; }
int Tensor::rank() const { return static_cast<int>(impl_->shape.size()); }
int Tensor::dim(int i) const { return impl_->shape.at(static_cast<size_t>(i)); }
std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const Scalar> Tensor::data() const { return impl_->data; }
std::span<Scalar> Tensor::mutable_data() { return impl_->data; }

Scalar Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() requires a scalar tensor, got shape " +
                        shape_str(impl_->shape));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool v) { impl_->requires_grad = v; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }
std::span<const Scalar> Tensor::grad() const { return impl_->grad; }
std::span<Scalar> Tensor::grad_mutable() { return impl_->grad_buffer(); }
void Tensor::reset_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

std::span<Scalar> TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), Scalar{0});
  return grad;
}

std::span<Scalar> TensorImpl::pass_buffer() {
  if (pass_grad.empty()) pass_grad.assign(data.size(), Scalar{0});
  return pass_grad;
}

Graph Graph::trace(const Tensor& root) {
  Graph g;
  if (!root.defined()) return g;
  std::unordered_set<const TensorImpl*> seen;
  std::vector<std::shared_ptr<TensorImpl>> stack{root.impl()};
  while (!stack.empty()) {
    auto node = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(node.get()).second) continue;
    for (const auto& p : node->parents) stack.push_back(p);
    g.nodes.push_back(std::move(node));
  }
  // Creation order is a topological order: inputs exist before outputs.
  std::sort(g.nodes.begin(), g.nodes.end(),
            [](const auto& a, const auto& b) { return a->id < b->id; });
  return g;
}

void backward(const Graph& graph, const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(loss.shape()));
  }
  loss.impl()->pass_buffer()[0] = Scalar{1};
  for (auto it = graph.nodes.rbegin(); it != graph.nodes.rend(); ++it) {
    const auto& node = *it;
    if (node->backward_fn && !node->pass_grad.empty()) node->backward_fn();
  }
  // Fold the pass into persistent gradients and clear the scratch space.
  for (const auto& node : graph.nodes) {
    if (node->pass_grad.empty()) continue;
    if (node->requires_grad) {
      auto buf = node->grad_buffer();
      for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += node->pass_grad[i];
    }
    node->pass_grad.clear();
  }
}

void backward(const Tensor& loss) { backward(Graph::trace(loss), loss); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace mdpar
