#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "cascade/tensor.hpp"

namespace cascade::nn {

/// A value in the computation graph. Gradients accumulate into `grad`, which
/// stays empty until something flows into it.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Tensor& g);
  /// Zero-filled gradient buffer, allocated on first use.
  Tensor& grad_buffer();
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor t);
Var parameter(Tensor t);

/// True if any of the inputs needs a gradient.
bool needs_grad(std::initializer_list<const Var*> vars);
bool needs_grad(const std::vector<Var>& vars);

/// While alive on a thread, new nodes never record a backward function.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

/// Builds a node; the backward function is dropped when no parent needs it.
Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward_fn);

/// Reverse pass from a scalar output.
void backward(const Var& loss);

}  // namespace cascade::nn
