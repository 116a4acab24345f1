#include "cascade/nn/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace cascade::nn {

void Node::accumulate(const Tensor& g) {
  if (grad.empty()) {
    grad = g;
    return;
  }
  if (grad.shape() != g.shape()) {
    throw std::logic_error("gradient shape mismatch " + grad.shape().str() +
                           " vs " + g.shape().str());
  }
  float* dst = grad.data();
  const float* src = g.data();
  for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
}

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return n;
}

Var parameter(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return n;
}

bool needs_grad(std::initializer_list<const Var*> vars) {
  for (const Var* v : vars) {
    if (v && *v && (*v)->requires_grad) return true;
  }
  return false;
}

bool needs_grad(const std::vector<Var>& vars) {
  for (const auto& v : vars) {
    if (v && v->requires_grad) return true;
  }
  return false;
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var make_node(Tensor value, std::vector<Var> parents,
              std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled && needs_grad(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void backward(const Var& loss) {
  if (!loss->requires_grad) {
    throw std::logic_error("backward: output does not depend on parameters");
  }
  if (loss->value.size() != 1) {
    throw std::logic_error("backward: output must be a scalar");
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && !p->parents.empty() && seen.insert(p).second) {
        stack.emplace_back(p, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }
  loss->grad = Tensor(loss->value.shape(), 1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Release intermediate buffers; parameters keep theirs.
  for (Node* n : order) {
    if (n != loss.get()) n->grad = Tensor();
  }
}

}  // namespace cascade::nn
