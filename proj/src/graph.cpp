#include "aisp/graph.hpp"

#include "aisp/errors.hpp"

namespace aisp {

const Tensor& Var::value() const {
  if (graph == nullptr) throw UsageError("Var is not attached to a graph");
  return graph->value(*this);
}

const Graph::Node& Graph::node(Var v) const {
  if (v.graph != this || v.id >= nodes_.size()) throw UsageError("Var belongs to another graph");
  return nodes_[v.id];
}

Graph::Node& Graph::node(Var v) {
  if (v.graph != this || v.id >= nodes_.size()) throw UsageError("Var belongs to another graph");
  return nodes_[v.id];
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Graph::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor{}, true, {}});
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  if (backward_done_) throw UsageError("graph already consumed by backward()");
  bool needs = false;
  for (const auto& in : inputs) needs = needs || node(in).requires_grad;
  nodes_.push_back(Node{std::move(value), Tensor{}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor& Graph::grad_accumulator(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (backward_done_) throw UsageError("backward() called twice on the same graph");
  const Node& root = node(loss);
  if (root.value.numel() != 1) throw DimensionError("backward() needs a scalar loss");
  backward_done_ = true;
  if (!root.requires_grad) return;
  grad_accumulator(loss)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

}  // namespace aisp
