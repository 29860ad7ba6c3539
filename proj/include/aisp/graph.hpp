#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

#include "aisp/tensor.hpp"

namespace aisp {

class Graph;

/// Handle to a tensor recorded in a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape.
///
/// Nodes are appended in execution order, so the node index is a topological
/// order. A graph supports exactly one backward pass; build a new graph for
/// the next forward pass.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  // Appends an operation output. `backward` receives d(loss)/d(output) and
  // must accumulate into the inputs through grad_accumulator().
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  Tensor& grad_accumulator(Var v);

  // d(loss)/d(v) after backward(); zeros for nodes the loss never reached.
  Tensor grad(Var v) const;

  void backward(Var loss);
  bool backward_done() const noexcept { return backward_done_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Branch tracking for gradient checks: non-smooth operations fold the
  // branch taken per element (activation side, pooling winner, clamp state)
  // into one digest. Two evaluations with equal digests lie on the same
  // smooth piece.
  void track_branches(bool on) noexcept { tracking_ = on; }
  bool tracking_branches() const noexcept { return tracking_; }
  void note_branches(std::uint64_t digest) noexcept {
    signature_ = (signature_ ^ digest) * 1099511628211ULL;
  }
  std::uint64_t branch_signature() const noexcept { return signature_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  bool tracking_ = false;
  std::uint64_t signature_ = 14695981039346656037ULL;
};

}  // namespace aisp
