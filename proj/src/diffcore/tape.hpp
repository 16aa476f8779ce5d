#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "diffcore/array.hpp"

namespace pbcnn::diffcore {

struct NodeId {
  std::size_t index = 0;
  bool operator==(const NodeId&) const = default;
};

class Tape;

/// Gradients of a scalar loss with respect to every parameter node.
class Gradients {
public:
  const Array& operator[](NodeId parameter) const;
  bool contains(NodeId parameter) const;

private:
  friend class Tape;
  std::vector<NodeId> ids_;
  std::vector<Array> grads_;
};

/// Records primitive applications in execution order; `gradient` replays
/// them in reverse. Single use: one reverse pass per tape.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  NodeId constant(Array value);
  NodeId parameter(Array value);

  const Array& value(NodeId id) const { return nodes_.at(id.index).value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId add_scalar(NodeId a, double offset);
  NodeId square(NodeId a);
  NodeId log(NodeId a);
  NodeId exp(NodeId a);
  NodeId softplus(NodeId a);
  NodeId relu(NodeId a);
  NodeId sum(NodeId a);
  NodeId reshape(NodeId a, Extents extents);
  NodeId conv2d(NodeId input, NodeId kernel, NodeId bias);
  NodeId maxpool2d(NodeId input);
  NodeId dense_affine(NodeId input, NodeId weight, NodeId bias);
  NodeId softmax(NodeId logits);
  /// -sum(labels * ln(max(p, 1e-12))); labels must be one-hot rows.
  NodeId nll_one_hot(NodeId probabilities, const Array& labels);

  /// Reverse accumulation from a scalar node.
  Gradients gradient(NodeId loss);

private:
  using Backward = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Array value;
    Array grad;
    Backward backward;
    bool requires_grad = false;
    bool is_parameter = false;
  };

  NodeId push(Array value, bool requires_grad, Backward backward);
  bool needs(NodeId id) const { return nodes_[id.index].requires_grad; }
  Array& grad_of(NodeId id);
  void accumulate(NodeId id, const Array& g);

  std::deque<Node> nodes_;  // stable references across push_back
  bool consumed_ = false;
};

/// ln(1 + e^x) without overflow.
double softplus(double x);
/// d softplus / dx.
double sigmoid(double x);

}  // namespace pbcnn::diffcore
