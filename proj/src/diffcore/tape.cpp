#include "diffcore/tape.hpp"

#include <algorithm>
#include <cmath>

#include "common/errors.hpp"
#include "diffcore/kernels.hpp"

namespace pbcnn::diffcore {

namespace {
constexpr double kProbabilityFloor = 1e-12;
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const Array& Gradients::operator[](NodeId parameter) const {
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i] == parameter) return grads_[i];
  }
  throw ContractError("no gradient recorded for node " + std::to_string(parameter.index));
}

bool Gradients::contains(NodeId parameter) const {
  return std::find(ids_.begin(), ids_.end(), parameter) != ids_.end();
}

NodeId Tape::push(Array value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Array{}, std::move(backward), requires_grad, false});
  return NodeId{nodes_.size() - 1};
}

Array& Tape::grad_of(NodeId id) {
  Node& n = nodes_[id.index];
  if (n.grad.size() != n.value.size()) n.grad = Array(n.value.extents());
  return n.grad;
}

void Tape::accumulate(NodeId id, const Array& g) {
  Array& dst = grad_of(id);
  const double* s = g.data();
  double* d = dst.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

NodeId Tape::constant(Array value) { return push(std::move(value), false, nullptr); }

NodeId Tape::parameter(Array value) {
  NodeId id = push(std::move(value), true, nullptr);
  nodes_[id.index].is_parameter = true;
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
  require_same_extents(value(a), value(b), "add");
  Array out = value(a);
  const Array& vb = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    if (t.needs(a)) t.accumulate(a, g);
    if (t.needs(b)) t.accumulate(b, g);
  });
}

NodeId Tape::sub(NodeId a, NodeId b) {
  require_same_extents(value(a), value(b), "sub");
  Array out = value(a);
  const Array& vb = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    if (t.needs(a)) t.accumulate(a, g);
    if (t.needs(b)) {
      Array& gb = t.grad_of(b);
      const Array& gs = t.nodes_[self].grad;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gs[i];
    }
  });
}

NodeId Tape::mul(NodeId a, NodeId b) {
  require_same_extents(value(a), value(b), "mul");
  Array out = value(a);
  const Array& vb = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    if (t.needs(a)) {
      Array& ga = t.grad_of(a);
      const Array& vb = t.value(b);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.needs(b)) {
      Array& gb = t.grad_of(b);
      const Array& va = t.value(a);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

NodeId Tape::scale(NodeId a, double factor) {
  Array out = value(a);
  for (double& v : out.values()) v *= factor;
  return push(std::move(out), needs(a), [a, factor](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    Array& ga = t.grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * g[i];
  });
}

NodeId Tape::add_scalar(NodeId a, double offset) {
  Array out = value(a);
  for (double& v : out.values()) v += offset;
  return push(std::move(out), needs(a), [a](Tape& t, std::size_t self) {
    t.accumulate(a, t.nodes_[self].grad);
  });
}

NodeId Tape::square(NodeId a) {
  Array out = value(a);
  for (double& v : out.values()) v *= v;
  return push(std::move(out), needs(a), [a](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    const Array& va = t.value(a);
    Array& ga = t.grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * va[i] * g[i];
  });
}

NodeId Tape::log(NodeId a) {
  Array out = value(a);
  for (double& v : out.values()) {
    if (!(v > 0.0)) throw NumericError("log of nonpositive value");
    v = std::log(v);
  }
  return push(std::move(out), needs(a), [a](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    const Array& va = t.value(a);
    Array& ga = t.grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / va[i];
  });
}

NodeId Tape::exp(NodeId a) {
  Array out = value(a);
  for (double& v : out.values()) v = std::exp(v);
  return push(std::move(out), needs(a), [a](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    const Array& vo = t.nodes_[self].value;
    Array& ga = t.grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * vo[i];
  });
}

NodeId Tape::softplus(NodeId a) {
  Array out = value(a);
  for (double& v : out.values()) v = diffcore::softplus(v);
  return push(std::move(out), needs(a), [a](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    const Array& va = t.value(a);
    Array& ga = t.grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * sigmoid(va[i]);
  });
}

NodeId Tape::relu(NodeId a) {
  return push(diffcore::relu(value(a)), needs(a), [a](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    const Array& va = t.value(a);
    Array& ga = t.grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (va[i] > 0.0) ga[i] += g[i];
    }
  });
}

NodeId Tape::sum(NodeId a) {
  double total = 0.0;
  for (double v : value(a).values()) total += v;
  return push(Array::scalar(total), needs(a), [a](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    Array& ga = t.grad_of(a);
    for (double& v : ga.values()) v += g;
  });
}

NodeId Tape::reshape(NodeId a, Extents extents) {
  return push(value(a).reshaped(std::move(extents)), needs(a), [a](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    Array& ga = t.grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
}

NodeId Tape::conv2d(NodeId input, NodeId kernel, NodeId bias) {
  Array out = diffcore::conv2d(value(input), value(kernel), value(bias));
  const bool rg = needs(input) || needs(kernel) || needs(bias);
  return push(std::move(out), rg, [input, kernel, bias](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    if (t.needs(input)) {
      t.accumulate(input, conv2d_grad_input(g, t.value(kernel), t.value(input).extents()));
    }
    if (t.needs(kernel)) {
      t.accumulate(kernel, conv2d_grad_kernel(t.value(input), g, t.value(kernel).extents()));
    }
    if (t.needs(bias)) t.accumulate(bias, conv2d_grad_bias(g));
  });
}

NodeId Tape::maxpool2d(NodeId input) {
  PoolResult r = maxpool2d_indexed(value(input));
  return push(std::move(r.output), needs(input),
              [input, idx = std::move(r.argmax)](Tape& t, std::size_t self) {
                t.accumulate(input, maxpool2d_grad(t.nodes_[self].grad, idx,
                                                   t.value(input).extents()));
              });
}

NodeId Tape::dense_affine(NodeId input, NodeId weight, NodeId bias) {
  Array out = diffcore::dense_affine(value(input), value(weight), value(bias));
  const bool rg = needs(input) || needs(weight) || needs(bias);
  return push(std::move(out), rg, [input, weight, bias](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    if (t.needs(input)) t.accumulate(input, dense_grad_input(g, t.value(weight)));
    if (t.needs(weight)) t.accumulate(weight, dense_grad_weight(t.value(input), g));
    if (t.needs(bias)) t.accumulate(bias, dense_grad_bias(g));
  });
}

NodeId Tape::softmax(NodeId logits) {
  return push(diffcore::softmax(value(logits)), needs(logits), [logits](Tape& t, std::size_t self) {
    const Array& g = t.nodes_[self].grad;
    const Array& p = t.nodes_[self].value;
    Array& gl = t.grad_of(logits);
    const std::size_t cols = p.extents().back();
    const std::size_t rows = p.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* pr = p.data() + r * cols;
      const double* gr = g.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += pr[c] * gr[c];
      double* out = gl.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) out[c] += pr[c] * (gr[c] - dot);
    }
  });
}

NodeId Tape::nll_one_hot(NodeId probabilities, const Array& labels) {
  const Array& p = value(probabilities);
  require_same_extents(p, labels, "nll_one_hot");
  const std::size_t cols = labels.extents().back();
  const std::size_t rows = labels.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t ones = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double y = labels[r * cols + c];
      if (y == 1.0) {
        ++ones;
      } else if (y != 0.0) {
        throw ContractError("nll_one_hot: label row " + std::to_string(r) + " is not one-hot");
      }
    }
    if (ones != 1) {
      throw ContractError("nll_one_hot: label row " + std::to_string(r) + " is not one-hot");
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (labels[i] != 0.0) total -= labels[i] * std::log(std::max(p[i], kProbabilityFloor));
  }
  return push(Array::scalar(total), needs(probabilities),
              [probabilities, labels](Tape& t, std::size_t self) {
                const double g = t.nodes_[self].grad[0];
                const Array& pv = t.value(probabilities);
                Array& gp = t.grad_of(probabilities);
                for (std::size_t i = 0; i < gp.size(); ++i) {
                  if (labels[i] != 0.0 && pv[i] > kProbabilityFloor) {
                    gp[i] -= g * labels[i] / pv[i];
                  }
                }
              });
}

Gradients Tape::gradient(NodeId loss) {
  if (consumed_) throw ContractError("tape already consumed by a reverse pass");
  if (loss.index >= nodes_.size()) throw ContractError("loss node not on this tape");
  if (value(loss).size() != 1) {
    throw ContractError("gradient requires a scalar loss, got extents " +
                        describe(value(loss).extents()));
  }
  consumed_ = true;
  Gradients out;
  if (nodes_[loss.index].requires_grad) {
    grad_of(loss)[0] = 1.0;
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
      n.backward(*this, i);
      // Intermediate gradients are dead once propagated.
      n.grad = Array{};
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].is_parameter) continue;
    out.ids_.push_back(NodeId{i});
    if (nodes_[i].grad.size() == nodes_[i].value.size()) {
      out.grads_.push_back(std::move(nodes_[i].grad));
    } else {
      out.grads_.push_back(Array(nodes_[i].value.extents()));
    }
  }
  return out;
}

}  // namespace pbcnn::diffcore
