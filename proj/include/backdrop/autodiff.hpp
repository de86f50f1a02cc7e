#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "backdrop/kernels.hpp"
#include "backdrop/tensor.hpp"

namespace backdrop {

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so replaying
/// them backward is a reverse topological traversal. Parameter leaves refer to
/// caller-owned tensors; `backward` accumulates into their `grad` buffers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a trainable tensor. It must outlive the tape.
  Var parameter(Tensor& p);
  Var constant(Tensor t);

  const Tensor& value(Var v) const;
  /// Gradient of the last `backward` root w.r.t. this node.
  std::span<const double> grad(Var v) const;

  Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding);
  /// x: [C,H,W], b: [C]; adds b[c] to every cell of channel c.
  Var channel_bias(Var x, Var b);
  Var relu(Var x);
  /// [C,H,W] -> [C], arithmetic mean per channel.
  Var global_avg_pool(Var x);
  /// x: [K], w: [K,N], b: [N] -> [N]
  Var dense(Var x, Var w, Var b);
  /// Scalar -log softmax(logits)[label], max-shifted.
  Var softmax_cross_entropy(Var logits, std::size_t label);
  /// Scalar lambda * sum |w| over the given nodes; subgradient sign(0) = 0.
  Var l1_penalty(std::span<const Var> params, double lambda);
  /// Sum of scalar nodes times `scale`.
  Var scaled_sum(std::span<const Var> scalars, double scale);
  Var add(Var a, Var b);

  /// Seeds d(root)=1 and propagates. Returns the number of nodes visited.
  std::size_t backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    Tensor* external = nullptr;
    std::vector<double> grad;
    std::function<void(Tape&, std::size_t)> backprop;
  };

  Var push(Tensor value, std::function<void(Tape&, std::size_t)> backprop);
  const Tensor& val(std::size_t id) const;
  std::vector<double>& g(std::size_t id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace backdrop
