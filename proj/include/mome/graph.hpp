#pragma once

#include <cstddef>
#include <unordered_map>
#include <vector>

#include "mome/tensor.hpp"

namespace mome {

// Handle into a Graph's tape.
struct Var {
  int id = -1;
};

// Reverse-mode autodiff tape. One Graph per training step; build the forward
// expression through the factory methods, call backward() on a 1x1 loss node,
// then read gradients back per parameter tensor.
//
// Parameters are registered by address: param(w) returns the same node for
// the same Tensor object, so a weight used twice accumulates both gradient
// contributions. The caller owns the weight storage and must keep it alive
// for the lifetime of the Graph.
class Graph {
 public:
  enum class Op {
    Leaf,
    Matmul,
    Transpose,
    Add,
    Sub,
    Mul,
    ScaleConst,
    ScalarMul,
    Silu,
    Sigmoid,
    Relu,
    Abs,
    Inv,
    SoftmaxRows,
    LogSoftmaxRows,
    LayerNormRows,
    Reshape,
    ConcatRows,
    ConcatCols,
    SliceRows,
    SliceCols,
    Pick,
    SumAll,
    MeanAll,
    MeanRows,
  };

  // Constant input; no gradient is reported for it.
  Var leaf(Tensor v);
  // Trainable leaf, memoized by address.
  Var param(const Tensor& w);

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  // s must be 1x1; result is s * x elementwise, differentiable in both.
  Var scalar_mul(Var s, Var x);
  Var silu(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var abs(Var a);
  Var inv(Var a);
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var layer_norm_rows(Var a);
  Var reshape(Var a, std::size_t r, std::size_t c);
  Var concat_rows(Var a, Var b);
  Var concat_cols(Var a, Var b);
  Var slice_rows(Var a, std::size_t r0, std::size_t len);
  Var slice_cols(Var a, std::size_t c0, std::size_t len);
  // Single entry as a 1x1 tensor.
  Var pick(Var a, std::size_t i, std::size_t j);
  Var sum_all(Var a);
  Var mean_all(Var a);
  // Column means: [r x c] -> [1 x c].
  Var mean_rows(Var a);

  // Repeats a 1xC row n times (for bias addition across a batch).
  Var broadcast_row(Var row, std::size_t n);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }

  // Zero until backward() has run.
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

  // Gradient for a registered parameter; zeros of w's shape if w never
  // entered this graph.
  Tensor grad_of(const Tensor& w) const;

  // Accumulates gradients of `loss` (must be 1x1) into every node.
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    Tensor value;
    Tensor grad;
    std::size_t i0 = 0;  // slice start / pick row
    std::size_t i1 = 0;  // slice length / pick col
    double c = 0.0;      // scale factor
  };

  Var push(Node n);
  Tensor& grad_buf(int id);

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> params_;
};

}  // namespace mome
