#pragma once

#include <cstdint>
#include <vector>

#include "bblv/tensor.hpp"

namespace bblv {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over Tensor values. Ops are recorded in forward order and
// replayed in exact reverse order by backward(); there is no parallelism
// inside a pass, so outputs and gradients are bit-reproducible.
class Tape {
 public:
  Tape() = default;

  // Untracked value; receives no gradient.
  Var constant(Tensor v);
  // Tracked input; gradient available after backward().
  Var leaf(Tensor v);

  // out[b,o] = sum_i x[b,i] * w[i,o] + bias[o]
  Var affine(Var x, Var w, Var bias);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  // a*x + b, elementwise
  Var axpb(Var x, float a, float b);
  Var exp_(Var x);
  Var log_(Var x);
  Var sigmoid(Var x);
  Var tanh_(Var x);
  Var softplus(Var x);
  Var clamp(Var x, float lo, float hi);
  // Columns [off, off+n) of a rank-2 tensor.
  Var slice_cols(Var x, int off, int n);
  // Scalar sum over all elements.
  Var sum(Var x);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;

  // Accumulates d(scalar)/d(tensor) for every tracked node. The output must
  // be a scalar; calling backward twice on one tape is an error.
  void backward(Var scalar_output);

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf, kConst, kAffine, kAdd, kSub, kMul, kAxpb,
    kExp, kLog, kSigmoid, kTanh, kSoftplus, kClamp, kSliceCols, kSum,
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    float p0 = 0.0f, p1 = 0.0f;
    Tensor val;
    Tensor grd;   // allocated lazily during backward
    bool track = false;
  };

  Var push_node(Node n);
  Node& node(Var v);
  const Node& node(Var v) const;
  bool tracked(Var v) const { return node(v).track; }
  Tensor& grad_buf(int id);
  void check_same_shape(Var a, Var b, const char* what) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace bblv
