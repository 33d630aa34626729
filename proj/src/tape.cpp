#include "bblv/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace bblv {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

float stable_sigmoid(float x) {
  if (x >= 0.0f) {
    float e = std::exp(-x);
    return 1.0f / (1.0f + e);
  }
  float e = std::exp(x);
  return e / (1.0f + e);
}

float stable_softplus(float x) {
  if (x > 20.0f) return x;
  if (x < -20.0f) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

Var Tape::push_node(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) throw std::invalid_argument("invalid tape variable");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) throw std::invalid_argument("invalid tape variable");
  return nodes_[v.id];
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grd.data.empty()) n.grd = Tensor::zeros(n.val.shape);
  return n.grd;
}

void Tape::check_same_shape(Var a, Var b, const char* what) const {
  if (!node(a).val.same_shape(node(b).val))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(node(a).val.shape) +
                                " vs " + shape_str(node(b).val.shape));
}

Var Tape::constant(Tensor v) {
  Node n;
  n.op = Op::kConst;
  n.val = std::move(v);
  return push_node(std::move(n));
}

Var Tape::leaf(Tensor v) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(v);
  n.track = true;
  return push_node(std::move(n));
}

Var Tape::affine(Var x, Var w, Var bias) {
  const Tensor& xv = node(x).val;
  const Tensor& wv = node(w).val;
  const Tensor& bv = node(bias).val;
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1)
    throw std::invalid_argument("affine: expected [BxI]·[IxO]+[O], got " + shape_str(xv.shape) + " " +
                                shape_str(wv.shape) + " " + shape_str(bv.shape));
  if (xv.cols() != wv.rows() || wv.cols() != bv.shape[0])
    throw std::invalid_argument("affine: dimension mismatch " + shape_str(xv.shape) + " · " +
                                shape_str(wv.shape) + " + " + shape_str(bv.shape));
  int B = xv.rows(), I = xv.cols(), O = wv.cols();
  Node n;
  n.op = Op::kAffine;
  n.a = x.id;
  n.b = w.id;
  n.c = bias.id;
  n.track = tracked(x) || tracked(w) || tracked(bias);
  n.val = Tensor::zeros({B, O});
  CMapM xm(xv.data.data(), B, I), wm(wv.data.data(), I, O);
  MapM ym(n.val.data.data(), B, O);
  ym.noalias() = xm * wm;
  Eigen::Map<const Eigen::RowVectorXf> bm(bv.data.data(), O);
  ym.rowwise() += bm;
  return push_node(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.track = tracked(a) || tracked(b);
  n.val = node(a).val;
  const auto& bd = node(b).val.data;
  for (std::size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] += bd[i];
  return push_node(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.track = tracked(a) || tracked(b);
  n.val = node(a).val;
  const auto& bd = node(b).val.data;
  for (std::size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] -= bd[i];
  return push_node(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a.id;
  n.b = b.id;
  n.track = tracked(a) || tracked(b);
  n.val = node(a).val;
  const auto& bd = node(b).val.data;
  for (std::size_t i = 0; i < n.val.data.size(); ++i) n.val.data[i] *= bd[i];
  return push_node(std::move(n));
}

Var Tape::axpb(Var x, float a, float b) {
  Node n;
  n.op = Op::kAxpb;
  n.a = x.id;
  n.p0 = a;
  n.p1 = b;
  n.track = tracked(x);
  n.val = node(x).val;
  for (auto& v : n.val.data) v = a * v + b;
  return push_node(std::move(n));
}

Var Tape::exp_(Var x) {
  Node n;
  n.op = Op::kExp;
  n.a = x.id;
  n.track = tracked(x);
  n.val = node(x).val;
  for (auto& v : n.val.data) v = std::exp(v);
  return push_node(std::move(n));
}

Var Tape::log_(Var x) {
  Node n;
  n.op = Op::kLog;
  n.a = x.id;
  n.track = tracked(x);
  n.val = node(x).val;
  for (auto& v : n.val.data) {
    if (v <= 0.0f) throw std::domain_error("log: non-positive input " + std::to_string(v));
    v = std::log(v);
  }
  return push_node(std::move(n));
}

Var Tape::sigmoid(Var x) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = x.id;
  n.track = tracked(x);
  n.val = node(x).val;
  for (auto& v : n.val.data) v = stable_sigmoid(v);
  return push_node(std::move(n));
}

Var Tape::tanh_(Var x) {
  Node n;
  n.op = Op::kTanh;
  n.a = x.id;
  n.track = tracked(x);
  n.val = node(x).val;
  for (auto& v : n.val.data) v = std::tanh(v);
  return push_node(std::move(n));
}

Var Tape::softplus(Var x) {
  Node n;
  n.op = Op::kSoftplus;
  n.a = x.id;
  n.track = tracked(x);
  n.val = node(x).val;
  for (auto& v : n.val.data) v = stable_softplus(v);
  return push_node(std::move(n));
}

Var Tape::clamp(Var x, float lo, float hi) {
  Node n;
  n.op = Op::kClamp;
  n.a = x.id;
  n.p0 = lo;
  n.p1 = hi;
  n.track = tracked(x);
  n.val = node(x).val;
  for (auto& v : n.val.data) v = v < lo ? lo : (v > hi ? hi : v);
  return push_node(std::move(n));
}

Var Tape::slice_cols(Var x, int off, int cnt) {
  const Tensor& xv = node(x).val;
  if (xv.rank() != 2) throw std::invalid_argument("slice_cols: rank-2 input required");
  if (off < 0 || cnt <= 0 || off + cnt > xv.cols())
    throw std::invalid_argument("slice_cols: range [" + std::to_string(off) + "," +
                                std::to_string(off + cnt) + ") out of " + std::to_string(xv.cols()));
  Node n;
  n.op = Op::kSliceCols;
  n.a = x.id;
  n.p0 = static_cast<float>(off);
  n.track = tracked(x);
  n.val = Tensor::zeros({xv.rows(), cnt});
  for (int r = 0; r < xv.rows(); ++r)
    for (int c = 0; c < cnt; ++c) n.val.at(r, c) = xv.at(r, off + c);
  return push_node(std::move(n));
}

Var Tape::sum(Var x) {
  Node n;
  n.op = Op::kSum;
  n.a = x.id;
  n.track = tracked(x);
  double acc = 0.0;
  for (float v : node(x).val.data) acc += v;
  n.val = Tensor::scalar(static_cast<float>(acc));
  return push_node(std::move(n));
}

const Tensor& Tape::value(Var v) const { return node(v).val; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!backward_done_) throw std::logic_error("grad() before backward()");
  if (!n.track) throw std::logic_error("grad() on untracked variable");
  if (n.grd.data.empty()) throw std::logic_error("variable received no gradient");
  return n.grd;
}

void Tape::backward(Var out) {
  if (backward_done_) throw std::logic_error("backward called twice on one tape");
  const Node& o = node(out);
  if (o.val.size() != 1) throw std::invalid_argument("backward: output is not a scalar, shape " + shape_str(o.val.shape));
  backward_done_ = true;
  if (!o.track) return;  // constant output: all gradients are zero
  grad_buf(out.id).data[0] = 1.0f;

  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.track || n.grd.data.empty()) continue;
    const Tensor& g = n.grd;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kAffine: {
        const Tensor& xv = nodes_[n.a].val;
        const Tensor& wv = nodes_[n.b].val;
        int B = xv.rows(), I = xv.cols(), O = wv.cols();
        CMapM gm(g.data.data(), B, O), xm(xv.data.data(), B, I), wm(wv.data.data(), I, O);
        if (nodes_[n.a].track) {
          MapM gx(grad_buf(n.a).data.data(), B, I);
          gx.noalias() += gm * wm.transpose();
        }
        if (nodes_[n.b].track) {
          MapM gw(grad_buf(n.b).data.data(), I, O);
          gw.noalias() += xm.transpose() * gm;
        }
        if (nodes_[n.c].track) {
          Eigen::Map<Eigen::RowVectorXf> gb(grad_buf(n.c).data.data(), O);
          gb += gm.colwise().sum();
        }
        break;
      }
      case Op::kAdd: {
        if (nodes_[n.a].track) {
          auto& ga = grad_buf(n.a).data;
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.data[i];
        }
        if (nodes_[n.b].track) {
          auto& gb = grad_buf(n.b).data;
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g.data[i];
        }
        break;
      }
      case Op::kSub: {
        if (nodes_[n.a].track) {
          auto& ga = grad_buf(n.a).data;
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.data[i];
        }
        if (nodes_[n.b].track) {
          auto& gb = grad_buf(n.b).data;
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g.data[i];
        }
        break;
      }
      case Op::kMul: {
        if (nodes_[n.a].track) {
          auto& ga = grad_buf(n.a).data;
          const auto& bv = nodes_[n.b].val.data;
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.data[i] * bv[i];
        }
        if (nodes_[n.b].track) {
          auto& gb = grad_buf(n.b).data;
          const auto& av = nodes_[n.a].val.data;
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g.data[i] * av[i];
        }
        break;
      }
      case Op::kAxpb: {
        auto& ga = grad_buf(n.a).data;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.p0 * g.data[i];
        break;
      }
      case Op::kExp: {
        auto& ga = grad_buf(n.a).data;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.data[i] * n.val.data[i];
        break;
      }
      case Op::kLog: {
        auto& ga = grad_buf(n.a).data;
        const auto& av = nodes_[n.a].val.data;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.data[i] / av[i];
        break;
      }
      case Op::kSigmoid: {
        auto& ga = grad_buf(n.a).data;
        for (std::size_t i = 0; i < ga.size(); ++i) {
          float s = n.val.data[i];
          ga[i] += g.data[i] * s * (1.0f - s);
        }
        break;
      }
      case Op::kTanh: {
        auto& ga = grad_buf(n.a).data;
        for (std::size_t i = 0; i < ga.size(); ++i) {
          float t = n.val.data[i];
          ga[i] += g.data[i] * (1.0f - t * t);
        }
        break;
      }
      case Op::kSoftplus: {
        auto& ga = grad_buf(n.a).data;
        const auto& av = nodes_[n.a].val.data;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g.data[i] * stable_sigmoid(av[i]);
        break;
      }
      case Op::kClamp: {
        auto& ga = grad_buf(n.a).data;
        const auto& av = nodes_[n.a].val.data;
        for (std::size_t i = 0; i < ga.size(); ++i)
          if (av[i] >= n.p0 && av[i] <= n.p1) ga[i] += g.data[i];
        break;
      }
      case Op::kSliceCols: {
        Tensor& ga = grad_buf(n.a);
        int off = static_cast<int>(n.p0);
        int cnt = n.val.cols();
        for (int r = 0; r < n.val.rows(); ++r)
          for (int c = 0; c < cnt; ++c) ga.at(r, off + c) += g.at(r, c);
        break;
      }
      case Op::kSum: {
        auto& ga = grad_buf(n.a).data;
        float gs = g.data[0];
        for (auto& v : ga) v += gs;
        break;
      }
    }
  }
}

}  // namespace bblv
