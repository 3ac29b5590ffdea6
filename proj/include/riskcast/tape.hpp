#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "riskcast/common.hpp"

namespace riskcast::ad {

// Handle into a Tape.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over Eigen matrices. Values are recorded during the
// forward pass; backward() walks the nodes in reverse and accumulates
// gradients, routing parameter gradients into caller-owned sinks.
//
// Parameters are referenced, not copied; the pointed-to storage must outlive
// the tape. Constants (data, masks, fixed coefficient vectors) are copied in.
class Tape {
 public:
  Tape() = default;

  // Leaves ------------------------------------------------------------
  Var constant(Eigen::MatrixXd v);
  Var scalar(double v);
  // Parameter leaf: value read from *value, gradient accumulated into *grad
  // (resized/zeroed on first touch of a backward pass if empty).
  Var param(const Eigen::MatrixXd* value, Eigen::MatrixXd* grad);

  // Ops -----------------------------------------------------------------
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cwise_mul(Var a, Var b);
  Var matmul(Var a, Var b);
  Var affine(Var a, double scale, double shift = 0.0);  // scale * a + shift
  Var transpose(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var softmax_col(Var a);              // a is a column vector
  Var sum(Var a);                      // 1x1
  Var max_entries(Var a);              // 1x1; gradient routed to the argmax
  Var rows(Var a, int start, int count);
  Var col(Var a, int index);
  Var vstack(const std::vector<Var>& parts);
  Var hstack(const std::vector<Var>& parts);
  Var clamp(Var a, double lo, double hi);  // pass-through gradient strictly inside

  // Access ----------------------------------------------------------------
  const Eigen::MatrixXd& value(Var v) const;
  double scalar_value(Var v) const;

  // Seeds d(loss)/d(loss) = seed for a 1x1 node and accumulates gradients.
  // May be called multiple times (e.g. different loss heads with different
  // outer coefficients); sinks accumulate across calls.
  void backward(Var loss, double seed = 1.0);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kConst, kParam, kAdd, kSub, kCwiseMul, kMatMul, kAffine, kTranspose,
    kTanh, kSigmoid, kExp, kLog, kSoftmaxCol, kSum, kMaxEntries,
    kRows, kCol, kVStack, kHStack, kClamp
  };

  struct Node {
    Eigen::MatrixXd value;               // unused for kParam (external)
    Eigen::MatrixXd grad;
    const Eigen::MatrixXd* ext = nullptr;  // kParam value
    Eigen::MatrixXd* sink = nullptr;       // kParam gradient sink
    Op op = Op::kConst;
    int p0 = -1, p1 = -1;                // parent indices (fixed-arity ops)
    int pbegin = 0, pcount = 0;          // parent range (stack ops)
    int i0 = 0, i1 = 0;                  // op payload (slice offsets, argmax)
    double s0 = 0.0, s1 = 0.0;           // op payload (affine, clamp bounds)
    bool has_grad = false;
  };

  const Eigen::MatrixXd& val(int idx) const {
    const Node& n = nodes_[idx];
    return n.ext ? *n.ext : n.value;
  }
  Eigen::MatrixXd& grad_of(int idx);
  int push(Node n);
  Var unary(Op op, Var a);

  std::vector<Node> nodes_;
  std::vector<int> parent_pool_;
};

}  // namespace riskcast::ad
