#include "riskcast/tape.hpp"

#include <cmath>
#include <utility>

namespace riskcast::ad {

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Eigen::MatrixXd& Tape::grad_of(int idx) {
  Node& n = nodes_[idx];
  if (!n.has_grad) {
    const Eigen::MatrixXd& v = val(idx);
    n.grad.setZero(v.rows(), v.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Var Tape::constant(Eigen::MatrixXd v) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(v);
  return Var{push(std::move(n))};
}

Var Tape::scalar(double v) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Tape::param(const Eigen::MatrixXd* value, Eigen::MatrixXd* grad) {
  Node n;
  n.op = Op::kParam;
  n.ext = value;
  n.sink = grad;
  return Var{push(std::move(n))};
}

Var Tape::unary(Op op, Var a) {
  Node n;
  n.op = op;
  n.p0 = a.idx;
  switch (op) {
    case Op::kTanh: n.value = val(a.idx).array().tanh(); break;
    case Op::kSigmoid: n.value = (1.0 / (1.0 + (-val(a.idx)).array().exp())); break;
    case Op::kExp: n.value = val(a.idx).array().exp(); break;
    case Op::kLog: n.value = val(a.idx).array().log(); break;
    case Op::kTranspose: n.value = val(a.idx).transpose(); break;
    default: throw ComputeError("tape: bad unary op");
  }
  return Var{push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
  Node n;
  n.op = Op::kAdd;
  n.p0 = a.idx;
  n.p1 = b.idx;
  n.value = val(a.idx) + val(b.idx);
  return Var{push(std::move(n))};
}

Var Tape::sub(Var a, Var b) {
  Node n;
  n.op = Op::kSub;
  n.p0 = a.idx;
  n.p1 = b.idx;
  n.value = val(a.idx) - val(b.idx);
  return Var{push(std::move(n))};
}

Var Tape::cwise_mul(Var a, Var b) {
  Node n;
  n.op = Op::kCwiseMul;
  n.p0 = a.idx;
  n.p1 = b.idx;
  n.value = val(a.idx).cwiseProduct(val(b.idx));
  return Var{push(std::move(n))};
}

Var Tape::matmul(Var a, Var b) {
  Node n;
  n.op = Op::kMatMul;
  n.p0 = a.idx;
  n.p1 = b.idx;
  n.value = val(a.idx) * val(b.idx);
  return Var{push(std::move(n))};
}

Var Tape::affine(Var a, double scale, double shift) {
  Node n;
  n.op = Op::kAffine;
  n.p0 = a.idx;
  n.s0 = scale;
  n.value = (val(a.idx).array() * scale + shift).matrix();
  return Var{push(std::move(n))};
}

Var Tape::transpose(Var a) { return unary(Op::kTranspose, a); }
Var Tape::tanh(Var a) { return unary(Op::kTanh, a); }
Var Tape::sigmoid(Var a) { return unary(Op::kSigmoid, a); }
Var Tape::exp(Var a) { return unary(Op::kExp, a); }
Var Tape::log(Var a) { return unary(Op::kLog, a); }

Var Tape::softmax_col(Var a) {
  const Eigen::MatrixXd& x = val(a.idx);
  Node n;
  n.op = Op::kSoftmaxCol;
  n.p0 = a.idx;
  Eigen::ArrayXd e = (x.col(0).array() - x.col(0).maxCoeff()).exp();
  n.value = (e / e.sum()).matrix();
  return Var{push(std::move(n))};
}

Var Tape::sum(Var a) {
  Node n;
  n.op = Op::kSum;
  n.p0 = a.idx;
  n.value.setConstant(1, 1, val(a.idx).sum());
  return Var{push(std::move(n))};
}

Var Tape::max_entries(Var a) {
  const Eigen::MatrixXd& x = val(a.idx);
  Node n;
  n.op = Op::kMaxEntries;
  n.p0 = a.idx;
  Eigen::Index r = 0, c = 0;
  const double m = x.maxCoeff(&r, &c);
  n.i0 = static_cast<int>(r);
  n.i1 = static_cast<int>(c);
  n.value.setConstant(1, 1, m);
  return Var{push(std::move(n))};
}

Var Tape::rows(Var a, int start, int count) {
  Node n;
  n.op = Op::kRows;
  n.p0 = a.idx;
  n.i0 = start;
  n.i1 = count;
  n.value = val(a.idx).middleRows(start, count);
  return Var{push(std::move(n))};
}

Var Tape::col(Var a, int index) {
  Node n;
  n.op = Op::kCol;
  n.p0 = a.idx;
  n.i0 = index;
  n.value = val(a.idx).col(index);
  return Var{push(std::move(n))};
}

Var Tape::vstack(const std::vector<Var>& parts) {
  Node n;
  n.op = Op::kVStack;
  n.pbegin = static_cast<int>(parent_pool_.size());
  n.pcount = static_cast<int>(parts.size());
  Eigen::Index total = 0;
  const Eigen::Index cols = parts.empty() ? 0 : val(parts[0].idx).cols();
  for (Var p : parts) {
    parent_pool_.push_back(p.idx);
    total += val(p.idx).rows();
  }
  n.value.resize(total, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    const Eigen::MatrixXd& v = val(p.idx);
    n.value.middleRows(at, v.rows()) = v;
    at += v.rows();
  }
  return Var{push(std::move(n))};
}

Var Tape::hstack(const std::vector<Var>& parts) {
  Node n;
  n.op = Op::kHStack;
  n.pbegin = static_cast<int>(parent_pool_.size());
  n.pcount = static_cast<int>(parts.size());
  Eigen::Index total = 0;
  const Eigen::Index rws = parts.empty() ? 0 : val(parts[0].idx).rows();
  for (Var p : parts) {
    parent_pool_.push_back(p.idx);
    total += val(p.idx).cols();
  }
  n.value.resize(rws, total);
  Eigen::Index at = 0;
  for (Var p : parts) {
    const Eigen::MatrixXd& v = val(p.idx);
    n.value.middleCols(at, v.cols()) = v;
    at += v.cols();
  }
  return Var{push(std::move(n))};
}

Var Tape::clamp(Var a, double lo, double hi) {
  Node n;
  n.op = Op::kClamp;
  n.p0 = a.idx;
  n.s0 = lo;
  n.s1 = hi;
  n.value = val(a.idx).array().min(hi).max(lo).matrix();
  return Var{push(std::move(n))};
}

const Eigen::MatrixXd& Tape::value(Var v) const {
  const Node& n = nodes_[v.idx];
  return n.ext ? *n.ext : n.value;
}

double Tape::scalar_value(Var v) const { return value(v)(0, 0); }

void Tape::backward(Var loss, double seed) {
  if (value(loss).size() != 1) throw ComputeError("tape: backward expects a 1x1 loss node");
  grad_of(loss.idx)(0, 0) += seed;
  for (int idx = loss.idx; idx >= 0; --idx) {
    Node& n = nodes_[idx];
    if (!n.has_grad) continue;
    const Eigen::MatrixXd& g = n.grad;
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam:
        if (n.sink) {
          if (n.sink->size() == 0) n.sink->setZero(n.ext->rows(), n.ext->cols());
          *n.sink += g;
        }
        break;
      case Op::kAdd:
        grad_of(n.p0) += g;
        grad_of(n.p1) += g;
        break;
      case Op::kSub:
        grad_of(n.p0) += g;
        grad_of(n.p1) -= g;
        break;
      case Op::kCwiseMul:
        grad_of(n.p0) += g.cwiseProduct(val(n.p1));
        grad_of(n.p1) += g.cwiseProduct(val(n.p0));
        break;
      case Op::kMatMul:
        grad_of(n.p0) += g * val(n.p1).transpose();
        grad_of(n.p1) += val(n.p0).transpose() * g;
        break;
      case Op::kAffine:
        grad_of(n.p0) += n.s0 * g;
        break;
      case Op::kTranspose:
        grad_of(n.p0) += g.transpose();
        break;
      case Op::kTanh:
        grad_of(n.p0).array() += g.array() * (1.0 - n.value.array().square());
        break;
      case Op::kSigmoid:
        grad_of(n.p0).array() += g.array() * n.value.array() * (1.0 - n.value.array());
        break;
      case Op::kExp:
        grad_of(n.p0).array() += g.array() * n.value.array();
        break;
      case Op::kLog:
        grad_of(n.p0).array() += g.array() / val(n.p0).array();
        break;
      case Op::kSoftmaxCol: {
        const double dot = (g.col(0).array() * n.value.col(0).array()).sum();
        grad_of(n.p0).col(0).array() += n.value.col(0).array() * (g.col(0).array() - dot);
        break;
      }
      case Op::kSum:
        grad_of(n.p0).array() += g(0, 0);
        break;
      case Op::kMaxEntries:
        grad_of(n.p0)(n.i0, n.i1) += g(0, 0);
        break;
      case Op::kRows:
        grad_of(n.p0).middleRows(n.i0, n.i1) += g;
        break;
      case Op::kCol:
        grad_of(n.p0).col(n.i0) += g;
        break;
      case Op::kVStack: {
        Eigen::Index at = 0;
        for (int k = 0; k < n.pcount; ++k) {
          const int p = parent_pool_[n.pbegin + k];
          const Eigen::Index r = val(p).rows();
          grad_of(p) += g.middleRows(at, r);
          at += r;
        }
        break;
      }
      case Op::kHStack: {
        Eigen::Index at = 0;
        for (int k = 0; k < n.pcount; ++k) {
          const int p = parent_pool_[n.pbegin + k];
          const Eigen::Index c = val(p).cols();
          grad_of(p) += g.middleCols(at, c);
          at += c;
        }
        break;
      }
      case Op::kClamp: {
        const Eigen::ArrayXXd& x = val(n.p0).array();
        grad_of(n.p0).array() += g.array() * ((x > n.s0) && (x < n.s1)).cast<double>();
        break;
      }
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  parent_pool_.clear();
}

}  // namespace riskcast::ad
