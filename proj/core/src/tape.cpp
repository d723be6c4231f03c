#include "dynlearn/tape.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <utility>

namespace dynlearn::tape {

namespace {

using MatMap = Eigen::Map<const Mat>;
using MutMap = Eigen::Map<Mat>;

MatMap sample(const Mat& stacked, Eigen::Index col, int rows, int cols) {
  return MatMap(stacked.col(col).data(), rows, cols);
}

double chol_diag_val(double raw, const CholOpts& o) {
  return (o.scale == 0.0 ? softplus(raw) : o.scale * sigmoid(raw)) + o.eps;
}
double chol_diag_d1(double raw, const CholOpts& o) {
  const double s = sigmoid(raw);
  return o.scale == 0.0 ? s : o.scale * s * (1.0 - s);
}
double chol_diag_d2(double raw, const CholOpts& o) {
  const double s = sigmoid(raw);
  const double sp = s * (1.0 - s);
  return o.scale == 0.0 ? sp : o.scale * sp * (1.0 - 2.0 * s);
}

}  // namespace

std::string op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Leaf: return "leaf";
    case OpKind::Linear: return "linear";
    case OpKind::AddBias: return "add_bias";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::CwiseMul: return "cwise_mul";
    case OpKind::Scale: return "scale";
    case OpKind::Affine: return "affine";
    case OpKind::Softplus: return "softplus";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Square: return "square";
    case OpKind::RowBroadcastMul: return "row_broadcast_mul";
    case OpKind::RowSelect: return "row_select";
    case OpKind::VStack: return "vstack";
    case OpKind::PermuteRows: return "permute_rows";
    case OpKind::SumSq: return "sum_sq";
    case OpKind::Sum: return "sum";
    case OpKind::CholAssemble: return "chol_assemble";
    case OpKind::CholTangent: return "chol_tangent";
    case OpKind::Gram: return "gram";
    case OpKind::BMatMul: return "bmatmul";
    case OpKind::BTranspose: return "btranspose";
    case OpKind::BMatVec: return "bmatvec";
    case OpKind::BSolveSpd: return "bsolve_spd";
    case OpKind::BQuadForm: return "bquad_form";
  }
  return "?";
}

Value Graph::push(Node node) {
  if (node.kind != OpKind::Constant && node.kind != OpKind::Leaf) {
    node.needs_grad = false;
    for (int i : node.in)
      if (nodes_[static_cast<size_t>(i)].needs_grad) node.needs_grad = true;
  }
  if (!node.val.allFinite())
    throw NumericalError(op_name(node.kind), "non-finite value produced");
  nodes_.push_back(std::move(node));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

const Graph::Node& Graph::node(Value v) const {
  require(v.valid() && v.idx < static_cast<int>(nodes_.size()), "tape: invalid value handle");
  return nodes_[static_cast<size_t>(v.idx)];
}

const Mat& Graph::val(Value v) const { return node(v).val; }

double Graph::scalar(Value v) const {
  const Mat& m = node(v).val;
  require(m.rows() == 1 && m.cols() == 1, "tape: scalar() on non-1x1 value");
  return m(0, 0);
}

Mat& Graph::acc(int idx) {
  Node& n = nodes_[static_cast<size_t>(idx)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  return n.grad;
}

const Mat& Graph::grad(Value v) const {
  const Node& n = node(v);
  static const Mat empty;
  if (n.grad.size() == 0) {
    // leaf never reached by the reverse sweep: gradient is zero; grad()
    // callers treat an empty matrix as zero via leaf_gradients.
    return empty;
  }
  return n.grad;
}

void Graph::clear() {
  nodes_.clear();
  swept_ = false;
}

Value Graph::constant(Mat m) {
  Node n;
  n.kind = OpKind::Constant;
  n.val = std::move(m);
  n.needs_grad = false;
  return push(std::move(n));
}

Value Graph::leaf(Mat m) {
  Node n;
  n.kind = OpKind::Leaf;
  n.val = std::move(m);
  n.needs_grad = true;
  return push(std::move(n));
}

Value Graph::linear(Value w, Value x) {
  const Mat& wm = val(w);
  const Mat& xm = val(x);
  require(wm.cols() == xm.rows(), "linear: inner dimensions disagree");
  Node n;
  n.kind = OpKind::Linear;
  n.in = {w.idx, x.idx};
  n.val = wm * xm;
  return push(std::move(n));
}

Value Graph::add_bias(Value x, Value b) {
  const Mat& xm = val(x);
  const Mat& bm = val(b);
  require(bm.cols() == 1 && bm.rows() == xm.rows(), "add_bias: bias must be (rows x 1)");
  Node n;
  n.kind = OpKind::AddBias;
  n.in = {x.idx, b.idx};
  n.val = xm.colwise() + bm.col(0);
  return push(std::move(n));
}

Value Graph::add(Value a, Value b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
          "add: shape mismatch");
  Node n;
  n.kind = OpKind::Add;
  n.in = {a.idx, b.idx};
  n.val = val(a) + val(b);
  return push(std::move(n));
}

Value Graph::sub(Value a, Value b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
          "sub: shape mismatch");
  Node n;
  n.kind = OpKind::Sub;
  n.in = {a.idx, b.idx};
  n.val = val(a) - val(b);
  return push(std::move(n));
}

Value Graph::cwise_mul(Value a, Value b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
          "cwise_mul: shape mismatch");
  Node n;
  n.kind = OpKind::CwiseMul;
  n.in = {a.idx, b.idx};
  n.val = val(a).cwiseProduct(val(b));
  return push(std::move(n));
}

Value Graph::scale(Value x, double c) { return affine(x, 0.0, c); }

Value Graph::affine(Value x, double c0, double c1) {
  Node n;
  n.kind = OpKind::Affine;
  n.in = {x.idx};
  n.c0 = c0;
  n.c1 = c1;
  n.val = ((c1 * val(x)).array() + c0).matrix();
  return push(std::move(n));
}

Value Graph::softplus(Value x) {
  Node n;
  n.kind = OpKind::Softplus;
  n.in = {x.idx};
  n.val = val(x).unaryExpr([](double v) { return dynlearn::softplus(v); });
  return push(std::move(n));
}

Value Graph::sigmoid(Value x) {
  Node n;
  n.kind = OpKind::Sigmoid;
  n.in = {x.idx};
  n.val = val(x).unaryExpr([](double v) { return dynlearn::sigmoid(v); });
  return push(std::move(n));
}

Value Graph::tanh(Value x) {
  Node n;
  n.kind = OpKind::Tanh;
  n.in = {x.idx};
  n.val = val(x).array().tanh();
  return push(std::move(n));
}

Value Graph::square(Value x) {
  Node n;
  n.kind = OpKind::Square;
  n.in = {x.idx};
  n.val = val(x).array().square();
  return push(std::move(n));
}

Value Graph::row_broadcast_mul(Value x, Value row) {
  const Mat& xm = val(x);
  const Mat& rm = val(row);
  require(rm.rows() == 1 && rm.cols() == xm.cols(), "row_broadcast_mul: row must be 1 x cols");
  Node n;
  n.kind = OpKind::RowBroadcastMul;
  n.in = {x.idx, row.idx};
  n.val = (xm.array().rowwise() * rm.row(0).array()).matrix();
  return push(std::move(n));
}

Value Graph::row_select(Value x, int i) {
  require(i >= 0 && i < val(x).rows(), "row_select: row index out of range");
  Node n;
  n.kind = OpKind::RowSelect;
  n.in = {x.idx};
  n.n = i;
  n.val = val(x).row(i);
  return push(std::move(n));
}

Value Graph::vstack(const std::vector<Value>& rows) {
  require(!rows.empty(), "vstack: empty input list");
  Eigen::Index total = 0;
  const Eigen::Index cols = val(rows[0]).cols();
  for (Value v : rows) {
    require(val(v).cols() == cols, "vstack: column count mismatch");
    total += val(v).rows();
  }
  Node n;
  n.kind = OpKind::VStack;
  n.val.resize(total, cols);
  Eigen::Index at = 0;
  for (Value v : rows) {
    n.in.push_back(v.idx);
    n.val.middleRows(at, val(v).rows()) = val(v);
    at += val(v).rows();
  }
  return push(std::move(n));
}

Value Graph::permute_rows(Value x, std::vector<int> perm) {
  const Mat& xm = val(x);
  Node n;
  n.kind = OpKind::PermuteRows;
  n.in = {x.idx};
  n.val.resize(static_cast<Eigen::Index>(perm.size()), xm.cols());
  for (size_t i = 0; i < perm.size(); ++i) {
    require(perm[i] >= 0 && perm[i] < xm.rows(), "permute_rows: index out of range");
    n.val.row(static_cast<Eigen::Index>(i)) = xm.row(perm[i]);
  }
  n.perm = std::move(perm);
  return push(std::move(n));
}

Value Graph::sum_sq(Value x) {
  Node n;
  n.kind = OpKind::SumSq;
  n.in = {x.idx};
  n.val = Mat::Constant(1, 1, val(x).squaredNorm());
  return push(std::move(n));
}

Value Graph::sum(Value x) {
  Node n;
  n.kind = OpKind::Sum;
  n.in = {x.idx};
  n.val = Mat::Constant(1, 1, val(x).sum());
  return push(std::move(n));
}

Value Graph::chol_assemble(Value raw, const CholOpts& opts) {
  const Mat& rm = val(raw);
  require(rm.rows() == opts.raw_len(), "chol_assemble: raw length mismatch");
  const int nn = opts.n;
  Node n;
  n.kind = OpKind::CholAssemble;
  n.in = {raw.idx};
  n.chol = opts;
  n.val = Mat::Zero(Eigen::Index(nn) * nn, rm.cols());
  for (Eigen::Index b = 0; b < rm.cols(); ++b) {
    for (int d = 0; d < nn; ++d)
      n.val(Eigen::Index(d) * nn + d, b) = chol_diag_val(rm(d, b), opts);
    if (!opts.diag_only) {
      int t = nn;
      for (int j = 0; j < nn; ++j)
        for (int i = j + 1; i < nn; ++i, ++t)
          n.val(Eigen::Index(j) * nn + i, b) = rm(t, b);
    }
  }
  return push(std::move(n));
}

Value Graph::chol_tangent(Value raw, Value traw, const CholOpts& opts) {
  const Mat& rm = val(raw);
  const Mat& tm = val(traw);
  require(rm.rows() == opts.raw_len() && tm.rows() == rm.rows() && tm.cols() == rm.cols(),
          "chol_tangent: raw/tangent shape mismatch");
  const int nn = opts.n;
  Node n;
  n.kind = OpKind::CholTangent;
  n.in = {raw.idx, traw.idx};
  n.chol = opts;
  n.val = Mat::Zero(Eigen::Index(nn) * nn, rm.cols());
  for (Eigen::Index b = 0; b < rm.cols(); ++b) {
    for (int d = 0; d < nn; ++d)
      n.val(Eigen::Index(d) * nn + d, b) = chol_diag_d1(rm(d, b), opts) * tm(d, b);
    if (!opts.diag_only) {
      int t = nn;
      for (int j = 0; j < nn; ++j)
        for (int i = j + 1; i < nn; ++i, ++t)
          n.val(Eigen::Index(j) * nn + i, b) = tm(t, b);
    }
  }
  return push(std::move(n));
}

Value Graph::gram(Value l, int nn) {
  const Mat& lm = val(l);
  require(lm.rows() == Eigen::Index(nn) * nn, "gram: stacked rows != n*n");
  Node n;
  n.kind = OpKind::Gram;
  n.in = {l.idx};
  n.n = nn;
  n.val.resize(lm.rows(), lm.cols());
  for (Eigen::Index b = 0; b < lm.cols(); ++b) {
    const MatMap L = sample(lm, b, nn, nn);
    MutMap(n.val.col(b).data(), nn, nn) = L * L.transpose();
  }
  return push(std::move(n));
}

Value Graph::bmatmul(Value a, Value b, int nn, int kk, int mm, bool trans_a, bool trans_b) {
  const Mat& am = val(a);
  const Mat& bm = val(b);
  const Eigen::Index ar = trans_a ? kk : nn, ac = trans_a ? nn : kk;
  const Eigen::Index br = trans_b ? mm : kk, bc = trans_b ? kk : mm;
  require(am.rows() == ar * ac && bm.rows() == br * bc && am.cols() == bm.cols(),
          "bmatmul: stacked shape mismatch");
  Node n;
  n.kind = OpKind::BMatMul;
  n.in = {a.idx, b.idx};
  n.n = nn;
  n.k = kk;
  n.m = mm;
  n.ta = trans_a;
  n.tb = trans_b;
  n.val.resize(Eigen::Index(nn) * mm, am.cols());
  for (Eigen::Index col = 0; col < am.cols(); ++col) {
    const MatMap A = sample(am, col, int(ar), int(ac));
    const MatMap B = sample(bm, col, int(br), int(bc));
    MutMap C(n.val.col(col).data(), nn, mm);
    if (!trans_a && !trans_b) C = A * B;
    else if (trans_a && !trans_b) C = A.transpose() * B;
    else if (!trans_a && trans_b) C = A * B.transpose();
    else C = A.transpose() * B.transpose();
  }
  return push(std::move(n));
}

Value Graph::btranspose(Value a, int nn, int mm) {
  const Mat& am = val(a);
  require(am.rows() == Eigen::Index(nn) * mm, "btranspose: stacked rows != n*m");
  Node n;
  n.kind = OpKind::BTranspose;
  n.in = {a.idx};
  n.n = nn;
  n.m = mm;
  n.val.resize(am.rows(), am.cols());
  for (Eigen::Index b = 0; b < am.cols(); ++b)
    MutMap(n.val.col(b).data(), mm, nn) = sample(am, b, nn, mm).transpose();
  return push(std::move(n));
}

Value Graph::bmatvec(Value a, Value x, int nn, int mm) {
  const Mat& am = val(a);
  const Mat& xm = val(x);
  require(am.rows() == Eigen::Index(nn) * mm && xm.rows() == mm && am.cols() == xm.cols(),
          "bmatvec: stacked shape mismatch");
  Node n;
  n.kind = OpKind::BMatVec;
  n.in = {a.idx, x.idx};
  n.n = nn;
  n.m = mm;
  n.val.resize(nn, am.cols());
  for (Eigen::Index b = 0; b < am.cols(); ++b)
    n.val.col(b) = sample(am, b, nn, mm) * xm.col(b);
  return push(std::move(n));
}

Value Graph::bsolve_spd(Value a, Value r, int nn) {
  const Mat& am = val(a);
  const Mat& rm = val(r);
  require(am.rows() == Eigen::Index(nn) * nn && rm.rows() == nn && am.cols() == rm.cols(),
          "bsolve_spd: stacked shape mismatch");
  Node n;
  n.kind = OpKind::BSolveSpd;
  n.in = {a.idx, r.idx};
  n.n = nn;
  n.val.resize(nn, am.cols());
  for (Eigen::Index b = 0; b < am.cols(); ++b) {
    Eigen::LLT<Mat> llt(sample(am, b, nn, nn));
    if (llt.info() != Eigen::Success)
      throw NumericalError("bsolve_spd", "matrix not positive definite");
    n.val.col(b) = llt.solve(rm.col(b));
  }
  return push(std::move(n));
}

Value Graph::bquad_form(Value a, Value x, int nn) {
  const Mat& am = val(a);
  const Mat& xm = val(x);
  require(am.rows() == Eigen::Index(nn) * nn && xm.rows() == nn && am.cols() == xm.cols(),
          "bquad_form: stacked shape mismatch");
  Node n;
  n.kind = OpKind::BQuadForm;
  n.in = {a.idx, x.idx};
  n.n = nn;
  n.val.resize(1, am.cols());
  for (Eigen::Index b = 0; b < am.cols(); ++b)
    n.val(0, b) = xm.col(b).dot(sample(am, b, nn, nn) * xm.col(b));
  return push(std::move(n));
}

void Graph::backward_node(int idx) {
  Node& nd = nodes_[static_cast<size_t>(idx)];
  if (!nd.needs_grad || nd.grad.size() == 0) return;
  const Mat& g = nd.grad;
  auto in_val = [&](int slot) -> const Mat& {
    return nodes_[static_cast<size_t>(nd.in[static_cast<size_t>(slot)])].val;
  };
  auto in_grad = [&](int slot) -> Mat& { return acc(nd.in[static_cast<size_t>(slot)]); };
  auto in_needs = [&](int slot) {
    return nodes_[static_cast<size_t>(nd.in[static_cast<size_t>(slot)])].needs_grad;
  };

  switch (nd.kind) {
    case OpKind::Constant:
    case OpKind::Leaf:
      break;
    case OpKind::Linear: {
      if (in_needs(0)) in_grad(0) += g * in_val(1).transpose();
      if (in_needs(1)) in_grad(1) += in_val(0).transpose() * g;
      break;
    }
    case OpKind::AddBias: {
      if (in_needs(0)) in_grad(0) += g;
      if (in_needs(1)) in_grad(1) += g.rowwise().sum();
      break;
    }
    case OpKind::Add: {
      if (in_needs(0)) in_grad(0) += g;
      if (in_needs(1)) in_grad(1) += g;
      break;
    }
    case OpKind::Sub: {
      if (in_needs(0)) in_grad(0) += g;
      if (in_needs(1)) in_grad(1) -= g;
      break;
    }
    case OpKind::CwiseMul: {
      if (in_needs(0)) in_grad(0) += g.cwiseProduct(in_val(1));
      if (in_needs(1)) in_grad(1) += g.cwiseProduct(in_val(0));
      break;
    }
    case OpKind::Affine: {
      if (in_needs(0)) in_grad(0) += nd.c1 * g;
      break;
    }
    case OpKind::Softplus: {
      if (in_needs(0))
        in_grad(0) += g.cwiseProduct(
            in_val(0).unaryExpr([](double v) { return dynlearn::sigmoid(v); }));
      break;
    }
    case OpKind::Sigmoid: {
      if (in_needs(0))
        in_grad(0).array() += g.array() * nd.val.array() * (1.0 - nd.val.array());
      break;
    }
    case OpKind::Tanh: {
      if (in_needs(0)) in_grad(0).array() += g.array() * (1.0 - nd.val.array().square());
      break;
    }
    case OpKind::Square: {
      if (in_needs(0)) in_grad(0) += 2.0 * g.cwiseProduct(in_val(0));
      break;
    }
    case OpKind::RowBroadcastMul: {
      if (in_needs(0))
        in_grad(0) += (g.array().rowwise() * in_val(1).row(0).array()).matrix();
      if (in_needs(1)) in_grad(1) += g.cwiseProduct(in_val(0)).colwise().sum();
      break;
    }
    case OpKind::RowSelect: {
      if (in_needs(0)) in_grad(0).row(nd.n) += g.row(0);
      break;
    }
    case OpKind::VStack: {
      Eigen::Index at = 0;
      for (size_t s = 0; s < nd.in.size(); ++s) {
        const Eigen::Index rows = nodes_[static_cast<size_t>(nd.in[s])].val.rows();
        if (nodes_[static_cast<size_t>(nd.in[s])].needs_grad)
          acc(nd.in[s]) += g.middleRows(at, rows);
        at += rows;
      }
      break;
    }
    case OpKind::PermuteRows: {
      if (in_needs(0)) {
        Mat& xg = in_grad(0);
        for (size_t i = 0; i < nd.perm.size(); ++i)
          xg.row(nd.perm[i]) += g.row(static_cast<Eigen::Index>(i));
      }
      break;
    }
    case OpKind::SumSq: {
      if (in_needs(0)) in_grad(0) += 2.0 * g(0, 0) * in_val(0);
      break;
    }
    case OpKind::Sum: {
      if (in_needs(0)) in_grad(0).array() += g(0, 0);
      break;
    }
    case OpKind::CholAssemble: {
      if (!in_needs(0)) break;
      const Mat& raw = in_val(0);
      Mat& rg = in_grad(0);
      const int nn = nd.chol.n;
      for (Eigen::Index b = 0; b < raw.cols(); ++b) {
        for (int d = 0; d < nn; ++d)
          rg(d, b) += chol_diag_d1(raw(d, b), nd.chol) * g(Eigen::Index(d) * nn + d, b);
        if (!nd.chol.diag_only) {
          int t = nn;
          for (int j = 0; j < nn; ++j)
            for (int i = j + 1; i < nn; ++i, ++t) rg(t, b) += g(Eigen::Index(j) * nn + i, b);
        }
      }
      break;
    }
    case OpKind::CholTangent: {
      const Mat& raw = in_val(0);
      const Mat& tan = in_val(1);
      const int nn = nd.chol.n;
      for (Eigen::Index b = 0; b < raw.cols(); ++b) {
        for (int d = 0; d < nn; ++d) {
          const double gd = g(Eigen::Index(d) * nn + d, b);
          if (in_needs(0)) in_grad(0)(d, b) += chol_diag_d2(raw(d, b), nd.chol) * tan(d, b) * gd;
          if (in_needs(1)) in_grad(1)(d, b) += chol_diag_d1(raw(d, b), nd.chol) * gd;
        }
        if (!nd.chol.diag_only && in_needs(1)) {
          int t = nn;
          for (int j = 0; j < nn; ++j)
            for (int i = j + 1; i < nn; ++i, ++t)
              in_grad(1)(t, b) += g(Eigen::Index(j) * nn + i, b);
        }
      }
      break;
    }
    case OpKind::Gram: {
      if (!in_needs(0)) break;
      const Mat& lm = in_val(0);
      Mat& lg = in_grad(0);
      const int nn = nd.n;
      for (Eigen::Index b = 0; b < lm.cols(); ++b) {
        const MatMap L = sample(lm, b, nn, nn);
        const MatMap G = sample(g, b, nn, nn);
        MutMap(lg.col(b).data(), nn, nn) += (G + G.transpose()) * L;
      }
      break;
    }
    case OpKind::BMatMul: {
      const int nn = nd.n, kk = nd.k, mm = nd.m;
      const int ar = nd.ta ? kk : nn, ac = nd.ta ? nn : kk;
      const int br = nd.tb ? mm : kk, bc = nd.tb ? kk : mm;
      for (Eigen::Index col = 0; col < g.cols(); ++col) {
        const MatMap A = sample(in_val(0), col, ar, ac);
        const MatMap B = sample(in_val(1), col, br, bc);
        const MatMap C = sample(g, col, nn, mm);
        if (in_needs(0)) {
          MutMap Ag(in_grad(0).col(col).data(), ar, ac);
          if (!nd.ta && !nd.tb) Ag += C * B.transpose();
          else if (nd.ta && !nd.tb) Ag += B * C.transpose();
          else if (!nd.ta && nd.tb) Ag += C * B;
          else Ag += B.transpose() * C.transpose();
        }
        if (in_needs(1)) {
          MutMap Bg(in_grad(1).col(col).data(), br, bc);
          if (!nd.ta && !nd.tb) Bg += A.transpose() * C;
          else if (nd.ta && !nd.tb) Bg += A * C;
          else if (!nd.ta && nd.tb) Bg += C.transpose() * A;
          else Bg += C.transpose() * A.transpose();
        }
      }
      break;
    }
    case OpKind::BTranspose: {
      if (!in_needs(0)) break;
      for (Eigen::Index b = 0; b < g.cols(); ++b)
        MutMap(in_grad(0).col(b).data(), nd.n, nd.m) +=
            sample(g, b, nd.m, nd.n).transpose();
      break;
    }
    case OpKind::BMatVec: {
      const int nn = nd.n, mm = nd.m;
      for (Eigen::Index b = 0; b < g.cols(); ++b) {
        if (in_needs(0))
          MutMap(in_grad(0).col(b).data(), nn, mm) += g.col(b) * in_val(1).col(b).transpose();
        if (in_needs(1))
          in_grad(1).col(b) += sample(in_val(0), b, nn, mm).transpose() * g.col(b);
      }
      break;
    }
    case OpKind::BSolveSpd: {
      const int nn = nd.n;
      for (Eigen::Index b = 0; b < g.cols(); ++b) {
        Eigen::LLT<Mat> llt(sample(in_val(0), b, nn, nn));
        const Vec rbar = llt.solve(g.col(b));
        if (in_needs(1)) in_grad(1).col(b) += rbar;
        if (in_needs(0))
          MutMap(in_grad(0).col(b).data(), nn, nn) -= rbar * nd.val.col(b).transpose();
      }
      break;
    }
    case OpKind::BQuadForm: {
      const int nn = nd.n;
      for (Eigen::Index b = 0; b < g.cols(); ++b) {
        const double gb = g(0, b);
        const MatMap A = sample(in_val(0), b, nn, nn);
        const Vec& xcol = in_val(1).col(b);
        if (in_needs(0)) MutMap(in_grad(0).col(b).data(), nn, nn) += gb * xcol * xcol.transpose();
        if (in_needs(1)) in_grad(1).col(b) += gb * (A + A.transpose()) * xcol;
      }
      break;
    }
  }
}

void Graph::backward(Value root) {
  const Node& r = node(root);
  require(r.val.rows() == 1 && r.val.cols() == 1, "backward: root must be a 1x1 scalar");
  // a second sweep would silently accumulate on top of the first
  if (swept_) throw NumericalError("backward", "graph already swept; rebuild it");
  swept_ = true;
  acc(root.idx)(0, 0) = 1.0;
  for (int idx = root.idx; idx >= 0; --idx) backward_node(idx);
}

MlpLeaves make_mlp_leaves(Graph& g, const MlpParams& params) {
  MlpLeaves leaves;
  leaves.spec = params.spec;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    leaves.weights.push_back(g.leaf(params.weights[l]));
    leaves.biases.push_back(g.leaf(params.biases[l]));
  }
  return leaves;
}

namespace {

Value apply_activation(Graph& g, Activation act, Value z, double scale) {
  switch (act) {
    case Activation::Identity: return z;
    case Activation::Softplus: return g.softplus(z);
    case Activation::Tanh: return g.tanh(z);
    case Activation::SigmoidScaled: return g.scale(g.sigmoid(z), scale);
  }
  return z;
}

/// d(act)/dz as a graph value, reusing z (and computing what it needs).
Value activation_slope(Graph& g, Activation act, Value z, double scale) {
  switch (act) {
    case Activation::Identity: return Value{-1};
    case Activation::Softplus: return g.sigmoid(z);
    case Activation::Tanh: {
      const Value t = g.tanh(z);
      return g.affine(g.square(t), 1.0, -1.0);
    }
    case Activation::SigmoidScaled: {
      const Value s = g.sigmoid(z);
      return g.scale(g.cwise_mul(s, g.affine(s, 1.0, -1.0)), scale);
    }
  }
  return Value{-1};
}

}  // namespace

Value mlp_forward(Graph& g, const MlpLeaves& mlp, Value x) {
  require(g.val(x).rows() == mlp.spec.input_dim, "mlp_forward: input row count mismatch");
  Value a = x;
  for (size_t l = 0; l < mlp.weights.size(); ++l) {
    const bool last = l + 1 == mlp.weights.size();
    const Activation act = last ? mlp.spec.final_activation : mlp.spec.hidden_activation;
    const Value z = g.add_bias(g.linear(mlp.weights[l], a), mlp.biases[l]);
    a = apply_activation(g, act, z, mlp.spec.final_scale);
  }
  return a;
}

ValueWithTangents mlp_forward_jvp_multi(Graph& g, const MlpLeaves& mlp, Value x,
                                        const std::vector<Value>& txs) {
  require(g.val(x).rows() == mlp.spec.input_dim, "mlp_forward_jvp: input row count mismatch");
  Value a = x;
  std::vector<Value> tas = txs;
  for (size_t l = 0; l < mlp.weights.size(); ++l) {
    const bool last = l + 1 == mlp.weights.size();
    const Activation act = last ? mlp.spec.final_activation : mlp.spec.hidden_activation;
    const Value z = g.add_bias(g.linear(mlp.weights[l], a), mlp.biases[l]);
    a = apply_activation(g, act, z, mlp.spec.final_scale);
    const Value slope = activation_slope(g, act, z, mlp.spec.final_scale);
    for (Value& ta : tas) {
      const Value tz = g.linear(mlp.weights[l], ta);
      ta = slope.valid() ? g.cwise_mul(slope, tz) : tz;
    }
  }
  return {a, std::move(tas)};
}

ValueWithTangent mlp_forward_jvp(Graph& g, const MlpLeaves& mlp, Value x, Value tx) {
  auto multi = mlp_forward_jvp_multi(g, mlp, x, {tx});
  return {multi.y, multi.tys[0]};
}

Value mlp_input_jacobian_value(Graph& g, const MlpLeaves& mlp, Value x) {
  const Eigen::Index batch = g.val(x).cols();
  const int in = mlp.spec.input_dim;
  std::vector<Value> cols;
  cols.reserve(static_cast<size_t>(in));
  for (int j = 0; j < in; ++j) {
    Mat dir = Mat::Zero(in, batch);
    dir.row(j).setOnes();
    cols.push_back(mlp_forward_jvp(g, mlp, x, g.constant(std::move(dir))).ty);
  }
  return g.vstack(cols);  // vec()-layout: row j*out + i holds dy_i/dx_j
}

MlpParams leaf_gradients(const Graph& g, const MlpLeaves& mlp) {
  MlpParams grad;
  grad.spec = mlp.spec;
  for (size_t l = 0; l < mlp.weights.size(); ++l) {
    const Mat& wg = g.grad(mlp.weights[l]);
    const Mat& bg = g.grad(mlp.biases[l]);
    const Mat& wv = g.val(mlp.weights[l]);
    const Mat& bv = g.val(mlp.biases[l]);
    grad.weights.push_back(wg.size() == 0 ? Mat::Zero(wv.rows(), wv.cols()) : wg);
    grad.biases.push_back(bg.size() == 0 ? Vec::Zero(bv.rows()) : Vec(bg.col(0)));
  }
  return grad;
}

MlpParams mixed_grad(const MlpParams& params, const TapeScalarFn& fn) {
  Graph g;
  MlpLeaves leaves = make_mlp_leaves(g, params);
  const Value root = fn(g, leaves);
  g.backward(root);
  return leaf_gradients(g, leaves);
}

}  // namespace dynlearn::tape
