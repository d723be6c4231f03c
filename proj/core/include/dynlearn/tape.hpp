#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dynlearn/mlp.hpp"
#include "dynlearn/types.hpp"

namespace dynlearn::tape {

/// Reverse-mode autodiff over matrix-valued nodes.
///
/// A value is an r x c matrix. Batched evaluation stores one sample per
/// column; per-sample square/rectangular matrices (mass, damping, input
/// matrices and their q-derivatives) are stored vec()-style, column-major,
/// as an (n*m) x B value. Input-derivatives of networks are produced by
/// tangent propagation (jvp) built from the same primitives, so a single
/// reverse sweep differentiates losses that contain them.
class Graph;

struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

/// Options for assembling a lower-triangular Cholesky factor from a raw
/// network output. scale == 0 selects softplus diagonals, scale > 0 selects
/// scale*sigmoid diagonals. eps is added to the diagonal after activation.
struct CholOpts {
  int n = 0;
  double eps = 0.0;
  double scale = 0.0;
  bool diag_only = false;

  int raw_len() const { return diag_only ? n : (n * n + n) / 2; }
};

enum class OpKind : int {
  Constant, Leaf, Linear, AddBias, Add, Sub, CwiseMul, Scale, Affine,
  Softplus, Sigmoid, Tanh, Square, RowBroadcastMul, RowSelect, VStack,
  PermuteRows, SumSq, Sum, CholAssemble, CholTangent, Gram,
  BMatMul, BTranspose, BMatVec, BSolveSpd, BQuadForm,
};

std::string op_name(OpKind kind);

class Graph {
 public:
  Value constant(Mat m);
  Value leaf(Mat m);

  Value linear(Value w, Value x);            // w * x
  Value add_bias(Value x, Value b);          // x.colwise() + b
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value cwise_mul(Value a, Value b);
  Value scale(Value x, double c);
  Value affine(Value x, double c0, double c1);  // c0 + c1 * x
  Value softplus(Value x);
  Value sigmoid(Value x);
  Value tanh(Value x);
  Value square(Value x);
  Value row_broadcast_mul(Value x, Value row);  // column j scaled by row(0, j)
  Value row_select(Value x, int i);             // 1 x B slice
  Value vstack(const std::vector<Value>& rows);
  Value permute_rows(Value x, std::vector<int> perm);  // out.row(i) = x.row(perm[i])
  Value sum_sq(Value x);                        // 1x1, sum of squares
  Value sum(Value x);                           // 1x1

  /// raw ((n^2+n)/2 x B or n x B) -> L (n*n x B), diag activated + eps.
  Value chol_assemble(Value raw, const CholOpts& opts);
  /// Directional derivative of chol_assemble at raw along traw.
  Value chol_tangent(Value raw, Value traw, const CholOpts& opts);
  /// L (n*n x B) -> L L^T per sample.
  Value gram(Value l, int n);

  /// Per-sample matmul on stacked values: a is (n x k), b is (k x m).
  Value bmatmul(Value a, Value b, int n, int k, int m, bool trans_a = false,
                bool trans_b = false);
  Value btranspose(Value a, int n, int m);
  Value bmatvec(Value a, Value x, int n, int m);   // (n*m x B, m x B) -> n x B
  Value bsolve_spd(Value a, Value r, int n);       // per-sample A^-1 r
  Value bquad_form(Value a, Value x, int n);       // 1 x B, x^T A x

  const Mat& val(Value v) const;
  double scalar(Value v) const;

  /// Reverse sweep from a 1x1 root. Gradients of leaves are then available
  /// through grad(). May be called once per forward build.
  void backward(Value root);
  const Mat& grad(Value v) const;

  void clear();
  size_t size() const { return nodes_.size(); }
  void reserve(size_t n) { nodes_.reserve(n); }

 private:
  struct Node {
    OpKind kind;
    std::vector<int> in;
    Mat val;
    Mat grad;
    bool needs_grad = false;
    // op attributes
    int n = 0, k = 0, m = 0;
    bool ta = false, tb = false;
    double c0 = 0.0, c1 = 0.0;
    CholOpts chol;
    std::vector<int> perm;
  };

  Value push(Node node);
  Mat& acc(int idx);
  void backward_node(int idx);
  const Node& node(Value v) const;

  std::vector<Node> nodes_;
  bool swept_ = false;
};

/// One tape leaf per weight matrix / bias vector of an MLP.
struct MlpLeaves {
  MlpSpec spec;
  std::vector<Value> weights;
  std::vector<Value> biases;
};

MlpLeaves make_mlp_leaves(Graph& g, const MlpParams& params);

/// Batched network forward pass; x is (input_dim x B).
Value mlp_forward(Graph& g, const MlpLeaves& mlp, Value x);

/// Forward pass together with the directional derivative along tx.
struct ValueWithTangent {
  Value y;
  Value ty;
};
ValueWithTangent mlp_forward_jvp(Graph& g, const MlpLeaves& mlp, Value x, Value tx);

/// Forward pass with several tangents sharing the same primal nodes.
struct ValueWithTangents {
  Value y;
  std::vector<Value> tys;
};
ValueWithTangents mlp_forward_jvp_multi(Graph& g, const MlpLeaves& mlp, Value x,
                                        const std::vector<Value>& txs);

/// Input Jacobian as a batched (out*in x B) value, vec()-layout per sample.
Value mlp_input_jacobian_value(Graph& g, const MlpLeaves& mlp, Value x);

/// Extract accumulated leaf gradients back into MlpParams shape.
MlpParams leaf_gradients(const Graph& g, const MlpLeaves& mlp);

/// Gradient of a scalar built from tape primitives (network evaluations,
/// input-jacobians, linear algebra, integration steps) with respect to the
/// network parameters.
using TapeScalarFn = std::function<Value(Graph&, const MlpLeaves&)>;
MlpParams mixed_grad(const MlpParams& params, const TapeScalarFn& fn);

}  // namespace dynlearn::tape
