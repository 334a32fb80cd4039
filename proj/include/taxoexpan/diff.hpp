#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "taxoexpan/random.hpp"
#include "taxoexpan/types.hpp"

// Minimal reverse-mode differentiation over dense row-major matrices. A Tape
// records one forward pass; Backward() walks it in reverse and accumulates
// gradients into the Parameters that were read through Tape::Param().
namespace taxoexpan::diff {

struct Parameter {
  Matrix value;
  Matrix grad;  // same shape as value once touched by Backward()

  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

// Handle to a tape node.
struct Var {
  int index = -1;
  bool valid() const { return index >= 0; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Matrix value);
  // Reads a parameter without copying. Gradients flow into p.grad.
  Var Param(Parameter& p);
  // Like Param() but treated as a constant (no gradient).
  Var Frozen(const Parameter& p);
  // A free leaf with its own gradient slot, used by gradient checks.
  Var Leaf(Matrix value);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.index].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates; loss must be 1x1.
  void Backward(Var loss);

  // Hash of the sign pattern of every (leaky) ReLU input seen so far. Two
  // forward passes with equal signatures lie on the same linear piece.
  std::uint64_t kink_signature() const { return kink_signature_; }
  void MixKinkSignature(const Matrix& pre_activation);

  // Op-author interface.
  Var Record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var Record(Matrix value, std::span<const Var> inputs, BackwardFn fn);
  const Matrix& upstream(int self) const { return nodes_[self].grad; }
  // Adds g into v's gradient if v requires one.
  void Accumulate(Var v, const Matrix& g);
  template <typename Expr>
  void AccumulateExpr(Var v, const Expr& g) {
    if (!nodes_[v.index].requires_grad) return;
    Matrix& dst = EnsureGrad(v.index);
    dst += g;
  }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Matrix& EnsureGrad(int index);

  std::vector<Node> nodes_;
  std::uint64_t kink_signature_ = 1469598103934665603ULL;
};

using Segments = std::vector<int>;

Var MatMul(Tape& t, Var a, Var b);
Var Add(Tape& t, Var a, Var b);
// a [n x d] + bias [1 x d] broadcast over rows.
Var AddBias(Tape& t, Var a, Var bias);
Var Mul(Tape& t, Var a, Var b);
Var Scale(Tape& t, Var a, double factor);
Var ConcatCols(Tape& t, std::span<const Var> parts);
Var Relu(Tape& t, Var a);
Var LeakyRelu(Tape& t, Var a, double slope);
Var Sigmoid(Tape& t, Var a);
Var Exp(Tape& t, Var a);
Var Log(Tape& t, Var a);
Var Softplus(Tape& t, Var a);
// Rows a[indices[i]]; backward scatter-adds.
Var RowGather(Tape& t, Var a, std::span<const int> indices);
// Softmax of an n x 1 column within each segment (rows sharing an id).
Var SegmentSoftmax(Tape& t, Var logits, const Segments& segments, int num_segments);
Var SegmentLogSoftmax(Tape& t, Var logits, const Segments& segments, int num_segments);
// out[s] = sum over rows r with segments[r] == s of weights[r] * values[r].
Var SegmentWeightedSum(Tape& t, Var values, Var weights, const Segments& segments,
                       int num_segments);
// Row-wise sum of columns: [n x d] -> [n x 1].
Var RowSum(Tape& t, Var a);
// Mean of all entries -> 1 x 1.
Var Mean(Tape& t, Var a);
Var Sum(Tape& t, Var a);
// Inverted dropout: scales survivors by 1/(1-rate). Identity when !training.
Var Dropout(Tape& t, Var a, double rate, bool training, RandomStream& rng);

// Stable scalar helpers shared by ops and plain-value code.
double StableSoftplus(double x);
double StableSigmoid(double x);

}  // namespace taxoexpan::diff
