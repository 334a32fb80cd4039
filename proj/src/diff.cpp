#include "taxoexpan/diff.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace taxoexpan::diff {

namespace {

void RequireSameShape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()) + ")");
  }
}

void RequireColumn(const Matrix& a, const char* op) {
  if (a.cols() != 1) throw ConfigError(std::string(op) + ": expected an n x 1 column");
}

void CheckSegments(const Segments& segments, Eigen::Index rows, int num_segments,
                   const char* op) {
  if (static_cast<Eigen::Index>(segments.size()) != rows) {
    throw ConfigError(std::string(op) + ": one segment id per row required");
  }
  for (int s : segments) {
    if (s < 0 || s >= num_segments) throw ConfigError(std::string(op) + ": segment id out of range");
  }
}

}  // namespace

double StableSoftplus(double x) {
  // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double StableSigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------- tape

Var Tape::Constant(Matrix value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::Param(Parameter& p) {
  Node node;
  node.external = &p.value;
  node.requires_grad = true;
  node.param = &p;
  nodes_.push_back(std::move(node));
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::Frozen(const Parameter& p) {
  Node node;
  node.external = &p.value;
  nodes_.push_back(std::move(node));
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::Leaf(Matrix value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return {static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.index));
  return n.external ? *n.external : n.value;
}

const Matrix& Tape::grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.index)).grad; }

Matrix& Tape::EnsureGrad(int index) {
  Node& n = nodes_[index];
  if (n.grad.size() == 0) {
    const Matrix& v = n.external ? *n.external : n.value;
    n.grad.setZero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::Accumulate(Var v, const Matrix& g) { AccumulateExpr(v, g); }

Var Tape::Record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return Record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::Record(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  for (Var in : inputs) {
    if (nodes_.at(static_cast<std::size_t>(in.index)).requires_grad) node.requires_grad = true;
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return {static_cast<int>(nodes_.size()) - 1};
}

void Tape::Backward(Var loss) {
  const Matrix& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) throw ConfigError("backward: loss must be a 1x1 scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.index].requires_grad) return;
  EnsureGrad(loss.index)(0, 0) = 1.0;
  for (int i = loss.index; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) {
        n.param->ZeroGrad();
      }
      n.param->grad += n.grad;
    }
  }
}

void Tape::MixKinkSignature(const Matrix& pre_activation) {
  std::uint64_t h = kink_signature_;
  const double* p = pre_activation.data();
  for (Eigen::Index i = 0; i < pre_activation.size(); ++i) {
    h ^= p[i] >= 0.0 ? 0x9dULL : 0x3bULL;
    h *= 1099511628211ULL;
  }
  kink_signature_ = h;
}

// ----------------------------------------------------------------------- ops

Var MatMul(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.cols() != bv.rows()) {
    throw ConfigError("matmul: inner dimensions disagree (" + std::to_string(av.cols()) + " vs " +
                      std::to_string(bv.rows()) + ")");
  }
  Matrix out = av * bv;
  return t.Record(std::move(out), {a, b}, [a, b](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    if (tp.requires_grad(a)) tp.AccumulateExpr(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.AccumulateExpr(b, tp.value(a).transpose() * g);
  });
}

Var Add(Tape& t, Var a, Var b) {
  RequireSameShape(t.value(a), t.value(b), "add");
  Matrix out = t.value(a) + t.value(b);
  return t.Record(std::move(out), {a, b}, [a, b](Tape& tp, int self) {
    tp.Accumulate(a, tp.upstream(self));
    tp.Accumulate(b, tp.upstream(self));
  });
}

Var AddBias(Tape& t, Var a, Var bias) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(bias);
  if (bv.rows() != 1 || bv.cols() != av.cols()) throw ConfigError("add_bias: bias must be 1 x d");
  Matrix out = av.rowwise() + bv.row(0);
  return t.Record(std::move(out), {a, bias}, [a, bias](Tape& tp, int self) {
    tp.Accumulate(a, tp.upstream(self));
    if (tp.requires_grad(bias)) tp.AccumulateExpr(bias, tp.upstream(self).colwise().sum());
  });
}

Var Mul(Tape& t, Var a, Var b) {
  RequireSameShape(t.value(a), t.value(b), "mul");
  Matrix out = t.value(a).cwiseProduct(t.value(b));
  return t.Record(std::move(out), {a, b}, [a, b](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    if (tp.requires_grad(a)) tp.AccumulateExpr(a, g.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.AccumulateExpr(b, g.cwiseProduct(tp.value(a)));
  });
}

Var Scale(Tape& t, Var a, double factor) {
  Matrix out = t.value(a) * factor;
  return t.Record(std::move(out), {a}, [a, factor](Tape& tp, int self) {
    tp.AccumulateExpr(a, tp.upstream(self) * factor);
  });
}

Var ConcatCols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) throw ConfigError("concat_cols: row counts differ");
    cols += t.value(p).cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (Var p : parts) {
    offsets.push_back(off);
    out.middleCols(off, t.value(p).cols()) = t.value(p);
    off += t.value(p).cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.Record(std::move(out), parts, [inputs, offsets](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (tp.requires_grad(inputs[i])) {
        tp.AccumulateExpr(inputs[i], g.middleCols(offsets[i], tp.value(inputs[i]).cols()));
      }
    }
  });
}

Var Relu(Tape& t, Var a) { return LeakyRelu(t, a, 0.0); }

Var LeakyRelu(Tape& t, Var a, double slope) {
  const Matrix& av = t.value(a);
  t.MixKinkSignature(av);
  // Subgradient at 0 takes the positive side.
  Matrix out = av.unaryExpr([slope](double x) { return x >= 0.0 ? x : slope * x; });
  return t.Record(std::move(out), {a}, [a, slope](Tape& tp, int self) {
    const Matrix& x = tp.value(a);
    tp.AccumulateExpr(a, tp.upstream(self).cwiseProduct(
                             x.unaryExpr([slope](double v) { return v >= 0.0 ? 1.0 : slope; })));
  });
}

Var Sigmoid(Tape& t, Var a) {
  Matrix out = t.value(a).unaryExpr([](double x) { return StableSigmoid(x); });
  return t.Record(std::move(out), {a}, [a](Tape& tp, int self) {
    const Matrix& s = tp.value(Var{self});
    tp.AccumulateExpr(a, tp.upstream(self).cwiseProduct(
                             s.unaryExpr([](double v) { return v * (1.0 - v); })));
  });
}

Var Exp(Tape& t, Var a) {
  Matrix out = t.value(a).array().exp().matrix();
  return t.Record(std::move(out), {a}, [a](Tape& tp, int self) {
    tp.AccumulateExpr(a, tp.upstream(self).cwiseProduct(tp.value(Var{self})));
  });
}

Var Log(Tape& t, Var a) {
  Matrix out = t.value(a).array().log().matrix();
  return t.Record(std::move(out), {a}, [a](Tape& tp, int self) {
    tp.AccumulateExpr(a, tp.upstream(self).cwiseQuotient(tp.value(a)));
  });
}

Var Softplus(Tape& t, Var a) {
  Matrix out = t.value(a).unaryExpr([](double x) { return StableSoftplus(x); });
  return t.Record(std::move(out), {a}, [a](Tape& tp, int self) {
    tp.AccumulateExpr(a, tp.upstream(self).cwiseProduct(
                             tp.value(a).unaryExpr([](double x) { return StableSigmoid(x); })));
  });
}

Var RowGather(Tape& t, Var a, std::span<const int> indices) {
  const Matrix& av = t.value(a);
  Matrix out(static_cast<Eigen::Index>(indices.size()), av.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= av.rows()) throw ConfigError("row_gather: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = av.row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return t.Record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& av = tp.value(a);
    Matrix da = Matrix::Zero(av.rows(), av.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) da.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    tp.Accumulate(a, da);
  });
}

namespace {

// Per-segment max and log-sum-exp of a column; throws on empty segments.
void SegmentLogSumExp(const Matrix& x, const Segments& segments, int num_segments,
                      std::vector<double>& max_out, std::vector<double>& lse_out) {
  max_out.assign(num_segments, -std::numeric_limits<double>::infinity());
  std::vector<int> counts(num_segments, 0);
  for (std::size_t r = 0; r < segments.size(); ++r) {
    max_out[segments[r]] = std::max(max_out[segments[r]], x(static_cast<Eigen::Index>(r), 0));
    ++counts[segments[r]];
  }
  for (int s = 0; s < num_segments; ++s) {
    if (counts[s] == 0) throw ConfigError("segment_softmax: empty segment " + std::to_string(s));
  }
  std::vector<double> sums(num_segments, 0.0);
  for (std::size_t r = 0; r < segments.size(); ++r) {
    sums[segments[r]] += std::exp(x(static_cast<Eigen::Index>(r), 0) - max_out[segments[r]]);
  }
  lse_out.resize(num_segments);
  for (int s = 0; s < num_segments; ++s) lse_out[s] = max_out[s] + std::log(sums[s]);
}

}  // namespace

Var SegmentSoftmax(Tape& t, Var logits, const Segments& segments, int num_segments) {
  const Matrix& x = t.value(logits);
  RequireColumn(x, "segment_softmax");
  CheckSegments(segments, x.rows(), num_segments, "segment_softmax");
  std::vector<double> mx, lse;
  SegmentLogSumExp(x, segments, num_segments, mx, lse);
  Matrix out(x.rows(), 1);
  std::vector<double> total(num_segments, 0.0);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    out(r, 0) = std::exp(x(r, 0) - mx[segments[r]]);
    total[segments[r]] += out(r, 0);
  }
  for (Eigen::Index r = 0; r < x.rows(); ++r) out(r, 0) /= total[segments[r]];
  return t.Record(std::move(out), {logits},
                  [logits, segments, num_segments](Tape& tp, int self) {
                    const Matrix& g = tp.upstream(self);
                    const Matrix& saved = tp.value(Var{self});
                    std::vector<double> dot(num_segments, 0.0);
                    for (Eigen::Index r = 0; r < saved.rows(); ++r) {
                      dot[segments[r]] += g(r, 0) * saved(r, 0);
                    }
                    Matrix dx(saved.rows(), 1);
                    for (Eigen::Index r = 0; r < saved.rows(); ++r) {
                      dx(r, 0) = saved(r, 0) * (g(r, 0) - dot[segments[r]]);
                    }
                    tp.Accumulate(logits, dx);
                  });
}

Var SegmentLogSoftmax(Tape& t, Var logits, const Segments& segments, int num_segments) {
  const Matrix& x = t.value(logits);
  RequireColumn(x, "segment_log_softmax");
  CheckSegments(segments, x.rows(), num_segments, "segment_log_softmax");
  std::vector<double> mx, lse;
  SegmentLogSumExp(x, segments, num_segments, mx, lse);
  Matrix out(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) out(r, 0) = (x(r, 0) - mx[segments[r]]) - (lse[segments[r]] - mx[segments[r]]);
  Matrix probs = out.array().exp().matrix();
  return t.Record(std::move(out), {logits},
                  [logits, segments, num_segments, probs = std::move(probs)](Tape& tp, int self) {
                    const Matrix& g = tp.upstream(self);
                    std::vector<double> gsum(num_segments, 0.0);
                    for (Eigen::Index r = 0; r < probs.rows(); ++r) gsum[segments[r]] += g(r, 0);
                    Matrix dx(probs.rows(), 1);
                    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
                      dx(r, 0) = g(r, 0) - probs(r, 0) * gsum[segments[r]];
                    }
                    tp.Accumulate(logits, dx);
                  });
}

Var SegmentWeightedSum(Tape& t, Var values, Var weights, const Segments& segments,
                       int num_segments) {
  const Matrix& v = t.value(values);
  const Matrix& w = t.value(weights);
  RequireColumn(w, "segment_weighted_sum");
  if (w.rows() != v.rows()) throw ConfigError("segment_weighted_sum: weights/values row mismatch");
  CheckSegments(segments, v.rows(), num_segments, "segment_weighted_sum");
  Matrix out = Matrix::Zero(num_segments, v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) out.row(segments[r]) += w(r, 0) * v.row(r);
  return t.Record(std::move(out), {values, weights},
                  [values, weights, segments](Tape& tp, int self) {
                    const Matrix& g = tp.upstream(self);
                    const Matrix& v = tp.value(values);
                    const Matrix& w = tp.value(weights);
                    if (tp.requires_grad(values)) {
                      Matrix dv(v.rows(), v.cols());
                      for (Eigen::Index r = 0; r < v.rows(); ++r) {
                        dv.row(r) = w(r, 0) * g.row(segments[r]);
                      }
                      tp.Accumulate(values, dv);
                    }
                    if (tp.requires_grad(weights)) {
                      Matrix dw(w.rows(), 1);
                      for (Eigen::Index r = 0; r < v.rows(); ++r) {
                        dw(r, 0) = v.row(r).dot(g.row(segments[r]));
                      }
                      tp.Accumulate(weights, dw);
                    }
                  });
}

Var RowSum(Tape& t, Var a) {
  Matrix out = t.value(a).rowwise().sum();
  return t.Record(std::move(out), {a}, [a](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    const Eigen::Index cols = tp.value(a).cols();
    tp.AccumulateExpr(a, g.replicate(1, cols));
  });
}

Var Sum(Tape& t, Var a) {
  Matrix out(1, 1);
  out(0, 0) = t.value(a).sum();
  return t.Record(std::move(out), {a}, [a](Tape& tp, int self) {
    const Matrix& av = tp.value(a);
    tp.AccumulateExpr(a, Matrix::Constant(av.rows(), av.cols(), tp.upstream(self)(0, 0)));
  });
}

Var Mean(Tape& t, Var a) {
  const Matrix& av = t.value(a);
  if (av.size() == 0) throw ConfigError("mean: empty input");
  Matrix out(1, 1);
  out(0, 0) = av.mean();
  return t.Record(std::move(out), {a}, [a](Tape& tp, int self) {
    const Matrix& av = tp.value(a);
    const double g = tp.upstream(self)(0, 0) / static_cast<double>(av.size());
    tp.AccumulateExpr(a, Matrix::Constant(av.rows(), av.cols(), g));
  });
}

Var Dropout(Tape& t, Var a, double rate, bool training, RandomStream& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must lie in [0,1)");
  if (!training || rate == 0.0) return a;
  const Matrix& av = t.value(a);
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.Uniform() < rate ? 0.0 : keep_scale;
  }
  Matrix out = av.cwiseProduct(mask);
  return t.Record(std::move(out), {a}, [a, mask = std::move(mask)](Tape& tp, int self) {
    tp.AccumulateExpr(a, tp.upstream(self).cwiseProduct(mask));
  });
}

}  // namespace taxoexpan::diff
