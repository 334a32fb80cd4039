#include "taxoexpan/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "taxoexpan/model.hpp"
#include "taxoexpan/train.hpp"

namespace taxoexpan {

using diff::Parameter;
using diff::Tape;
using diff::Var;

namespace {

struct Evaluation {
  double value;
  std::uint64_t kinks;
};

Evaluation Evaluate(const std::function<Var(Tape&)>& build) {
  Tape tape;
  const Var loss = build(tape);
  return {tape.value(loss)(0, 0), tape.kink_signature()};
}

Matrix RandomMatrix(RandomStream& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.Normal();
  return m;
}

Parameter MakeParam(Matrix value) {
  Parameter p;
  p.value = std::move(value);
  p.ZeroGrad();
  return p;
}

// Reduces an arbitrary output to a scalar with fixed random weights so every
// output entry contributes a distinct amount.
Var Project(Tape& tape, Var out, const Matrix& weights) {
  return diff::Sum(tape, diff::Mul(tape, out, tape.Constant(weights)));
}

}  // namespace

GradCheckResult CheckGradients(const std::string& name, std::vector<Parameter*> params,
                               const std::function<Var(Tape&)>& build,
                               const GradCheckOptions& options, std::uint64_t seed) {
  GradCheckResult result;
  result.name = name;
  result.seed = seed;
  for (Parameter* p : params) p->ZeroGrad();
  std::uint64_t base_kinks = 0;
  {
    Tape tape;
    const Var loss = build(tape);
    base_kinks = tape.kink_signature();
    tape.Backward(loss);
  }
  RandomStream pick = RandomStream(seed).Split("gradcheck_coordinates");
  for (Parameter* p : params) {
    const auto size = static_cast<std::size_t>(p->value.size());
    std::vector<std::size_t> coords(size);
    for (std::size_t i = 0; i < size; ++i) coords[i] = i;
    const std::size_t take = std::min<std::size_t>(size, options.coordinates_per_tensor);
    for (std::size_t i = 0; i < take; ++i) std::swap(coords[i], coords[i + pick.Below(size - i)]);
    for (std::size_t c = 0; c < take; ++c) {
      double& x = p->value.data()[coords[c]];
      const double saved = x;
      x = saved + options.step;
      const Evaluation plus = Evaluate(build);
      x = saved - options.step;
      const Evaluation minus = Evaluate(build);
      x = saved;
      if (plus.kinks != base_kinks || minus.kinks != base_kinks) {
        ++result.skipped;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * options.step);
      const double analytic = p->grad.size() == p->value.size() ? p->grad.data()[coords[c]] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      const double error = std::abs(analytic - numeric) / denom;
      if (!std::isfinite(error)) {
        result.max_error = std::numeric_limits<double>::infinity();
      } else {
        result.max_error = std::max(result.max_error, error);
      }
      ++result.checked;
    }
  }
  result.passed = result.checked > 0 && result.max_error < options.tolerance;
  return result;
}

std::vector<GradCheckResult> RunPrimitiveChecks(const GradCheckOptions& options) {
  std::vector<GradCheckResult> out;
  for (int s = 0; s < options.seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    RandomStream rng = RandomStream(seed).Split("primitives");
    auto unary = [&](const std::string& name, Matrix input,
                     const std::function<Var(Tape&, Var)>& op) {
      Parameter a = MakeParam(std::move(input));
      Matrix w;
      {
        Tape probe;
        const Var y = op(probe, probe.Constant(a.value));
        w = RandomMatrix(rng, probe.value(y).rows(), probe.value(y).cols());
      }
      out.push_back(CheckGradients(
          name, {&a}, [&](Tape& t) { return Project(t, op(t, t.Param(a)), w); }, options, seed));
    };
    auto binary = [&](const std::string& name, Matrix x, Matrix y,
                      const std::function<Var(Tape&, Var, Var)>& op) {
      Parameter a = MakeParam(std::move(x));
      Parameter b = MakeParam(std::move(y));
      Matrix w;
      {
        Tape probe;
        const Var r = op(probe, probe.Constant(a.value), probe.Constant(b.value));
        w = RandomMatrix(rng, probe.value(r).rows(), probe.value(r).cols());
      }
      out.push_back(CheckGradients(
          name, {&a, &b}, [&](Tape& t) { return Project(t, op(t, t.Param(a), t.Param(b)), w); },
          options, seed));
    };

    binary("matmul", RandomMatrix(rng, 3, 4), RandomMatrix(rng, 4, 2), diff::MatMul);
    binary("add", RandomMatrix(rng, 3, 4), RandomMatrix(rng, 3, 4), diff::Add);
    binary("add_bias", RandomMatrix(rng, 3, 4), RandomMatrix(rng, 1, 4), diff::AddBias);
    binary("mul", RandomMatrix(rng, 3, 4), RandomMatrix(rng, 3, 4), diff::Mul);
    binary("concat_cols", RandomMatrix(rng, 3, 2), RandomMatrix(rng, 3, 3),
           [](Tape& t, Var a, Var b) {
             const Var parts[] = {a, b};
             return diff::ConcatCols(t, parts);
           });
    unary("scale", RandomMatrix(rng, 3, 3), [](Tape& t, Var a) { return diff::Scale(t, a, -1.7); });
    unary("relu", RandomMatrix(rng, 4, 3), diff::Relu);
    unary("leaky_relu", RandomMatrix(rng, 4, 3),
          [](Tape& t, Var a) { return diff::LeakyRelu(t, a, 0.2); });
    unary("sigmoid", RandomMatrix(rng, 4, 3, 2.0), diff::Sigmoid);
    unary("exp", RandomMatrix(rng, 4, 3), diff::Exp);
    unary("softplus", RandomMatrix(rng, 4, 3, 3.0), diff::Softplus);
    unary("log", (RandomMatrix(rng, 4, 3).array().abs() + 0.5).matrix(), diff::Log);
    unary("row_gather", RandomMatrix(rng, 4, 3), [](Tape& t, Var a) {
      const int idx[] = {2, 0, 2, 3, 1, 2};
      return diff::RowGather(t, a, idx);
    });
    const diff::Segments segments{0, 0, 1, 1, 1, 2, 2};
    unary("segment_softmax", RandomMatrix(rng, 7, 1, 2.0),
          [&](Tape& t, Var a) { return diff::SegmentSoftmax(t, a, segments, 3); });
    unary("segment_log_softmax", RandomMatrix(rng, 7, 1, 2.0),
          [&](Tape& t, Var a) { return diff::SegmentLogSoftmax(t, a, segments, 3); });
    binary("segment_weighted_sum", RandomMatrix(rng, 7, 3), RandomMatrix(rng, 7, 1),
           [&](Tape& t, Var v, Var w) { return diff::SegmentWeightedSum(t, v, w, segments, 3); });
    unary("row_sum", RandomMatrix(rng, 4, 3), diff::RowSum);
    unary("sum", RandomMatrix(rng, 4, 3), diff::Sum);
    unary("mean", RandomMatrix(rng, 4, 3), diff::Mean);
    const std::uint64_t mask_seed = rng.NextU64();
    unary("dropout", RandomMatrix(rng, 5, 4), [mask_seed](Tape& t, Var a) {
      RandomStream mask(mask_seed);  // same mask on every evaluation
      return diff::Dropout(t, a, 0.3, true, mask);
    });
  }
  return out;
}

namespace {

Taxonomy RandomSmallTaxonomy(RandomStream& rng, int nodes, int dim) {
  std::vector<std::string> names;
  for (int i = 0; i < nodes; ++i) names.push_back("n" + std::to_string(i));
  std::vector<Edge> edges;
  for (int i = 1; i < nodes; ++i) {
    const auto p = static_cast<ConceptId>(rng.Below(static_cast<std::uint64_t>(i)));
    edges.push_back({p, i});
    if (i > 2 && rng.Uniform() < 0.25) {
      const auto q = static_cast<ConceptId>(rng.Below(static_cast<std::uint64_t>(i)));
      if (q != p) edges.push_back({q, i});
    }
  }
  return Taxonomy(std::move(names), RandomMatrix(rng, nodes, dim), std::move(edges));
}

}  // namespace

std::vector<GradCheckResult> RunModelChecks(const GradCheckOptions& options) {
  std::vector<GradCheckResult> out;
  for (int s = 0; s < options.seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    RandomStream rng = RandomStream(seed).Split("model_check");
    const Taxonomy taxonomy = RandomSmallTaxonomy(rng, 12, 4);
    const NegativeSampler sampler(taxonomy);
    std::vector<TrainInstance> batch;
    for (int k = 0; k < 2; ++k) {
      const Edge& e = taxonomy.edges()[rng.Below(taxonomy.edge_count())];
      const int n = static_cast<int>(std::min<std::size_t>(3, sampler.EligibleCount(e.child)));
      batch.push_back({e.child, e.parent, sampler.Sample(e.child, n, rng)});
    }
    const LossKind loss = s % 2 == 0 ? LossKind::kInfoNce : LossKind::kBce;
    for (Arch arch : {Arch::kGcn, Arch::kGat, Arch::kPgcn, Arch::kPgat}) {
      for (ReadoutKind readout :
           {ReadoutKind::kMean, ReadoutKind::kWeightedMean, ReadoutKind::kConcat}) {
        for (MatcherKind matcher : {MatcherKind::kLbm, MatcherKind::kMlp}) {
          ModelConfig cfg;
          cfg.arch = arch;
          cfg.heads = {2, 1};
          cfg.hidden = {3, 4};
          cfg.position_dim = IsPositionEnhanced(arch) ? 2 : 0;
          cfg.readout = readout;
          cfg.matcher = matcher;
          cfg.mlp_hidden = 5;
          cfg.dropout = 0.2;
          Model model(cfg, taxonomy.dimension(), rng.NextU64());
          // Non-zero readout weights so their gradient path is exercised.
          for (auto& [name, p] : model.params()) {
            if (name == "readout.position_weight") p.value = RandomMatrix(rng, 3, 1, 0.5);
          }
          std::vector<Parameter*> params;
          for (auto& [name, p] : model.params()) params.push_back(&p);
          const std::uint64_t dropout_seed = rng.NextU64();
          const std::string name = "model." + ToString(arch) + "." + ToString(readout) + "." +
                                   ToString(matcher) + "." + ToString(loss);
          out.push_back(CheckGradients(
              name, params,
              [&](Tape& t) {
                RandomStream dropout(dropout_seed);
                return BatchObjective(t, model, taxonomy, batch, loss, &dropout);
              },
              options, seed));
        }
      }
    }
  }
  return out;
}

std::vector<GradCheckResult> RunGradientChecks(const GradCheckOptions& options) {
  auto all = RunPrimitiveChecks(options);
  auto model = RunModelChecks(options);
  all.insert(all.end(), model.begin(), model.end());
  return all;
}

}  // namespace taxoexpan
