#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "taxoexpan/diff.hpp"
#include "taxoexpan/gradcheck.hpp"

using namespace taxoexpan;
using namespace taxoexpan::diff;
using testing::RandomMatrix;

TEST_CASE("matmul matches a triple loop") {
  RandomStream rng(1);
  const Matrix a = RandomMatrix(rng, 3, 5);
  const Matrix b = RandomMatrix(rng, 5, 2);
  Tape t;
  const Matrix& c = t.value(MatMul(t, t.Constant(a), t.Constant(b)));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 2; ++j) {
      double s = 0.0;
      for (int k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(MatMul(t, t.Constant(a), t.Constant(a)), ConfigError);
}

TEST_CASE("leaky_relu values and subgradient at zero") {
  Tape t;
  Matrix x(1, 3);
  x << -2.0, 0.0, 3.0;
  const Var in = t.Leaf(x);
  const Var y = LeakyRelu(t, in, 0.2);
  CHECK(t.value(y)(0, 0) == doctest::Approx(-0.4));
  CHECK(t.value(y)(0, 1) == 0.0);
  CHECK(t.value(y)(0, 2) == 3.0);
  t.Backward(Sum(t, y));
  CHECK(t.grad(in)(0, 0) == doctest::Approx(0.2));
  CHECK(t.grad(in)(0, 1) == 1.0);  // positive-side subgradient
  CHECK(t.grad(in)(0, 2) == 1.0);
}

TEST_CASE("softplus is stable and exact at zero") {
  CHECK(StableSoftplus(0.0) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(std::abs(StableSoftplus(0.0) - std::log(2.0)) < 1e-15);
  CHECK(StableSoftplus(1000.0) == 1000.0);
  CHECK(StableSoftplus(-1000.0) >= 0.0);
  CHECK(StableSoftplus(-1000.0) < 1e-300);
  Tape t;
  Matrix x(1, 3);
  x << -800.0, 0.0, 800.0;
  const Matrix& y = t.value(Softplus(t, t.Constant(x)));
  CHECK(y.allFinite());
  CHECK(y(0, 1) == doctest::Approx(std::numbers::ln2));
  CHECK(y(0, 2) == 800.0);
}

TEST_CASE("sigmoid saturates without overflow") {
  CHECK(StableSigmoid(0.0) == 0.5);
  CHECK(StableSigmoid(800.0) == 1.0);
  CHECK(StableSigmoid(-800.0) >= 0.0);
}

TEST_CASE("segment_softmax sums to one per segment") {
  RandomStream rng(2);
  Tape t;
  const Segments seg{0, 1, 0, 2, 1, 1};
  Matrix x = RandomMatrix(rng, 6, 1) * 30.0;
  const Matrix& y = t.value(SegmentSoftmax(t, t.Constant(x), seg, 3));
  double sums[3] = {0, 0, 0};
  for (int i = 0; i < 6; ++i) {
    CHECK(y(i, 0) > 0.0);
    sums[seg[i]] += y(i, 0);
  }
  for (double s : sums) CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  // Singleton segment gets weight exactly one.
  CHECK(y(3, 0) == 1.0);
}

TEST_CASE("segment_softmax is shift invariant and handles huge logits") {
  Tape t;
  const Segments seg{0, 0, 0};
  Matrix x(3, 1);
  x << 1000.0, 1001.0, 999.0;
  Matrix shifted = x.array() - 1000.0;
  const Matrix a = t.value(SegmentSoftmax(t, t.Constant(x), seg, 1));
  const Matrix b = t.value(SegmentSoftmax(t, t.Constant(shifted), seg, 1));
  CHECK(a.allFinite());
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("segment ops reject empty segments and bad ids") {
  Tape t;
  Matrix x = Matrix::Zero(2, 1);
  CHECK_THROWS_AS(SegmentSoftmax(t, t.Constant(x), {0, 0}, 2), ConfigError);
  CHECK_THROWS_AS(SegmentSoftmax(t, t.Constant(x), {0, 3}, 2), ConfigError);
  CHECK_THROWS_AS(SegmentSoftmax(t, t.Constant(x), {0}, 1), ConfigError);
}

TEST_CASE("segment_log_softmax equals log of segment_softmax") {
  RandomStream rng(3);
  const Segments seg{0, 0, 1, 1, 1};
  const Matrix x = RandomMatrix(rng, 5, 1);
  Tape t;
  const Matrix p = t.value(SegmentSoftmax(t, t.Constant(x), seg, 2));
  const Matrix lp = t.value(SegmentLogSoftmax(t, t.Constant(x), seg, 2));
  CHECK((p.array().log().matrix() - lp).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("dropout is identity at inference and deterministic per stream") {
  RandomStream rng(4);
  const Matrix x = RandomMatrix(rng, 50, 40);
  Tape t;
  RandomStream r1(9);
  CHECK(t.value(Dropout(t, t.Constant(x), 0.5, false, r1)) == x);
  CHECK(t.value(Dropout(t, t.Constant(x), 0.0, true, r1)) == x);
  RandomStream a(7), b(7);
  const Matrix da = t.value(Dropout(t, t.Constant(x), 0.3, true, a));
  const Matrix db = t.value(Dropout(t, t.Constant(x), 0.3, true, b));
  CHECK(da == db);
  int zeros = 0;
  for (Eigen::Index i = 0; i < da.size(); ++i) {
    if (da.data()[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(da.data()[i] == doctest::Approx(x.data()[i] / 0.7));
    }
  }
  // 2000 entries at rate 0.3: 600 expected, sd about 20.5.
  CHECK(zeros > 600 - 4 * 21);
  CHECK(zeros < 600 + 4 * 21);
  CHECK_THROWS_AS(Dropout(t, t.Constant(x), 1.0, true, a), ConfigError);
}

TEST_CASE("backward requires a scalar and accumulates into parameters") {
  Parameter p;
  p.value = Matrix::Constant(2, 2, 3.0);
  p.ZeroGrad();
  {
    Tape t;
    const Var v = t.Param(p);
    CHECK_THROWS_AS(t.Backward(v), ConfigError);
    t.Backward(Sum(t, Mul(t, v, v)));
  }
  CHECK(p.grad.isApprox(Matrix::Constant(2, 2, 6.0)));
  {
    Tape t;
    t.Backward(Sum(t, t.Param(p)));
  }
  // Gradients accumulate across backward passes until ZeroGrad().
  CHECK(p.grad.isApprox(Matrix::Constant(2, 2, 7.0)));
  p.ZeroGrad();
  CHECK(p.grad.isZero());
}

TEST_CASE("a parameter used twice receives both contributions") {
  Parameter p;
  p.value = Matrix::Constant(1, 1, 2.0);
  p.ZeroGrad();
  Tape t;
  const Var a = t.Param(p);
  const Var b = t.Param(p);
  t.Backward(Sum(t, Mul(t, a, b)));
  CHECK(p.grad(0, 0) == doctest::Approx(4.0));
}

TEST_CASE("frozen parameters receive no gradient") {
  Parameter p;
  p.value = Matrix::Constant(1, 1, 2.0);
  p.ZeroGrad();
  Tape t;
  const Var v = t.Frozen(p);
  CHECK_FALSE(t.requires_grad(v));
  t.Backward(Sum(t, Mul(t, v, t.Leaf(Matrix::Ones(1, 1)))));
  CHECK(p.grad(0, 0) == 0.0);
}

TEST_CASE("kink signature tracks relu sign patterns") {
  Matrix a(1, 2), b(1, 2), c(1, 2);
  a << 1.0, -1.0;
  b << 2.0, -3.0;
  c << -1.0, -1.0;
  auto sig = [](const Matrix& m) {
    Tape t;
    Relu(t, t.Constant(m));
    return t.kink_signature();
  };
  CHECK(sig(a) == sig(b));
  CHECK(sig(a) != sig(c));
}

TEST_CASE("every primitive passes central finite differences") {
  GradCheckOptions options;
  options.seeds = 3;
  for (const auto& r : RunPrimitiveChecks(options)) {
    INFO(r.name << " seed " << r.seed << " error " << r.max_error);
    CHECK(r.passed);
    CHECK(r.checked > 0);
  }
}

TEST_CASE("gradient checker catches a wrong gradient") {
  // Custom op whose backward is off by a factor of two.
  Parameter p;
  RandomStream rng(5);
  p.value = RandomMatrix(rng, 2, 2);
  auto build = [&](Tape& t) {
    const Var x = t.Param(p);
    const Var y = t.Record(t.value(x).array().square().matrix(), {x}, [x](Tape& tp, int self) {
      tp.Accumulate(x, tp.upstream(self).cwiseProduct(tp.value(x)));  // should be 2x
    });
    return Sum(t, y);
  };
  const GradCheckResult r = CheckGradients("bad_square", {&p}, build, {}, 0);
  CHECK_FALSE(r.passed);
  CHECK(r.max_error > 0.1);
}
