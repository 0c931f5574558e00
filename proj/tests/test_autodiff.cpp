#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "recseg/autodiff/adam.hpp"
#include "recseg/autodiff/checkpoint.hpp"
#include "recseg/autodiff/gradcheck.hpp"
#include "recseg/autodiff/ops.hpp"

using namespace recseg;
using namespace recseg::ad;

namespace {

Matrix<double> mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix<double> m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix<double> random(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = U(rng);
  return m;
}

}  // namespace

TEST(Linear, IdentityAndBias) {
  Tape<double> t;
  const Matrix<double> x = mat({{1, 2, 3}, {4, 5, 6}});
  Var y = linear(t, t.constant(x), t.constant(Matrix<double>::Identity(3, 3)), t.constant(Matrix<double>::Zero(1, 3)));
  EXPECT_EQ(t.value(y), x);
  const Matrix<double> b = mat({{0.5, -1}});
  Var z = linear(t, t.constant(Matrix<double>::Zero(2, 3)), t.constant(Matrix<double>::Ones(3, 2)), t.constant(b));
  EXPECT_EQ(t.value(z), mat({{0.5, -1}, {0.5, -1}}));
}

TEST(Linear, ShapeMismatchNamesDims) {
  Tape<double> t;
  try {
    linear(t, t.constant(Matrix<double>::Zero(2, 3)), t.constant(Matrix<double>::Zero(4, 2)),
           t.constant(Matrix<double>::Zero(1, 2)));
    FAIL() << "expected an error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("4x2"), std::string::npos) << e.what();
  }
}

TEST(Linear, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  ParamStore<double> ps;
  ps.add("W", 3, 2).value = random(3, 2, rng);
  ps.add("b", 1, 2).value = random(1, 2, rng);
  const Matrix<double> x = random(4, 3, rng);
  const Matrix<double> target = random(4, 2, rng);
  auto r = check_param_gradients(ps, [&](Tape<double>& t) {
    return mse(t, linear(t, t.constant(x), t.param(ps.at("W")), t.param(ps.at("b"))), target);
  });
  EXPECT_LE(r.max_rel_err, 1e-4);
}

TEST(PointSharedLinear, RowsAreIndependent) {
  std::mt19937_64 rng(2);
  Tape<double> t;
  const Matrix<double> x = random(5, 3, rng);
  const Matrix<double> W = random(3, 4, rng);
  const Matrix<double> b = random(1, 4, rng);
  const Matrix<double> y = t.value(point_shared_linear(t, t.constant(x), t.constant(W), t.constant(b)));
  for (Eigen::Index i = 0; i < 5; ++i) {
    Tape<double> s;
    const Matrix<double> yi = s.value(linear(s, s.constant(Matrix<double>(x.row(i))), s.constant(W), s.constant(b)));
    EXPECT_LT((y.row(i) - yi).norm(), 1e-15);
  }
}

TEST(MaxPool, Examples) {
  Tape<double> t;
  auto r = max_pool_points(t, t.constant(mat({{1, 5}, {3, 2}})));
  EXPECT_EQ(t.value(r.pooled), mat({{3, 5}}));
  EXPECT_EQ(r.argmax, (std::vector<Eigen::Index>{1, 0}));
  auto s = max_pool_points(t, t.constant(mat({{7, -1, 2}})));
  EXPECT_EQ(t.value(s.pooled), mat({{7, -1, 2}}));
  EXPECT_EQ(s.argmax, (std::vector<Eigen::Index>{0, 0, 0}));
  EXPECT_THROW(max_pool_points(t, t.constant(Matrix<double>(0, 2))), InvalidArgument);
}

TEST(MaxPool, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const Matrix<double> x = random(16, 8, rng);
  const Matrix<double> target = random(1, 8, rng);
  auto r = check_input_gradient(x, [&](Tape<double>& t, Var v) { return mse(t, max_pool_points(t, v).pooled, target); });
  EXPECT_LE(r.max_rel_err, 1e-4);
}

TEST(SoftmaxCrossEntropy, Examples) {
  Tape<double> t;
  const int zero[1] = {0}, two[1] = {2};
  EXPECT_NEAR(t.value(softmax_cross_entropy(t, t.constant(Matrix<double>::Zero(1, 3)), std::span<const int>(two, 1)))(0, 0),
              std::log(3.0), 1e-12);
  EXPECT_LT(t.value(softmax_cross_entropy(t, t.constant(mat({{50, 0, 0}})), std::span<const int>(zero, 1)))(0, 0), 1e-8);
  const int bad[1] = {3};
  EXPECT_THROW(softmax_cross_entropy(t, t.constant(Matrix<double>::Zero(1, 3)), std::span<const int>(bad, 1)),
               InvalidArgument);
}

TEST(SoftmaxCrossEntropy, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const Matrix<double> x = random(5, 3, rng);
  const std::vector<int> tgt{0, 2, 1, 1, 0};
  auto r = check_input_gradient(x, [&](Tape<double>& t, Var v) { return softmax_cross_entropy(t, v, std::span<const int>(tgt)); });
  EXPECT_LE(r.max_rel_err, 1e-4);
}

TEST(Mse, Examples) {
  std::mt19937_64 rng(5);
  Tape<double> t;
  const Matrix<double> a = random(3, 4, rng);
  EXPECT_EQ(t.value(mse(t, t.constant(a), a))(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(t.value(mse(t, t.constant(Matrix<double>(a.array() + 1.0)), a))(0, 0), 1.0);
  const Matrix<double> b = random(3, 4, rng);
  double direct = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) direct += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
  EXPECT_NEAR(t.value(mse(t, t.constant(a), b))(0, 0), direct / 12.0, 1e-15);
}

TEST(ElementwiseOps, Examples) {
  Tape<double> t;
  EXPECT_EQ(t.value(tanh_op(t, t.constant(Matrix<double>::Zero(1, 1))))(0, 0), 0.0);
  EXPECT_EQ(t.value(relu_op(t, t.constant(mat({{-1, 2}})))), mat({{0, 2}}));
  EXPECT_EQ(t.value(concat(t, t.constant(mat({{1}, {2}})), t.constant(mat({{3, 4}, {5, 6}})))), mat({{1, 3, 4}, {2, 5, 6}}));
  std::mt19937_64 rng(1);
  Var x = t.constant(mat({{1, 2, 3}}));
  EXPECT_EQ(dropout(t, x, 0.2, false, rng).id, x.id);
}

TEST(Dropout, ZeroesOrRescales) {
  std::mt19937_64 rng(6);
  Tape<double> t;
  const Matrix<double> x = Matrix<double>::Ones(200, 50);
  const Matrix<double> y = t.value(dropout(t, t.constant(x), 0.2, true, rng));
  int zeros = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y.data()[i];
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.25) < 1e-15);
    zeros += v == 0.0;
  }
  EXPECT_NEAR(zeros / 10000.0, 0.2, 0.02);
}

TEST(PointNorm, MomentsBeforeScaleShift) {
  std::mt19937_64 rng(7);
  Tape<double> t;
  const Matrix<double> x = random(40, 6, rng) * 3.0;
  const Matrix<double> y = t.value(point_norm(t, t.constant(x), t.constant(Matrix<double>::Ones(1, 6)),
                                              t.constant(Matrix<double>::Zero(1, 6))));
  for (Eigen::Index c = 0; c < 6; ++c) {
    const double mean = y.col(c).mean();
    const double var = (y.col(c).array() - mean).square().mean();
    EXPECT_LT(std::abs(mean), 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
}

TEST(PointNorm, SingleRowIsScaleShiftOnly) {
  Tape<double> t;
  const Matrix<double> y = t.value(point_norm(t, t.constant(mat({{1, 2}})), t.constant(mat({{2, 3}})), t.constant(mat({{1, 1}}))));
  EXPECT_EQ(y, mat({{3, 7}}));
}

TEST(PointNorm, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  ParamStore<double> ps;
  ps.add("gamma", 1, 4).value = random(1, 4, rng);
  ps.add("beta", 1, 4).value = random(1, 4, rng);
  const Matrix<double> x = random(9, 4, rng);
  const Matrix<double> target = random(9, 4, rng);
  auto loss = [&](Tape<double>& t, Var xv) {
    return mse(t, point_norm(t, xv, t.param(ps.at("gamma")), t.param(ps.at("beta"))), target);
  };
  EXPECT_LE(check_param_gradients(ps, [&](Tape<double>& t) { return loss(t, t.constant(x)); }).max_rel_err, 1e-4);
  EXPECT_LE(check_input_gradient(x, loss).max_rel_err, 1e-4);
}

TEST(Backward, SumGivesOnes) {
  Tape<double> t;
  Var x = t.leaf(Matrix<double>::Constant(5, 1, 0.3));
  Var other = t.leaf(Matrix<double>::Constant(2, 1, 0.3));
  Var loss = sum(t, x);
  t.backward(loss);
  EXPECT_EQ(t.grad(x), Matrix<double>::Ones(5, 1));
  EXPECT_EQ(t.grad(other), Matrix<double>::Zero(2, 1));
}

TEST(Backward, RejectsNonScalar) {
  Tape<double> t;
  Var x = t.leaf(Matrix<double>::Ones(2, 2));
  EXPECT_THROW(t.backward(x), InvalidArgument);
}

TEST(Backward, SharedParameterAccumulatesOnce) {
  ParamStore<double> ps;
  ps.add("w", 1, 1).value(0, 0) = 2.0;
  Tape<double> t;
  Var a = t.param(ps.at("w"));
  Var b = t.param(ps.at("w"));
  EXPECT_EQ(a.id, b.id);
  t.backward(sum(t, add(t, a, b)));
  EXPECT_DOUBLE_EQ(ps.at("w").grad(0, 0), 2.0);
}

TEST(Tape, NoGradModeKeepsNothingDifferentiable) {
  ParamStore<double> ps;
  ps.add("w", 1, 1);
  Tape<double> t(false);
  Var w = t.param(ps.at("w"));
  EXPECT_FALSE(t.needs_grad(w));
  EXPECT_FALSE(t.needs_grad(tanh_op(t, w)));
}

TEST(Tape, NonFiniteValuesRaise) {
  Tape<double> t;
  Var x = t.constant(mat({{1e308}}));
  EXPECT_THROW(scale(t, x, 1e10), NumericError);
}

TEST(Adam, ZeroGradLeavesParams) {
  ParamStore<double> ps;
  ps.add("w", 2, 2).value = mat({{1, 2}, {3, 4}});
  AdamState<double> st;
  st.init(ps);
  adam_step(ps, st);
  EXPECT_EQ(ps.at("w").value, mat({{1, 2}, {3, 4}}));
}

TEST(Adam, FirstStepIsLearningRate) {
  ParamStore<double> ps;
  ps.add("w", 1, 1).value(0, 0) = 0.5;
  ps.at("w").grad(0, 0) = 1.0;
  AdamState<double> st;
  st.init(ps);
  adam_step(ps, st);
  EXPECT_NEAR(0.5 - ps.at("w").value(0, 0), 0.001, 1e-10);
}

TEST(Adam, QuadraticLossDecreases) {
  ParamStore<double> ps;
  ps.add("w", 1, 3).value = mat({{1, -2, 0.5}});
  AdamState<double> st;
  st.lr = 0.1;
  st.init(ps);
  double prev = ps.at("w").value.squaredNorm();
  for (int i = 0; i < 3; ++i) {
    ps.zero_grad();
    ps.at("w").grad = 2.0 * ps.at("w").value;
    adam_step(ps, st);
    const double now = ps.at("w").value.squaredNorm();
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(Checkpoint, RoundTripAndErrors) {
  std::mt19937_64 rng(9);
  ParamStore<float> ps;
  ps.add("a", 2, 3).value = random(2, 3, rng).cast<float>();
  ps.add("b", 1, 4).value = random(1, 4, rng).cast<float>();
  AdamState<float> st;
  st.init(ps);
  st.step = 17;
  st.m[0].setConstant(0.25f);
  auto bytes = encode_checkpoint(ps, &st);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 7), "PNCKPT1");

  ParamStore<float> other;
  other.add("a", 2, 3);
  other.add("b", 1, 4);
  AdamState<float> st2;
  decode_checkpoint(bytes, other, &st2);
  EXPECT_EQ(other.at("a").value, ps.at("a").value);
  EXPECT_EQ(other.at("b").value, ps.at("b").value);
  EXPECT_EQ(st2.step, 17u);
  EXPECT_EQ(st2.m[0], st.m[0]);
  EXPECT_EQ(encode_checkpoint(other, &st2), bytes);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad, other, &st2), ParseError);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  EXPECT_THROW(decode_checkpoint(cut, other, &st2), ParseError);
  ParamStore<float> wrong;
  wrong.add("a", 3, 2);
  wrong.add("b", 1, 4);
  EXPECT_THROW(decode_checkpoint(bytes, wrong, static_cast<AdamState<float>*>(nullptr)), ParseError);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.ckpt", other, &st2), IoError);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / 1.1, 1e-12);
  EXPECT_LT(relative_error(0.0, 1e-10), 1e-4);
}
