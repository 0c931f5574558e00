#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "recseg/data.hpp"
#include "recseg/nets.hpp"

using namespace recseg;
using namespace recseg::nets;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

template <class T>
void zero_all(ModelParams<T>& p) {
  for (auto& [name, t] : p.store) t.value.setZero();
}

Matrix<double> random(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(-1, 1);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = U(rng);
  return m;
}

}  // namespace

TEST(ModelParams, FullSizeCounts) {
  NetDims d;
  EXPECT_EQ(ModelParams<float>(d, 1).count(), 768464u);
  d.semantic_classes = 7;
  EXPECT_EQ(ModelParams<float>(d, 1).count(), 810071u);
}

TEST(ModelParams, SeedDeterminesInitialization) {
  auto a = ModelParams<float>(NetDims::reduced(), 4);
  auto b = ModelParams<float>(NetDims::reduced(), 4);
  auto c = ModelParams<float>(NetDims::reduced(), 5);
  bool differs = false;
  for (auto& [name, t] : a.store) {
    EXPECT_EQ(t.value, b.store.at(name).value);
    differs = differs || t.value != c.store.at(name).value;
  }
  EXPECT_TRUE(differs);
}

TEST(EncodeCloud, PermutationInvariant) {
  ModelParams<double> p(NetDims{}, 3);
  const auto rec = data::generate_shape("chair", 2, 256);
  Matrix<double> x = cloud_matrix<double>(rec.cloud);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<Eigen::Index>(i);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  Matrix<double> y(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = x.row(perm[i]);
  Tape<double> t(false);
  const Matrix<double> a = t.value(encode_cloud(t, p, t.constant(x)));
  const Matrix<double> b = t.value(encode_cloud(t, p, t.constant(y)));
  ASSERT_EQ(a.cols(), 128);
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-6);

  const Matrix<double> pa = t.value(encode_points(t, p, t.constant(x)));
  const Matrix<double> pb = t.value(encode_points(t, p, t.constant(y)));
  for (std::size_t i = 0; i < perm.size(); ++i)
    EXPECT_LE((pb.row(static_cast<Eigen::Index>(i)) - pa.row(perm[i])).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(EncodeCloud, SinglePointAndLargeCloud) {
  ModelParams<float> p(NetDims{}, 3);
  Tape<float> t(false);
  Matrix<float> one(1, 6);
  one << 0.1f, 0.2f, 0.3f, 0.f, 0.f, 1.f;
  EXPECT_TRUE(t.value(encode_cloud(t, p, t.constant(one))).allFinite());
  EXPECT_EQ(t.value(encode_points(t, p, t.constant(one))).rows(), 1);
  const auto rec = data::generate_shape("table", 9, 2048);
  EXPECT_TRUE(t.value(encode_cloud(t, p, t.constant(cloud_matrix<float>(rec.cloud)))).allFinite());
  EXPECT_THROW(encode_cloud(t, p, t.constant(Matrix<float>(0, 6))), InvalidArgument);
  EXPECT_THROW(encode_cloud(t, p, t.constant(Matrix<float>::Zero(4, 3))), InvalidArgument);
}

TEST(RootFeature, DuplicatesTheShapeFeature) {
  ModelParams<double> p(NetDims{}, 1);
  std::mt19937_64 rng(2);
  Tape<double> t;
  const Matrix<double> z = Matrix<double>::Zero(1, 128);
  EXPECT_EQ(t.value(make_root_feature(t, p, t.constant(z))), Matrix<double>::Zero(1, 256));
  const Matrix<double> v = random(1, 128, rng);
  const Matrix<double> r = t.value(make_root_feature(t, p, t.constant(v)));
  EXPECT_EQ(Matrix<double>(r.leftCols(128)), v);
  EXPECT_EQ(Matrix<double>(r.rightCols(128)), v);
}

TEST(DecodeChildren, ZeroWeightsAndTanhRange) {
  ModelParams<double> p(NetDims{}, 1);
  std::mt19937_64 rng(3);
  Tape<double> t;
  const Matrix<double> x = random(1, 256, rng) * 10.0;
  auto [l, r] = decode_children(t, p, t.constant(x));
  ASSERT_EQ(t.value(l).cols(), 128);
  EXPECT_LT(t.value(l).cwiseAbs().maxCoeff(), 1.0);
  EXPECT_LT(t.value(r).cwiseAbs().maxCoeff(), 1.0);
  zero_all(p);
  Tape<double> s;
  auto [l0, r0] = decode_children(s, p, s.constant(x));
  EXPECT_EQ(s.value(l0), Matrix<double>::Zero(1, 128));
  EXPECT_EQ(s.value(r0), Matrix<double>::Zero(1, 128));
  EXPECT_THROW(decode_children(s, p, s.constant(Matrix<double>::Zero(1, 128))), InvalidArgument);
}

TEST(ClassifyNode, ZeroParamsUniformAndSoftmaxSumsToOne) {
  ModelParams<double> p(NetDims{}, 1);
  std::mt19937_64 rng(4);
  Tape<double> t;
  const Matrix<double> x = random(1, 256, rng);
  const Matrix<double> prob = ad::softmax_rows(t.value(classify_node(t, p, t.constant(x))));
  EXPECT_NEAR(prob.sum(), 1.0, 1e-6);
  zero_all(p);
  Tape<double> z;
  EXPECT_EQ(z.value(classify_node(z, p, z.constant(x))), Matrix<double>::Zero(1, 3));
}

TEST(PredictSymmetry, ZeroParamsAndDecoding) {
  ModelParams<double> p(NetDims{}, 1);
  zero_all(p);
  Tape<double> t;
  const Matrix<double> row = t.value(predict_symmetry(t, p, t.constant(Matrix<double>::Ones(1, 256))));
  EXPECT_EQ(row, Matrix<double>::Zero(1, 11));

  Matrix<double> raw = Matrix<double>::Zero(1, 11);
  raw(0, 2) = 5;  // rotational
  raw(0, 8) = 2;  // direction (0,0,2)
  raw(0, 9) = 3.6;
  const SymmetrySpec s = decode_symmetry(raw);
  EXPECT_EQ(s.kind, SymmetryKind::Rotational);
  EXPECT_LT((s.direction - Vec3::UnitZ()).norm(), 1e-15);
  EXPECT_EQ(s.fold, 4);
}

TEST(SymmetryTarget, MasksFollowKind) {
  SymmetrySpec refl{SymmetryKind::Reflective, Vec3(0.1, 0, 0), Vec3::UnitX(), 2, 0.0};
  auto [tr, mr] = symmetry_target<double>(refl);
  EXPECT_EQ(mr, (Matrix<double>(1, 8) << 1, 1, 1, 1, 1, 1, 0, 0).finished());
  SymmetrySpec trans{SymmetryKind::Translational, Vec3::Zero(), Vec3::UnitZ(), 5, 0.2};
  auto [tt, mt] = symmetry_target<double>(trans);
  EXPECT_EQ(mt, (Matrix<double>(1, 8) << 0, 0, 0, 1, 1, 1, 1, 1).finished());
  EXPECT_DOUBLE_EQ(tt(0, 7), 0.2);
  EXPECT_DOUBLE_EQ(tt(0, 6), 5.0);
}

TEST(SegmentPoints, IdenticalPointsAndDeterministicEval) {
  ModelParams<double> p(NetDims{}, 2);
  std::mt19937_64 rng(5);
  Matrix<double> pts = random(6, 6, rng);
  pts.row(3) = pts.row(1);
  const Matrix<double> node = random(1, 256, rng);
  std::mt19937_64 d1(1), d2(2);
  Tape<double> t;
  Var pp = encode_points(t, p, t.constant(pts));
  const Matrix<double> a = t.value(segment_points(t, p, pp, t.constant(node), false, d1));
  const Matrix<double> b = t.value(segment_points(t, p, pp, t.constant(node), false, d2));
  ASSERT_EQ(a.rows(), 6);
  ASSERT_EQ(a.cols(), 2);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.row(1), a.row(3));
  EXPECT_THROW(segment_points(t, p, t.constant(Matrix<double>::Zero(6, 64)), t.constant(node), false, d1),
               InvalidArgument);
}

TEST(SemanticHead, ZeroParamsUniform) {
  NetDims d;
  d.semantic_classes = 7;
  ModelParams<double> p(d, 1);
  std::mt19937_64 rng(6);
  Tape<double> t;
  const Matrix<double> x = random(1, 256, rng);
  const Matrix<double> logits = t.value(predict_semantic_label(t, p, t.constant(x)));
  ASSERT_EQ(logits.cols(), 7);
  EXPECT_NEAR(ad::softmax_rows(logits).sum(), 1.0, 1e-6);
  zero_all(p);
  Tape<double> z;
  EXPECT_EQ(z.value(predict_semantic_label(z, p, z.constant(x))), Matrix<double>::Zero(1, 7));
  ModelParams<double> none(NetDims{}, 1);
  EXPECT_THROW(predict_semantic_label(t, none, t.constant(x)), InvalidArgument);
}

TEST(Ablation, Wiring) {
  std::mt19937_64 rng(7);
  Tape<double> t;
  Var rcf = t.constant(random(1, 4, rng));
  Var psf = t.constant(random(1, 4, rng));
  const Wiring full = build_ablation(Variant::Full);
  Var node = full.node_feature(t, rcf, psf);
  EXPECT_EQ(t.value(node).leftCols(4), t.value(rcf));
  EXPECT_EQ(t.value(node).rightCols(4), t.value(psf));
  EXPECT_EQ(full.classifier_input(t, rcf, node).id, node.id);

  const Wiring no_rcf = build_ablation(Variant::NoRcf);
  EXPECT_FALSE(no_rcf.uses_context());
  Var n2 = no_rcf.node_feature(t, rcf, psf);
  EXPECT_EQ(t.value(n2).leftCols(4), t.value(n2).rightCols(4));

  const Wiring no_psf = build_ablation(Variant::NoPsf);
  Var c3 = no_psf.classifier_input(t, rcf, no_psf.node_feature(t, rcf, psf));
  EXPECT_EQ(t.value(c3).leftCols(4), t.value(rcf));
  EXPECT_EQ(t.value(c3).rightCols(4), t.value(rcf));

  EXPECT_EQ(variant_from_string("no_psf"), Variant::NoPsf);
  EXPECT_THROW(variant_from_string("nope"), InvalidArgument);
}
