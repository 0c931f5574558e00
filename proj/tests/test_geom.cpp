#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "recseg/geom.hpp"

using namespace recseg;

namespace {

PointCloud cloud_of(std::vector<Vec3> pts) {
  std::vector<Vec3> n(pts.size(), Vec3::UnitZ());
  return PointCloud(std::move(pts), std::move(n));
}

PointCloud random_cloud(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> U(-scale, scale);
  std::vector<Vec3> p, q;
  for (std::size_t i = 0; i < n; ++i) {
    p.emplace_back(U(rng), U(rng), U(rng));
    q.emplace_back(U(rng), U(rng), U(rng) + 2.0);
  }
  return PointCloud(p, q);
}

void expect_near(const Vec3& a, const Vec3& b, double tol) { EXPECT_LT((a - b).norm(), tol) << a.transpose() << " vs " << b.transpose(); }

}  // namespace

TEST(PointCloud, ConstructionNormalizesNormalsAndIndexes) {
  PointCloud c({Vec3(0, 0, 0), Vec3(1, 0, 0)}, {Vec3(0, 0, 3), Vec3(2, 2, 0)});
  for (const auto& n : c.normals) EXPECT_NEAR(n.norm(), 1.0, 1e-12);
  EXPECT_EQ(c.orig_index, (std::vector<std::int64_t>{0, 1}));
  EXPECT_THROW(PointCloud({Vec3(0, 0, 0)}, {Vec3(0, 0, 0)}), InvalidArgument);
  EXPECT_THROW(PointCloud({Vec3(0, 0, 0)}, {}), InvalidArgument);
}

TEST(NormalizeCloud, TwoPointExample) {
  auto r = normalize_cloud(cloud_of({Vec3(1, 1, 1), Vec3(3, 1, 1)}));
  expect_near(r.cloud.positions[0], Vec3(-1, 0, 0), 1e-15);
  expect_near(r.cloud.positions[1], Vec3(1, 0, 0), 1e-15);
  expect_near(r.center, Vec3(2, 1, 1), 1e-15);
  EXPECT_DOUBLE_EQ(r.scale, 1.0);
}

TEST(NormalizeCloud, AlreadyNormalizedIsIdentity) {
  auto c = cloud_of({Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 0.5, 0), Vec3(0, -0.5, 0)});
  auto r = normalize_cloud(c);
  for (std::size_t i = 0; i < c.size(); ++i) expect_near(r.cloud.positions[i], c.positions[i], 1e-15);
  expect_near(r.center, Vec3::Zero(), 1e-15);
  EXPECT_DOUBLE_EQ(r.scale, 1.0);
}

TEST(NormalizeCloud, RandomCloudStatisticsRecomputed) {
  std::mt19937_64 rng(5);
  auto r = normalize_cloud(random_cloud(100, rng, 3.0));
  Vec3 mean = Vec3::Zero();
  double radius = 0;
  for (const auto& p : r.cloud.positions) {
    mean += p;
    radius = std::max(radius, p.norm());
  }
  EXPECT_LT((mean / 100.0).norm(), 1e-6);
  EXPECT_NEAR(radius, 1.0, 1e-12);
}

TEST(NormalizeCloud, IdempotentAndNormalsUntouched) {
  std::mt19937_64 rng(6);
  auto c = random_cloud(64, rng, 2.0);
  auto once = normalize_cloud(c);
  auto twice = normalize_cloud(once.cloud);
  for (std::size_t i = 0; i < c.size(); ++i) {
    expect_near(once.cloud.positions[i], twice.cloud.positions[i], 1e-12);
    EXPECT_EQ(once.cloud.normals[i], c.normals[i]);
  }
  EXPECT_THROW(normalize_cloud(PointCloud{}), InvalidArgument);
}

TEST(ApplySymmetry, ReflectionExample) {
  SymmetrySpec s{SymmetryKind::Reflective, Vec3::Zero(), Vec3::UnitX(), 2, 0.0};
  auto out = apply_symmetry(cloud_of({Vec3(1, 0, 0)}), s);
  ASSERT_EQ(out.size(), 2u);
  expect_near(out[0].positions[0], Vec3(1, 0, 0), 1e-15);
  expect_near(out[1].positions[0], Vec3(-1, 0, 0), 1e-15);
}

TEST(ApplySymmetry, QuarterTurns) {
  SymmetrySpec s{SymmetryKind::Rotational, Vec3::Zero(), Vec3::UnitZ(), 4, 0.0};
  auto out = apply_symmetry(cloud_of({Vec3(1, 0, 0)}), s);
  ASSERT_EQ(out.size(), 4u);
  const Vec3 expected[] = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(-1, 0, 0), Vec3(0, -1, 0)};
  for (int k = 0; k < 4; ++k) expect_near(out[static_cast<std::size_t>(k)].positions[0], expected[k], 1e-12);
}

TEST(ApplySymmetry, TranslationProgression) {
  SymmetrySpec s{SymmetryKind::Translational, Vec3::Zero(), Vec3::UnitZ(), 3, 0.5};
  auto out = apply_symmetry(cloud_of({Vec3(0, 0, 0)}), s);
  ASSERT_EQ(out.size(), 3u);
  for (int k = 0; k < 3; ++k) expect_near(out[static_cast<std::size_t>(k)].positions[0], Vec3(0, 0, 0.5 * k), 1e-15);
}

TEST(ApplySymmetry, InvalidSpecsRejected) {
  auto g = cloud_of({Vec3(1, 0, 0)});
  EXPECT_THROW(apply_symmetry(g, SymmetrySpec{SymmetryKind::Rotational, Vec3::Zero(), Vec3::Zero(), 3, 0.0}),
               InvalidArgument);
  EXPECT_THROW(apply_symmetry(g, SymmetrySpec{SymmetryKind::Rotational, Vec3::Zero(), Vec3::UnitZ(), 1, 0.0}),
               InvalidArgument);
  EXPECT_THROW(apply_symmetry(g, SymmetrySpec{SymmetryKind::Reflective, Vec3::Zero(), Vec3::UnitX(), 3, 0.0}),
               InvalidArgument);
  EXPECT_THROW(apply_symmetry(g, SymmetrySpec{SymmetryKind::Translational, Vec3::Zero(), Vec3::UnitX(), 3, 0.0}),
               InvalidArgument);
  EXPECT_THROW(apply_symmetry(PointCloud{}, SymmetrySpec{}), InvalidArgument);
}

TEST(ApplySymmetry, NormalsFollowTheLinearPart) {
  SymmetrySpec s{SymmetryKind::Reflective, Vec3(0.3, 0, 0), Vec3::UnitX(), 2, 0.0};
  PointCloud g({Vec3(1, 0, 0)}, {Vec3(1, 1, 0)});
  auto out = apply_symmetry(g, s);
  expect_near(out[1].normals[0], Vec3(-1, 1, 0).normalized(), 1e-12);
  expect_near(out[1].positions[0], Vec3(-0.4, 0, 0), 1e-12);
}

class SymmetryProperties : public ::testing::TestWithParam<int> {};

TEST_P(SymmetryProperties, ReflectTwiceRotateFoldTimesIsometry) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
  std::uniform_real_distribution<double> U(-1, 1);
  auto c = random_cloud(30, rng);
  const Vec3 anchor(U(rng), U(rng), U(rng));
  const Vec3 dir = Vec3(U(rng), U(rng), U(rng)).normalized();

  SymmetrySpec refl{SymmetryKind::Reflective, anchor, dir, 2, 0.0};
  auto back = transform_cloud(transform_cloud(c, symmetry_map(refl, 1)), symmetry_map(refl, 1));
  for (std::size_t i = 0; i < c.size(); ++i) expect_near(back.positions[i], c.positions[i], 1e-9);

  const int fold = 2 + GetParam() % 7;
  SymmetrySpec rot{SymmetryKind::Rotational, anchor, dir, fold, 0.0};
  PointCloud r = c;
  for (int k = 0; k < fold; ++k) r = transform_cloud(r, symmetry_map(rot, 1));
  for (std::size_t i = 0; i < c.size(); ++i) {
    expect_near(r.positions[i], c.positions[i], 1e-9);
    expect_near(r.normals[i], c.normals[i], 1e-9);
  }

  SymmetrySpec tr{SymmetryKind::Translational, anchor, dir, 4, 0.3};
  for (const auto& spec : {refl, rot, tr}) {
    for (const auto& copy : apply_symmetry(c, spec)) {
      for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = i + 1; j < c.size(); ++j)
          EXPECT_NEAR((copy.positions[i] - copy.positions[j]).norm(), (c.positions[i] - c.positions[j]).norm(), 1e-9);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Random, SymmetryProperties, ::testing::Range(0, 8));

TEST(Canonicalize, FirstNonzeroComponentPositive) {
  SymmetrySpec s{SymmetryKind::Reflective, Vec3(0.5, 1, 1), Vec3(-1, 0, 0), 2, 0.0};
  auto c = canonicalize(s);
  expect_near(c.direction, Vec3(1, 0, 0), 1e-15);
  // the anchor moves to the plane point nearest the origin
  expect_near(c.anchor, Vec3(0.5, 0, 0), 1e-15);
  EXPECT_EQ(canonical_sign(Vec3(0, -2, 1)), Vec3(0, 2, -1));
}

TEST(MinSetDistance, Examples) {
  auto a = cloud_of({Vec3(0, 0, 0)});
  EXPECT_DOUBLE_EQ(min_set_distance(a, a), 0.0);
  EXPECT_DOUBLE_EQ(min_set_distance(a, cloud_of({Vec3(0, 0, 2)})), 2.0);
  EXPECT_THROW(min_set_distance(a, PointCloud{}), InvalidArgument);
}

TEST(MinSetDistance, MatchesExhaustivePairs) {
  std::mt19937_64 rng(21);
  auto a = random_cloud(50, rng);
  auto b = random_cloud(50, rng);
  for (auto& p : b.positions) p += Vec3(1.5, 0, 0);
  double best = 1e300;
  for (const auto& p : a.positions)
    for (const auto& q : b.positions) best = std::min(best, (p - q).norm());
  EXPECT_DOUBLE_EQ(min_set_distance(a, b), best);
}

TEST(NnLabelTransfer, Examples) {
  std::mt19937_64 rng(3);
  auto src = random_cloud(20, rng);
  std::vector<int> labels(20);
  for (int i = 0; i < 20; ++i) labels[static_cast<std::size_t>(i)] = i % 4;
  EXPECT_EQ(nn_label_transfer<int>(src.positions, src.positions, labels), labels);

  std::vector<int> one(20, 7);
  auto tgt = random_cloud(33, rng);
  for (int l : nn_label_transfer<int>(tgt.positions, src.positions, one)) EXPECT_EQ(l, 7);

  auto got = nn_label_transfer<int>(tgt.positions, src.positions, labels);
  for (std::size_t i = 0; i < tgt.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < src.size(); ++j)
      if ((tgt.positions[i] - src.positions[j]).norm() < (tgt.positions[i] - src.positions[best]).norm()) best = j;
    EXPECT_EQ(got[i], labels[best]);
  }
  EXPECT_THROW(nn_label_transfer<int>(tgt.positions, std::span<const Vec3>{}, std::span<const int>{}), InvalidArgument);
}
