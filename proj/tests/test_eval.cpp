#include <gtest/gtest.h>

#include <random>

#include "recseg/eval.hpp"

using namespace recseg;
using namespace recseg::eval;

namespace {

PointSet range(std::int64_t a, std::int64_t b) {
  PointSet s;
  for (auto i = a; i < b; ++i) s.push_back(i);
  return s;
}

// P1 overlaps G1 with IoU 0.8; P2 has IoU 0.1 with G2 at most.
void hand_case(std::vector<Prediction>& preds, std::vector<GroundTruth>& gts) {
  gts = {{0, 0, range(0, 10)}, {0, 1, range(100, 110)}};
  PointSet p1 = range(0, 8);
  preds = {{0, 0, 0.9, p1}, {0, 1, 0.5, {100, 200, 201, 202, 203, 204, 205, 206, 207, 208}}};
}

}  // namespace

TEST(InstanceIou, Examples) {
  EXPECT_DOUBLE_EQ(instance_iou({1, 2, 3}, {1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(instance_iou({1, 2}, {3, 4}), 0.0);
  EXPECT_DOUBLE_EQ(instance_iou({1, 2}, {2, 3}), 1.0 / 3.0);
  EXPECT_THROW(instance_iou({}, {}), InvalidArgument);
}

TEST(AveragePrecision, HandCases) {
  std::vector<GroundTruth> gts{{0, 0, {1, 2}}, {0, 1, {3, 4}}, {1, 0, {1, 2, 3}}};
  std::vector<Prediction> perfect{{0, 0, 0.5, {1, 2}}, {0, 1, 0.7, {3, 4}}, {1, 0, 0.2, {1, 2, 3}}};
  EXPECT_DOUBLE_EQ(average_precision(perfect, gts, 0.5).ap, 1.0);
  EXPECT_DOUBLE_EQ(ap_bruteforce_oracle(perfect, gts, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(average_precision({}, gts, 0.5).ap, 0.0);
  EXPECT_DOUBLE_EQ(ap_bruteforce_oracle({}, gts, 0.5), 0.0);

  std::vector<Prediction> preds;
  std::vector<GroundTruth> g2;
  hand_case(preds, g2);
  EXPECT_DOUBLE_EQ(instance_iou(preds[0].points, g2[0].points), 0.8);
  EXPECT_LE(instance_iou(preds[1].points, g2[1].points), 0.1);
  const auto r = average_precision(preds, g2, 0.25);
  EXPECT_DOUBLE_EQ(r.ap, 0.5);
  EXPECT_EQ(r.tp, 1u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_DOUBLE_EQ(ap_bruteforce_oracle(preds, g2, 0.25), 0.5);
  EXPECT_THROW(average_precision(preds, {}, 0.25), InvalidArgument);
}

TEST(AveragePrecision, MatchesOracleOnRandomInstances) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<int> n_shapes(1, 2), n_items(1, 4), n_pred(0, 8), pt(0, 11);
    std::vector<GroundTruth> gts;
    const int shapes = n_shapes(rng);
    for (int s = 0; s < shapes; ++s) {
      const int k = n_items(rng);
      for (int g = 0; g < k; ++g) gts.push_back({static_cast<std::size_t>(s), g, range(g * 3, g * 3 + 3)});
    }
    std::vector<Prediction> preds;
    const int np = n_pred(rng);
    std::uniform_real_distribution<double> conf(0, 1);
    for (int p = 0; p < np; ++p) {
      std::set<std::int64_t> pts;
      const int size = 1 + pt(rng) % 5;
      const int start = pt(rng);
      for (int i = 0; i < size; ++i) pts.insert(start + i);
      const double c = trial % 3 == 0 ? 0.5 : std::round(conf(rng) * 4) / 4;  // forces ties
      preds.push_back({static_cast<std::size_t>(p % shapes), p, c, PointSet(pts.begin(), pts.end())});
    }
    for (double thr : {0.25, 0.5}) {
      const double a = average_precision(preds, gts, thr).ap;
      EXPECT_EQ(a, ap_bruteforce_oracle(preds, gts, thr)) << "trial " << trial;
      auto shuffled = preds;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      EXPECT_EQ(average_precision(shuffled, gts, thr).ap, a);
    }
  }
}

TEST(SemanticIou, Examples) {
  const std::vector<int> gt{0, 0, 1, 1};
  const auto same = partwise_semantic_iou(gt, gt, {0, 1});
  EXPECT_EQ(same.per_class, (std::vector<double>{1.0, 1.0}));
  const auto wrong = partwise_semantic_iou({1, 1, 0, 0}, gt, {0, 1});
  EXPECT_DOUBLE_EQ(wrong.mean, 0.0);
  const auto half = partwise_semantic_iou({0, 1, 1, 0}, gt, {0, 1});
  EXPECT_DOUBLE_EQ(half.per_class[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(half.per_class[1], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(half.mean, 1.0 / 3.0);
  // a class absent from both counts as perfectly segmented
  EXPECT_DOUBLE_EQ(partwise_semantic_iou(gt, gt, {0, 1, 5}).per_class[2], 1.0);
  EXPECT_THROW(partwise_semantic_iou({0}, gt, {0}), InvalidArgument);
  const auto agg = aggregate_semantic_iou({same, half});
  EXPECT_DOUBLE_EQ(agg.category_mean, (1.0 + 1.0 / 3.0) / 2.0);
}

TEST(LeafLabels, MajorityVote) {
  model::SegmentationResult r;
  r.instance_id = {0, 0, 0, 1, 1};
  r.parts.resize(2);
  const auto [hits, n] = leaf_label_hits(r, {4, 2}, {4, 4, 2, 3, 3});
  EXPECT_EQ(hits, 1u);
  EXPECT_EQ(n, 2u);
}

TEST(Evaluate, UntrainedModelRuns) {
  std::vector<train::Sample> samples;
  for (std::uint64_t s = 0; s < 2; ++s) {
    samples.push_back(train::make_sample(data::generate_shape("chair", s, 128)));
    samples.push_back(train::make_sample(data::generate_shape("table", s, 128)));
  }
  nets::NetDims d = nets::NetDims::reduced();
  d.semantic_classes = 7;
  nets::ModelParams<float> p(d, 1);
  const auto rep = evaluate(samples, p, nets::Variant::Full, model::InferenceConfig{});
  ASSERT_EQ(rep.categories.size(), 2u);
  EXPECT_GE(rep.mean_ap25, 0.0);
  EXPECT_LE(rep.mean_ap25, 1.0);
  EXPECT_GE(rep.mean_ap25, rep.mean_ap50);
  const std::string csv = report_csv({rep});
  EXPECT_EQ(csv.rfind("category,variant,AP25,AP50\n", 0), 0u);
  EXPECT_NE(csv.find("mean,full,"), std::string::npos);
  EXPECT_EQ(report_json(rep)["categories"].size(), 2u);
}
