#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recseg/train.hpp"

namespace recseg::eval {

using PointSet = std::vector<std::int64_t>;  // ascending ids over one root cloud

inline double instance_iou(const PointSet& a, const PointSet& b) {
  if (a.empty() && b.empty()) throw InvalidArgument("instance_iou: both sets empty");
  std::size_t inter = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) ++i;
    else if (*j < *i) ++j;
    else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

struct Prediction {
  std::size_t shape = 0;  // index into the shape list the gts are grouped by
  int id = 0;
  double confidence = 0;
  PointSet points;
};

struct GroundTruth {
  std::size_t shape = 0;
  int id = 0;
  PointSet points;
};

struct MatchLog {
  std::size_t shape;
  int pred_id;
  int gt_id;  // -1 for a false positive
  double iou;
};

struct APResult {
  double ap = 0;
  std::size_t tp = 0, fp = 0, n_gt = 0;
  std::vector<MatchLog> matches;
};

namespace detail {

inline bool ranks_before(const Prediction& a, const Prediction& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.shape != b.shape) return a.shape < b.shape;
  return a.id < b.id;
}

// All-point interpolated area under the precision/recall staircase given the
// cumulative TP count after each ranked prediction.
inline double staircase_area(const std::vector<std::size_t>& tp_after, std::size_t n_gt) {
  const std::size_t n = tp_after.size();
  std::vector<double> precision(n), recall(n);
  for (std::size_t k = 0; k < n; ++k) {
    precision[k] = static_cast<double>(tp_after[k]) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp_after[k]) / static_cast<double>(n_gt);
  }
  double ap = 0;
  double prev_recall = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (recall[k] == prev_recall) continue;
    double envelope = 0;
    for (std::size_t j = k; j < n; ++j) envelope = std::max(envelope, precision[j]);
    ap += (recall[k] - prev_recall) * envelope;
    prev_recall = recall[k];
  }
  return ap;
}

}  // namespace detail

// Confidence-ranked greedy matching pooled over every shape in the lists; a
// prediction only competes for gts of its own shape.
inline APResult average_precision(std::vector<Prediction> preds, const std::vector<GroundTruth>& gts,
                                  double iou_threshold) {
  if (gts.empty()) throw InvalidArgument("undefined AP: no ground-truth parts");
  std::stable_sort(preds.begin(), preds.end(), detail::ranks_before);
  std::map<std::size_t, std::vector<std::size_t>> by_shape;
  for (std::size_t g = 0; g < gts.size(); ++g) by_shape[gts[g].shape].push_back(g);
  std::vector<bool> taken(gts.size(), false);

  APResult res;
  res.n_gt = gts.size();
  std::vector<std::size_t> tp_after;
  for (const auto& p : preds) {
    double best = -1;
    std::ptrdiff_t best_g = -1;
    if (auto it = by_shape.find(p.shape); it != by_shape.end()) {
      for (std::size_t g : it->second) {
        if (taken[g]) continue;
        const double iou = instance_iou(p.points, gts[g].points);
        if (iou > best) {
          best = iou;
          best_g = static_cast<std::ptrdiff_t>(g);
        }
      }
    }
    if (best_g >= 0 && best > iou_threshold) {
      taken[static_cast<std::size_t>(best_g)] = true;
      ++res.tp;
      res.matches.push_back({p.shape, p.id, gts[static_cast<std::size_t>(best_g)].id, best});
    } else {
      ++res.fp;
      res.matches.push_back({p.shape, p.id, -1, std::max(best, 0.0)});
    }
    tp_after.push_back(res.tp);
  }
  res.ap = detail::staircase_area(tp_after, gts.size());
  return res;
}

inline constexpr std::size_t kOracleMaxPredictions = 8;

// Independent route to the same number: the rank of each prediction is found
// by counting, every prefix of the ranking is re-matched from scratch, and the
// per-prefix TP counts feed the same staircase integral.
inline double ap_bruteforce_oracle(const std::vector<Prediction>& preds, const std::vector<GroundTruth>& gts,
                                   double iou_threshold) {
  if (preds.size() > kOracleMaxPredictions) throw InvalidArgument("oracle limited to 8 predictions");
  if (gts.empty()) throw InvalidArgument("undefined AP: no ground-truth parts");
  const std::size_t n = preds.size();
  std::vector<std::size_t> at_rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && (detail::ranks_before(preds[j], preds[i]) ||
                     (!detail::ranks_before(preds[i], preds[j]) && j < i)))
        ++rank;
    at_rank[rank] = i;
  }
  std::vector<std::size_t> tp_after(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<bool> taken(gts.size(), false);
    std::size_t tp = 0;
    for (std::size_t r = 0; r <= k; ++r) {
      const Prediction& p = preds[at_rank[r]];
      double best = -1;
      std::size_t best_g = gts.size();
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (taken[g] || gts[g].shape != p.shape) continue;
        const double iou = instance_iou(p.points, gts[g].points);
        if (iou > best) {
          best = iou;
          best_g = g;
        }
      }
      if (best_g < gts.size() && best > iou_threshold) {
        taken[best_g] = true;
        ++tp;
      }
    }
    tp_after[k] = tp;
  }
  return detail::staircase_area(tp_after, gts.size());
}

// ---- semantic IoU ------------------------------------------------------------

struct ShapeSemIoU {
  std::vector<double> per_class;  // aligned with the category's class list
  double mean = 0;
};

inline ShapeSemIoU partwise_semantic_iou(const std::vector<int>& pred, const std::vector<int>& gt,
                                         const std::vector<int>& classes) {
  if (pred.size() != gt.size()) throw InvalidArgument("semantic IoU: label length mismatch");
  ShapeSemIoU r;
  for (int c : classes) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool a = pred[i] == c, b = gt[i] == c;
      inter += a && b;
      uni += a || b;
    }
    r.per_class.push_back(uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni));
  }
  r.mean = r.per_class.empty() ? 0.0
                               : std::accumulate(r.per_class.begin(), r.per_class.end(), 0.0) /
                                     static_cast<double>(r.per_class.size());
  return r;
}

struct SemIoUResult {
  std::vector<double> per_class;  // mean over shapes
  std::vector<double> per_shape;
  double category_mean = 0;
};

inline SemIoUResult aggregate_semantic_iou(const std::vector<ShapeSemIoU>& shapes) {
  SemIoUResult r;
  if (shapes.empty()) return r;
  r.per_class.assign(shapes.front().per_class.size(), 0.0);
  for (const auto& s : shapes) {
    r.per_shape.push_back(s.mean);
    for (std::size_t c = 0; c < s.per_class.size(); ++c) r.per_class[c] += s.per_class[c];
  }
  for (double& v : r.per_class) v /= static_cast<double>(shapes.size());
  r.category_mean = std::accumulate(r.per_shape.begin(), r.per_shape.end(), 0.0) / static_cast<double>(shapes.size());
  return r;
}

// Fraction of predicted parts whose class equals the majority ground-truth
// class of the points they cover.
inline std::pair<std::size_t, std::size_t> leaf_label_hits(const model::SegmentationResult& res,
                                                            const std::vector<int>& part_class,
                                                            const std::vector<int>& gt_point_class) {
  std::size_t hits = 0;
  for (std::size_t j = 0; j < res.parts.size(); ++j) {
    std::map<int, std::size_t> votes;
    for (std::size_t i = 0; i < res.instance_id.size(); ++i)
      if (res.instance_id[i] == static_cast<int>(j)) ++votes[gt_point_class[i]];
    int majority = -1;
    std::size_t most = 0;
    for (const auto& [c, n] : votes)
      if (n > most) {
        most = n;
        majority = c;
      }
    hits += part_class[j] == majority;
  }
  return {hits, res.parts.size()};
}

// ---- end-to-end evaluation ----------------------------------------------------

struct CategoryScores {
  std::string category;
  double ap25 = 0, ap50 = 0;
  double sem_iou = 0;
  std::size_t shapes = 0;
  APResult ap25_detail, ap50_detail;
};

struct EvalReport {
  std::string variant;
  std::vector<CategoryScores> categories;
  double mean_ap25 = 0, mean_ap50 = 0;
  double leaf_label_accuracy = 0;  // meaningful only with a semantic head
  std::size_t leaf_parts = 0;
  double mean_parts = 0;
};

inline std::vector<GroundTruth> ground_truth_parts(const train::Sample& s, std::size_t shape_index) {
  std::map<int, PointSet> parts;
  for (std::size_t i = 0; i < s.instance_label.size(); ++i) parts[s.instance_label[i]].push_back(s.cloud.orig_index[i]);
  std::vector<GroundTruth> out;
  for (auto& [id, pts] : parts) {
    std::sort(pts.begin(), pts.end());
    out.push_back({shape_index, id, std::move(pts)});
  }
  return out;
}

inline std::vector<Prediction> predicted_parts(const model::SegmentationResult& r, std::size_t shape_index) {
  std::vector<Prediction> out;
  for (const auto& p : r.parts) out.push_back({shape_index, p.id, p.confidence, p.point_ids});
  return out;
}

template <class T>
EvalReport evaluate(const std::vector<train::Sample>& samples, nets::ModelParams<T>& params, nets::Variant variant,
                    const model::InferenceConfig& icfg) {
  EvalReport rep;
  rep.variant = nets::to_string(variant);
  const nets::Wiring wiring = nets::build_ablation(variant);
  const bool semantic = params.dims.semantic_classes > 0;
  std::map<std::string, std::vector<Prediction>> preds;
  std::map<std::string, std::vector<GroundTruth>> gts;
  std::map<std::string, std::vector<ShapeSemIoU>> sem;
  std::map<std::string, std::size_t> counts;
  std::size_t hits = 0, total_parts = 0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& smp = samples[s];
    const auto res = model::infer_segment(params, smp.cloud, icfg, wiring);
    auto p = predicted_parts(res, s);
    preds[smp.category].insert(preds[smp.category].end(), p.begin(), p.end());
    auto g = ground_truth_parts(smp, s);
    gts[smp.category].insert(gts[smp.category].end(), g.begin(), g.end());
    ++counts[smp.category];
    total_parts += res.parts.size();
    if (semantic) {
      const auto part_class = model::predict_leaf_semantics(res, params, params.dims.semantic_classes);
      std::vector<int> gt_point_class(smp.instance_label.size());
      for (std::size_t i = 0; i < gt_point_class.size(); ++i)
        gt_point_class[i] = smp.part_semantics.at(static_cast<std::size_t>(smp.instance_label[i]));
      const auto [h, n] = leaf_label_hits(res, part_class, gt_point_class);
      hits += h;
      rep.leaf_parts += n;
      sem[smp.category].push_back(partwise_semantic_iou(model::broadcast_part_labels(res, part_class), gt_point_class,
                                                        data::category_classes(smp.category)));
    }
  }
  for (const auto& [cat, g] : gts) {
    CategoryScores cs;
    cs.category = cat;
    cs.shapes = counts[cat];
    cs.ap25_detail = average_precision(preds[cat], g, 0.25);
    cs.ap50_detail = average_precision(preds[cat], g, 0.5);
    cs.ap25 = cs.ap25_detail.ap;
    cs.ap50 = cs.ap50_detail.ap;
    if (semantic) cs.sem_iou = aggregate_semantic_iou(sem[cat]).category_mean;
    rep.categories.push_back(std::move(cs));
  }
  for (const auto& c : rep.categories) {
    rep.mean_ap25 += c.ap25;
    rep.mean_ap50 += c.ap50;
  }
  if (!rep.categories.empty()) {
    rep.mean_ap25 /= static_cast<double>(rep.categories.size());
    rep.mean_ap50 /= static_cast<double>(rep.categories.size());
  }
  rep.leaf_label_accuracy = rep.leaf_parts ? static_cast<double>(hits) / static_cast<double>(rep.leaf_parts) : 0.0;
  rep.mean_parts = samples.empty() ? 0.0 : static_cast<double>(total_parts) / static_cast<double>(samples.size());
  return rep;
}

// ---- ablation harness ----------------------------------------------------------

struct AblationRun {
  EvalReport report;
  std::vector<train::IterLog> curve;
  double train_seconds = 0;
};

struct AblationSuite {
  std::vector<AblationRun> runs;
};

// Trains every variant from the same initial parameters on the same data and
// seed, then evaluates on the test samples.
inline AblationSuite run_ablation_suite(const std::vector<train::Sample>& train_set,
                                        const std::vector<train::Sample>& test_set,
                                        const std::vector<nets::Variant>& variants, const nets::NetDims& dims,
                                        std::uint64_t init_seed, train::TrainConfig tcfg,
                                        const model::InferenceConfig& icfg,
                                        const std::function<void(const std::string&)>& progress = {}) {
  AblationSuite suite;
  for (auto v : variants) {
    nets::ModelParams<float> params(dims, init_seed);
    tcfg.variant = v;
    const auto t0 = std::chrono::steady_clock::now();
    auto tr = train::train(train_set, params, tcfg, [&](const train::IterLog& l) {
      if (progress && l.iter % 50 == 0) {
        std::ostringstream ss;
        ss << nets::to_string(v) << " iter " << l.iter << " class " << l.class_loss << " seg " << l.seg_loss
           << " sym " << l.sym_loss;
        progress(ss.str());
      }
      return true;
    });
    AblationRun run;
    run.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.curve = std::move(tr.curve);
    run.report = evaluate(test_set, params, v, icfg);
    if (progress) {
      std::ostringstream ss;
      ss << nets::to_string(v) << " AP25 " << run.report.mean_ap25 << " AP50 " << run.report.mean_ap50;
      progress(ss.str());
    }
    suite.runs.push_back(std::move(run));
  }
  return suite;
}

inline std::string report_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream ss;
  ss << "category,variant,AP25,AP50\n" << std::setprecision(6);
  for (const auto& r : reports) {
    for (const auto& c : r.categories) ss << c.category << ',' << r.variant << ',' << c.ap25 << ',' << c.ap50 << '\n';
    ss << "mean," << r.variant << ',' << r.mean_ap25 << ',' << r.mean_ap50 << '\n';
  }
  return ss.str();
}

inline nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json j;
  j["variant"] = r.variant;
  j["mean_ap25"] = r.mean_ap25;
  j["mean_ap50"] = r.mean_ap50;
  j["leaf_label_accuracy"] = r.leaf_label_accuracy;
  j["mean_parts"] = r.mean_parts;
  auto& cats = j["categories"] = nlohmann::json::array();
  for (const auto& c : r.categories) {
    nlohmann::json cj{{"category", c.category}, {"shapes", c.shapes}, {"ap25", c.ap25},
                      {"ap50", c.ap50},         {"semantic_iou", c.sem_iou}};
    for (const auto* d : {&c.ap25_detail, &c.ap50_detail}) {
      auto& m = cj[d == &c.ap25_detail ? "matches25" : "matches50"] = nlohmann::json::array();
      for (const auto& x : d->matches) m.push_back({x.shape, x.pred_id, x.gt_id, x.iou});
    }
    cats.push_back(std::move(cj));
  }
  return j;
}

}  // namespace recseg::eval
