#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "recseg/hierarchy.hpp"
#include "recseg/nets.hpp"

namespace recseg::model {

using ad::Matrix;
using ad::Tape;
using ad::Var;
using nets::ModelParams;
using nets::Wiring;

struct LossBreakdown {
  double class_mean = 0;
  double seg_mean = 0;
  double sym_param = 0;
  double total = 0;     // class_mean + seg_mean + lambda_sym * sym_param
  double semantic = 0;  // mean leaf label loss, 0 without a semantic head
  std::size_t n_h = 0, n_t = 0, n_s = 0, n_leaf = 0;
};

inline double combine_losses(double class_mean, double seg_mean, double sym_param, double lambda_sym) {
  return class_mean + seg_mean + lambda_sym * sym_param;
}

struct LossConfig {
  double lambda_sym = 1.0;
  bool train = false;                       // dropout on/off
  std::span<const int> part_semantics = {};  // per part id; empty skips the semantic loss
};

// Teacher-forced accuracy counters gathered along the way.
struct ForcedStats {
  std::size_t nodes = 0, nodes_correct = 0;
  std::size_t seg_points = 0, seg_correct = 0;
  std::size_t sym_nodes = 0, sym_kind_correct = 0, sym_fold_correct = 0;
  std::size_t leaves = 0, leaves_label_correct = 0;

  ForcedStats& operator+=(const ForcedStats& o) {
    nodes += o.nodes;
    nodes_correct += o.nodes_correct;
    seg_points += o.seg_points;
    seg_correct += o.seg_correct;
    sym_nodes += o.sym_nodes;
    sym_kind_correct += o.sym_kind_correct;
    sym_fold_correct += o.sym_fold_correct;
    leaves += o.leaves;
    leaves_label_correct += o.leaves_label_correct;
    return *this;
  }
  double node_accuracy() const { return nodes ? double(nodes_correct) / double(nodes) : 1.0; }
  double seg_accuracy() const { return seg_points ? double(seg_correct) / double(seg_points) : 1.0; }
  double leaf_label_accuracy() const { return leaves ? double(leaves_label_correct) / double(leaves) : 1.0; }
};

struct ForcedResult {
  Var objective;  // total + semantic; what training differentiates
  LossBreakdown loss;
  ForcedStats stats;
};

namespace detail {

template <class T>
Eigen::Index argmax_row(const Matrix<T>& m, Eigen::Index r) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c)
    if (m(r, c) > m(r, best)) best = c;
  return best;
}

template <class T>
Var sum_all(Tape<T>& t, const std::vector<Var>& xs) {
  Var acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) acc = ad::add(t, acc, xs[i]);
  return acc;
}

template <class T>
struct ForcedPass {
  Tape<T>& t;
  ModelParams<T>& p;
  const PointCloud& shape;
  const Wiring& wiring;
  const LossConfig& cfg;
  std::mt19937_64& rng;
  std::unordered_map<std::int64_t, std::size_t> rows;

  std::vector<Var> class_losses, seg_losses, sym_losses, sem_losses;
  ForcedStats stats;

  PointCloud node_cloud(const HierNode& n) const {
    std::vector<std::size_t> r;
    r.reserve(n.point_ids.size());
    for (auto id : n.point_ids) {
      auto it = rows.find(id);
      if (it == rows.end()) throw InvalidArgument("hierarchy references point " + std::to_string(id) + " not in shape");
      r.push_back(it->second);
    }
    return shape.subset(r);
  }

  void visit(const HierNode& n, std::optional<Var> rcf) {
    if (n.point_ids.empty()) throw InvalidArgument("teacher forcing reached an empty node");
    const PointCloud cloud = node_cloud(n);
    Var x = t.constant(nets::cloud_matrix<T>(cloud));
    Var psf = nets::encode_cloud(t, p, x);
    Var node = rcf ? wiring.node_feature(t, *rcf, psf) : nets::make_root_feature(t, p, psf);
    Var cls_in = rcf ? wiring.classifier_input(t, *rcf, node) : node;

    const int kind = static_cast<int>(n.kind);
    Var logits = nets::classify_node(t, p, cls_in);
    const int target[1] = {kind};
    class_losses.push_back(ad::softmax_cross_entropy(t, logits, std::span<const int>(target, 1)));
    ++stats.nodes;
    if (argmax_row(t.value(logits), 0) == kind) ++stats.nodes_correct;

    if (n.kind == NodeKind::Leaf) {
      ++stats.leaves;
      if (!cfg.part_semantics.empty() && p.dims.semantic_classes > 0) {
        const int cls = cfg.part_semantics[static_cast<std::size_t>(n.part_ids.at(0))];
        Var sl = nets::predict_semantic_label(t, p, node);
        const int st[1] = {cls};
        sem_losses.push_back(ad::softmax_cross_entropy(t, sl, std::span<const int>(st, 1)));
        if (argmax_row(t.value(sl), 0) == cls) ++stats.leaves_label_correct;
      }
      return;
    }

    // Binary labels: 0 for the left child (or generator), 1 for the rest.
    const auto& first = n.children.at(0).point_ids;
    std::vector<int> labels(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
      labels[i] = std::binary_search(first.begin(), first.end(), cloud.orig_index[i]) ? 0 : 1;
    Var per_point = nets::encode_points(t, p, x);
    Var seg = nets::segment_points(t, p, per_point, node, cfg.train, rng);
    seg_losses.push_back(ad::softmax_cross_entropy(t, seg, std::span<const int>(labels)));
    const auto& sv = t.value(seg);
    for (Eigen::Index i = 0; i < sv.rows(); ++i)
      if (argmax_row(sv, i) == labels[static_cast<std::size_t>(i)]) ++stats.seg_correct;
    stats.seg_points += cloud.size();

    std::optional<Var> left, right;
    if (wiring.uses_context()) {
      auto [l, r] = nets::decode_children(t, p, node);
      left = l;
      right = r;
    } else {
      // the context input is ignored by this wiring; any placeholder works
      left = right = psf;
    }

    if (n.kind == NodeKind::Symmetry) {
      const SymmetrySpec& spec = n.symmetry.value();
      Var row = nets::predict_symmetry(t, p, node);
      Var kind_logits = ad::slice_cols(t, row, 0, nets::kSymmetryKinds);
      const int kt[1] = {static_cast<int>(spec.kind)};
      Var kl = ad::softmax_cross_entropy(t, kind_logits, std::span<const int>(kt, 1));
      auto [target, mask] = nets::symmetry_target<T>(spec);
      Var pl = ad::masked_mse(t, ad::slice_cols(t, row, nets::kSymmetryKinds, nets::kSymmetryParams), target, mask);
      sym_losses.push_back(ad::add(t, kl, pl));
      ++stats.sym_nodes;
      const SymmetrySpec decoded = nets::decode_symmetry<T>(t.value(row));
      if (decoded.kind == spec.kind) ++stats.sym_kind_correct;
      if (decoded.fold == spec.fold) ++stats.sym_fold_correct;
      visit(n.children[0], left);
      return;
    }
    visit(n.children[0], left);
    visit(n.children[1], right);
  }
};

template <class T>
Var mean_of(Tape<T>& t, const std::vector<Var>& xs) {
  if (xs.empty()) return t.constant(Matrix<T>::Zero(1, 1));
  return ad::scale(t, sum_all(t, xs), T(1) / static_cast<T>(xs.size()));
}

}  // namespace detail

// Loss over a ground-truth hierarchy with teacher forcing. H and T are the
// nodes actually visited: under a symmetry node only the generator subtree is
// descended, so copies contribute through the symmetry node's split alone.
template <class T>
ForcedResult teacher_forced_loss(Tape<T>& t, ModelParams<T>& p, const PointCloud& shape, const Hierarchy& gt,
                                 const Wiring& wiring, const LossConfig& cfg, std::mt19937_64& rng) {
  detail::ForcedPass<T> pass{t, p, shape, wiring, cfg, rng, recseg::detail::row_of(shape), {}, {}, {}, {}, {}};
  pass.visit(gt.root, std::nullopt);

  Var class_mean = detail::mean_of(t, pass.class_losses);
  Var seg_mean = detail::mean_of(t, pass.seg_losses);
  Var sym_mean = detail::mean_of(t, pass.sym_losses);
  Var sem_mean = detail::mean_of(t, pass.sem_losses);
  Var total = ad::add(t, ad::add(t, class_mean, seg_mean), ad::scale(t, sym_mean, static_cast<T>(cfg.lambda_sym)));

  ForcedResult r;
  r.objective = ad::add(t, total, sem_mean);
  r.loss.class_mean = static_cast<double>(t.value(class_mean)(0, 0));
  r.loss.seg_mean = static_cast<double>(t.value(seg_mean)(0, 0));
  r.loss.sym_param = static_cast<double>(t.value(sym_mean)(0, 0));
  r.loss.semantic = static_cast<double>(t.value(sem_mean)(0, 0));
  r.loss.total = static_cast<double>(t.value(total)(0, 0));
  r.loss.n_h = pass.class_losses.size();
  r.loss.n_t = pass.seg_losses.size();
  r.loss.n_s = pass.sym_losses.size();
  r.loss.n_leaf = pass.stats.leaves;
  r.stats = pass.stats;
  return r;
}

// ---- inference -----------------------------------------------------------------

struct InferenceConfig {
  int max_depth = 12;
  int min_points = 10;
  double lambda_sym = 1.0;

  void check() const {
    if (max_depth < 1) throw InvalidArgument("max_depth must be >= 1");
    if (min_points < 2) throw InvalidArgument("min_points must be >= 2");
  }
};

struct PredictedPart {
  int id = 0;
  std::vector<std::int64_t> point_ids;  // orig_index values, ascending
  double confidence = 0;
  Matrix<double> leaf_feature;  // node feature of the leaf (the generator's, for copies)
};

struct SegmentationResult {
  std::vector<int> instance_id;  // per root row
  std::vector<PredictedPart> parts;
  Hierarchy tree;
  int max_depth_reached = 0;
};

namespace detail {

struct LeafOut {
  std::vector<std::size_t> rows;
  double confidence;
  Matrix<double> feature;
};

template <class T>
struct InferPass {
  ModelParams<T>& p;
  const PointCloud& shape;
  const Wiring& wiring;
  const InferenceConfig& cfg;
  int deepest = 0;

  static void require_finite(const Matrix<T>& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string("non-finite ") + what + " output");
  }

  // Returns the predicted subtree; appends the leaves (in the node's local
  // emission order) to out.
  HierNode visit(const std::vector<std::size_t>& rows, const std::optional<Matrix<T>>& rcf, int depth, double conf,
                 std::vector<LeafOut>& out) {
    deepest = std::max(deepest, depth);
    const PointCloud cloud = shape.subset(rows);
    Tape<T> t(false);
    Var x = t.constant(nets::cloud_matrix<T>(cloud));
    Var psf = nets::encode_cloud(t, p, x);
    std::optional<Var> rcf_var;
    if (rcf) rcf_var = t.constant(*rcf);
    Var node = rcf_var ? wiring.node_feature(t, *rcf_var, psf) : nets::make_root_feature(t, p, psf);
    Var cls_in = rcf_var ? wiring.classifier_input(t, *rcf_var, node) : node;
    const Matrix<T> logits = t.value(nets::classify_node(t, p, cls_in));
    require_finite(logits, "classifier");
    const Matrix<T> probs = ad::softmax_rows<T>(logits);
    const Eigen::Index kind = argmax_row(logits, 0);
    const double path_conf = conf * static_cast<double>(probs(0, kind));
    const Matrix<double> node_value = t.value(node).template cast<double>();

    auto emit_leaf = [&]() {
      HierNode leaf;
      leaf.kind = NodeKind::Leaf;
      out.push_back(LeafOut{rows, std::clamp(path_conf, 0.0, 1.0), node_value});
      leaf.part_ids = {static_cast<int>(out.size() - 1)};
      return leaf;
    };

    const bool forced_stop = static_cast<int>(cloud.size()) < cfg.min_points || depth >= cfg.max_depth;
    if (kind == static_cast<Eigen::Index>(NodeKind::Leaf) || forced_stop) return emit_leaf();

    std::mt19937_64 unused_rng(0);
    Var per_point = nets::encode_points(t, p, x);
    const Matrix<T> seg = t.value(nets::segment_points(t, p, per_point, node, false, unused_rng));
    require_finite(seg, "segmentation");
    std::vector<std::size_t> first, second;
    for (Eigen::Index i = 0; i < seg.rows(); ++i) (argmax_row(seg, i) == 0 ? first : second).push_back(rows[i]);
    if (first.empty() || second.empty()) return emit_leaf();

    std::optional<Matrix<T>> left_ctx, right_ctx;
    if (wiring.uses_context()) {
      auto [l, r] = nets::decode_children(t, p, node);
      left_ctx = t.value(l);
      right_ctx = t.value(r);
    } else {
      left_ctx = right_ctx = t.value(psf);
    }

    // A symmetry split whose generator would sit at the depth cap is taken as
    // a plain two-way split, so max_depth bounds the part count by 2^max_depth.
    const bool as_pair = kind == static_cast<Eigen::Index>(NodeKind::Symmetry) && depth + 1 >= cfg.max_depth;
    if (kind == static_cast<Eigen::Index>(NodeKind::Adjacency) || as_pair) {
      HierNode n;
      n.kind = NodeKind::Adjacency;
      n.children.push_back(visit(first, left_ctx, depth + 1, path_conf, out));
      n.children.push_back(visit(second, right_ctx, depth + 1, path_conf, out));
      n.part_ids = n.children[0].part_ids;
      n.part_ids.insert(n.part_ids.end(), n.children[1].part_ids.begin(), n.children[1].part_ids.end());
      return n;
    }

    // Symmetry: recurse into the generator, then hand every other point to the
    // nearest transformed copy of a generator leaf.
    const Matrix<T> row = t.value(nets::predict_symmetry(t, p, node));
    require_finite(row, "symmetry head");
    const SymmetrySpec spec = nets::decode_symmetry<T>(row);
    const std::size_t before = out.size();
    HierNode n;
    n.kind = NodeKind::Symmetry;
    n.symmetry = spec;
    n.children.push_back(visit(first, left_ctx, depth + 1, path_conf, out));
    std::vector<PointCloud> gen_parts;
    for (std::size_t j = before; j < out.size(); ++j) gen_parts.push_back(shape.subset(out[j].rows));
    std::vector<Vec3> targets;
    for (std::size_t r : second) targets.push_back(shape.positions[r]);
    const auto labels = symmetry_label_transfer(gen_parts, spec, targets);
    std::map<std::pair<int, int>, std::vector<std::size_t>> copies;
    for (std::size_t i = 0; i < second.size(); ++i) copies[labels[i]].push_back(second[i]);
    n.part_ids = n.children[0].part_ids;
    for (auto& [key, ids] : copies) {
      const LeafOut& g = out[before + static_cast<std::size_t>(key.first)];
      out.push_back(LeafOut{std::move(ids), g.confidence, g.feature});
      n.part_ids.push_back(static_cast<int>(out.size() - 1));
    }
    return n;
  }
};

// Leaves are never empty, so the emission index is the part id. Fills
// point_ids bottom-up from the parts each node covers.
inline void finish_tree(HierNode& n, const std::vector<PredictedPart>& parts) {
  for (auto& c : n.children) finish_tree(c, parts);
  std::sort(n.part_ids.begin(), n.part_ids.end());
  n.point_ids.clear();
  for (int id : n.part_ids) {
    const auto& ids = parts[static_cast<std::size_t>(id)].point_ids;
    n.point_ids.insert(n.point_ids.end(), ids.begin(), ids.end());
  }
  std::sort(n.point_ids.begin(), n.point_ids.end());
}

}  // namespace detail

// Dynamic top-down decomposition of a (normalized) shape.
template <class T>
SegmentationResult infer_segment(ModelParams<T>& p, const PointCloud& shape, const InferenceConfig& cfg,
                                 const Wiring& wiring = {}) {
  cfg.check();
  if (shape.empty()) throw InvalidArgument("empty input");
  detail::InferPass<T> pass{p, shape, wiring, cfg};
  std::vector<std::size_t> all(shape.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<detail::LeafOut> leaves;
  HierNode root = pass.visit(all, std::nullopt, 0, 1.0, leaves);

  SegmentationResult res;
  res.max_depth_reached = pass.deepest;
  res.instance_id.assign(shape.size(), -1);
  for (std::size_t j = 0; j < leaves.size(); ++j) {
    PredictedPart part;
    part.id = static_cast<int>(j);
    part.confidence = leaves[j].confidence;
    part.leaf_feature = std::move(leaves[j].feature);
    for (std::size_t r : leaves[j].rows) {
      if (res.instance_id[r] != -1) throw CheckFailed("partition violated: point assigned twice");
      res.instance_id[r] = part.id;
      part.point_ids.push_back(shape.orig_index[r]);
    }
    if (part.point_ids.empty()) throw CheckFailed("partition violated: empty part");
    std::sort(part.point_ids.begin(), part.point_ids.end());
    res.parts.push_back(std::move(part));
  }
  for (int id : res.instance_id)
    if (id < 0) throw CheckFailed("partition violated: unassigned point");
  detail::finish_tree(root, res.parts);
  res.tree.root = std::move(root);
  return res;
}

// One class per predicted part from its leaf feature; K == 1 short-circuits.
template <class T>
std::vector<int> predict_leaf_semantics(const SegmentationResult& res, ModelParams<T>& p, int k) {
  if (k == 1) return std::vector<int>(res.parts.size(), 0);
  if (k != p.dims.semantic_classes)
    throw InvalidArgument("semantic class count " + std::to_string(k) + " does not match the model's " +
                          std::to_string(p.dims.semantic_classes));
  std::vector<int> out;
  for (const auto& part : res.parts) {
    Tape<T> t(false);
    Var f = t.constant(part.leaf_feature.template cast<T>());
    out.push_back(static_cast<int>(detail::argmax_row(t.value(nets::predict_semantic_label(t, p, f)), 0)));
  }
  return out;
}

// Per root point, the class of the part that owns it.
inline std::vector<int> broadcast_part_labels(const SegmentationResult& res, const std::vector<int>& part_class) {
  std::vector<int> out(res.instance_id.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = part_class.at(static_cast<std::size_t>(res.instance_id[i]));
  return out;
}

inline nlohmann::json result_to_json(const SegmentationResult& res) {
  nlohmann::json j;
  j["instance_id"] = res.instance_id;
  auto& parts = j["parts"] = nlohmann::json::array();
  for (const auto& p : res.parts)
    parts.push_back({{"id", p.id}, {"confidence", p.confidence}, {"point_ids", p.point_ids}});
  j["tree"] = hierarchy_to_json(res.tree);
  return j;
}

// Reads back what result_to_json wrote; leaf features are not stored.
inline SegmentationResult result_from_json(const nlohmann::json& j) {
  using recseg::detail::field;
  SegmentationResult r;
  try {
    r.instance_id = field(j, "instance_id", "").get<std::vector<int>>();
    const auto& parts = field(j, "parts", "");
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const std::string where = "/parts/" + std::to_string(i);
      PredictedPart p;
      p.id = field(parts[i], "id", where).get<int>();
      p.confidence = field(parts[i], "confidence", where).get<double>();
      p.point_ids = field(parts[i], "point_ids", where).get<std::vector<std::int64_t>>();
      r.parts.push_back(std::move(p));
    }
    r.tree = hierarchy_from_json(field(j, "tree", ""));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("segmentation result schema error: ") + e.what());
  }
  for (int id : r.instance_id)
    if (id < 0 || id >= static_cast<int>(r.parts.size())) throw ParseError("instance_id references unknown part");
  return r;
}

}  // namespace recseg::model
