#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "recseg/geom.hpp"

namespace recseg {

// Order matches the node classifier logits.
enum class NodeKind { Adjacency = 0, Symmetry = 1, Leaf = 2 };

inline const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Adjacency: return "adjacency";
    case NodeKind::Symmetry: return "symmetry";
    case NodeKind::Leaf: return "leaf";
  }
  return "?";
}

// Adjacency nodes have two children, symmetry nodes one (the generator
// subtree) plus the spec payload, leaves none. part_ids and point_ids are
// kept sorted.
struct HierNode {
  NodeKind kind = NodeKind::Leaf;
  std::vector<int> part_ids;
  std::vector<std::int64_t> point_ids;
  std::vector<HierNode> children;
  std::optional<SymmetrySpec> symmetry;

  bool is_leaf() const { return kind == NodeKind::Leaf; }
  int min_part() const { return part_ids.empty() ? -1 : part_ids.front(); }
};

struct Hierarchy {
  HierNode root;
  std::string shape_id;
};

struct Part {
  int id = 0;
  PointCloud cloud;
};

struct SymmetryGroup {
  std::vector<int> members;  // sorted; members.front() is the generator
  SymmetrySpec spec;

  bool operator==(const SymmetryGroup&) const = default;
};

struct DetectOptions {
  double tol = 0.02;            // congruence residual
  double angle_tol_deg = 2.0;
  double spacing_tol = 0.02;
};

struct BuildOptions {
  // Pair distances within tie_tol of the current minimum count as ties and
  // are resolved by part id order. Sampled surfaces of touching parts have a
  // nonzero gap on the order of the sample spacing.
  double tie_tol = 0.1;
};

namespace detail {

template <class V>
std::vector<V> sorted_union(const std::vector<V>& a, const std::vector<V>& b) {
  std::vector<V> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline std::vector<Vec3> centered(const PointCloud& c) {
  const Vec3 m = centroid(c.positions);
  std::vector<Vec3> out;
  out.reserve(c.size());
  for (const auto& p : c.positions) out.push_back(p - m);
  return out;
}

// Rigid-motion invariant pre-filter: radial distance quantiles about the
// centroid and the principal extents must agree. The exact test is the
// residual of a fitted symmetry in fit_group.
inline bool congruent(const PointCloud& a, const PointCloud& b, double tol) {
  auto signature = [](const PointCloud& c) {
    const auto pts = centered(c);
    std::vector<double> r;
    r.reserve(pts.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : pts) {
      r.push_back(p.norm());
      cov += p * p.transpose();
    }
    std::sort(r.begin(), r.end());
    std::vector<double> sig;
    for (int q = 0; q <= 10; ++q)
      sig.push_back(r[static_cast<std::size_t>(q * static_cast<double>(r.size() - 1) / 10.0)]);
    const Vec3 ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov / static_cast<double>(pts.size())).eigenvalues();
    for (int i = 0; i < 3; ++i) sig.push_back(std::sqrt(std::max(0.0, ev[i])));
    return sig;
  };
  const auto sa = signature(a);
  const auto sb = signature(b);
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (std::abs(sa[i] - sb[i]) > tol) return false;
  return true;
}

inline double spec_residual(const PointCloud& generator, const SymmetrySpec& spec,
                            const std::vector<const PointCloud*>& members) {
  double worst = 0.0;
  for (int k = 1; k < spec.fold; ++k) {
    const PointCloud copy = transform_cloud(generator, symmetry_map(spec, k));
    worst = std::max(worst, symmetric_residual(copy.positions, members[static_cast<std::size_t>(k)]->positions));
  }
  return worst;
}

// Orders members so that member k is the k-th copy under spec; returns false
// when some copy has no matching member.
inline bool order_members(const PointCloud& generator, const SymmetrySpec& spec,
                          std::vector<const PointCloud*>& members, std::vector<int>& ids, double tol) {
  std::vector<const PointCloud*> out{members[0]};
  std::vector<int> out_ids{ids[0]};
  std::vector<bool> used(members.size(), false);
  used[0] = true;
  for (int k = 1; k < spec.fold; ++k) {
    const PointCloud copy = transform_cloud(generator, symmetry_map(spec, k));
    const Vec3 c = centroid(copy.positions);
    std::size_t best = members.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j < members.size(); ++j) {
      if (used[j]) continue;
      const double d = (centroid(members[j]->positions) - c).norm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (best == members.size() || best_d > tol) return false;
    used[best] = true;
    out.push_back(members[best]);
    out_ids.push_back(ids[best]);
  }
  members = out;
  ids = out_ids;
  return true;
}

inline std::optional<SymmetrySpec> fit_group(const std::vector<const PointCloud*>& parts, const DetectOptions& opt) {
  const std::size_t n = parts.size();
  std::vector<Vec3> c;
  for (const auto* p : parts) c.push_back(centroid(p->positions));
  const PointCloud& gen = *parts[0];
  auto accept = [&](SymmetrySpec s) -> std::optional<SymmetrySpec> {
    auto members = parts;
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    if (!order_members(gen, s, members, ids, opt.tol)) return std::nullopt;
    if (spec_residual(gen, s, members) > opt.tol) return std::nullopt;
    return s;
  };

  if (n == 2) {
    const Vec3 d = c[1] - c[0];
    if (d.norm() < 1e-9) return std::nullopt;
    SymmetrySpec refl{SymmetryKind::Reflective, 0.5 * (c[0] + c[1]), d.normalized(), 2, 0.0};
    if (auto s = accept(refl)) return canonicalize(*s);
    SymmetrySpec trans{SymmetryKind::Translational, c[0], d.normalized(), 2, d.norm()};
    if (auto s = accept(trans)) return s;
    return std::nullopt;
  }

  // Translational: collinear centroids with equal spacing, starting at the generator.
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Vec3 axis = Vec3::Zero();
    double far = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      if ((c[i] - c[0]).norm() > far) {
        far = (c[i] - c[0]).norm();
        axis = (c[i] - c[0]).normalized();
      }
    }
    if (far > 1e-9) {
      std::vector<double> proj(n);
      bool collinear = true;
      for (std::size_t i = 0; i < n; ++i) {
        proj[i] = (c[i] - c[0]).dot(axis);
        const Vec3 off = (c[i] - c[0]) - proj[i] * axis;
        if (off.norm() > opt.spacing_tol) collinear = false;
      }
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return proj[a] < proj[b]; });
      if (collinear && order[0] == 0) {
        const double step = far / static_cast<double>(n - 1);
        bool even = true;
        for (std::size_t i = 0; i < n; ++i)
          if (std::abs(proj[order[i]] - step * static_cast<double>(i)) > opt.spacing_tol) even = false;
        if (even) {
          SymmetrySpec s{SymmetryKind::Translational, c[0], axis, static_cast<int>(n), step};
          if (auto ok = accept(s)) return ok;
        }
      }
    }
  }

  // Rotational: centroids on a circle in a common plane, equal angles.
  {
    const Vec3 center = centroid(c);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : c) cov += (p - center) * (p - center).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    const Vec3 axis = es.eigenvectors().col(0).normalized();
    const double radius = (c[0] - center).norm();
    bool ring = radius > 1e-9;
    for (const auto& p : c) {
      if (std::abs((p - center).dot(axis)) > opt.spacing_tol) ring = false;
      if (std::abs((p - center).norm() - radius) > opt.spacing_tol) ring = false;
    }
    if (ring) {
      const double expected = 360.0 / static_cast<double>(n);
      // every centroid must have a neighbour at the expected angle
      for (std::size_t i = 0; i < n && ring; ++i) {
        double nearest = 360.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const Vec3 a = (c[i] - center).normalized();
          const Vec3 b = (c[j] - center).normalized();
          nearest = std::min(nearest, std::acos(std::clamp(a.dot(b), -1.0, 1.0)) * 180.0 / std::numbers::pi);
        }
        if (std::abs(nearest - expected) > opt.angle_tol_deg) ring = false;
      }
      if (ring) {
        for (const Vec3& dir : {axis, Vec3(-axis)}) {
          SymmetrySpec s{SymmetryKind::Rotational, center, dir, static_cast<int>(n), 0.0};
          if (auto ok = accept(s)) return canonicalize(*ok);
        }
      }
    }
  }
  return std::nullopt;
}

inline void check_disjoint(const std::vector<Part>& parts) {
  std::unordered_set<int> ids;
  std::unordered_set<std::int64_t> points;
  for (const auto& p : parts) {
    if (p.cloud.empty()) throw InvalidArgument("part " + std::to_string(p.id) + " has no points");
    if (!ids.insert(p.id).second) throw InvalidArgument("duplicate part id " + std::to_string(p.id));
    for (auto idx : p.cloud.orig_index)
      if (!points.insert(idx).second) throw InvalidArgument("overlapping part point sets at point " + std::to_string(idx));
  }
}

}  // namespace detail

// Groups of congruent parts related by one reflection, translation or
// rotation pattern. If ground-truth groups are given they are returned as is.
inline std::vector<SymmetryGroup> detect_symmetry_groups(const std::vector<Part>& parts, const DetectOptions& opt = {},
                                                         const std::vector<SymmetryGroup>* ground_truth = nullptr) {
  if (!(opt.tol > 0.0)) throw InvalidArgument("symmetry tolerance must be positive");
  detail::check_disjoint(parts);
  if (ground_truth) return *ground_truth;

  std::vector<std::size_t> order(parts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return parts[a].id < parts[b].id; });

  // congruence classes by union-find, visited in part id order
  std::vector<std::size_t> root(parts.size());
  std::iota(root.begin(), root.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t i) { return root[i] == i ? i : root[i] = find(root[i]); };
  for (std::size_t a = 0; a < order.size(); ++a)
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const auto& pa = parts[order[a]].cloud;
      const auto& pb = parts[order[b]].cloud;
      if (find(order[a]) == find(order[b])) continue;
      if (detail::congruent(pa, pb, opt.tol)) root[find(order[b])] = find(order[a]);
    }
  std::map<std::size_t, std::vector<std::size_t>> classes;
  for (std::size_t i : order) classes[find(i)].push_back(i);

  std::vector<SymmetryGroup> groups;
  auto emit = [&](const std::vector<std::size_t>& members, const SymmetrySpec& s) {
    SymmetryGroup g;
    for (auto m : members) g.members.push_back(parts[m].id);
    std::sort(g.members.begin(), g.members.end());
    g.spec = s;
    groups.push_back(g);
  };
  for (auto& [key, members] : classes) {
    if (members.size() < 2) continue;
    std::vector<const PointCloud*> clouds;
    for (auto m : members) clouds.push_back(&parts[m].cloud);
    if (auto s = detail::fit_group(clouds, opt)) {
      emit(members, *s);
      continue;
    }
    // fall back to reflective/translational pairs in id order
    std::vector<bool> used(members.size(), false);
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (used[i]) continue;
      for (std::size_t j = i + 1; j < members.size(); ++j) {
        if (used[j]) continue;
        if (auto s = detail::fit_group({clouds[i], clouds[j]}, opt)) {
          emit({members[i], members[j]}, *s);
          used[i] = used[j] = true;
          break;
        }
      }
    }
  }
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.members < b.members; });
  return groups;
}

inline HierNode make_leaf(const Part& p) {
  HierNode n;
  n.kind = NodeKind::Leaf;
  n.part_ids = {p.id};
  n.point_ids = p.cloud.orig_index;
  std::sort(n.point_ids.begin(), n.point_ids.end());
  return n;
}

inline HierNode make_adjacency(HierNode a, HierNode b) {
  if (b.min_part() < a.min_part()) std::swap(a, b);
  HierNode n;
  n.kind = NodeKind::Adjacency;
  n.part_ids = detail::sorted_union(a.part_ids, b.part_ids);
  n.point_ids = detail::sorted_union(a.point_ids, b.point_ids);
  n.children.push_back(std::move(a));
  n.children.push_back(std::move(b));
  return n;
}

// Symmetry groups become symmetry nodes over their smallest-id member, then
// units are merged pairwise by minimum point-set distance into a binary tree.
inline Hierarchy build_hierarchy(const std::vector<Part>& parts, const std::vector<SymmetryGroup>& groups,
                                 const BuildOptions& opt = {}, std::string shape_id = {}) {
  if (parts.empty()) throw InvalidArgument("empty part list");
  detail::check_disjoint(parts);
  std::map<int, const Part*> by_id;
  for (const auto& p : parts) by_id[p.id] = &p;
  std::unordered_set<int> grouped;
  for (const auto& g : groups) {
    if (g.members.size() < 2) throw InvalidArgument("symmetry group with fewer than two members");
    for (int m : g.members) {
      if (!by_id.count(m)) throw InvalidArgument("symmetry group references unknown part " + std::to_string(m));
      if (!grouped.insert(m).second) throw InvalidArgument("part " + std::to_string(m) + " is in two symmetry groups");
    }
  }

  struct Unit {
    HierNode node;
    std::vector<Vec3> points;
  };
  std::vector<Unit> units;
  for (const auto& g : groups) {
    std::vector<int> members = g.members;
    std::sort(members.begin(), members.end());
    Unit u;
    u.node.kind = NodeKind::Symmetry;
    u.node.part_ids = members;
    u.node.symmetry = g.spec;
    u.node.children.push_back(make_leaf(*by_id.at(members.front())));
    for (int m : members) {
      const auto& c = by_id.at(m)->cloud;
      u.node.point_ids.insert(u.node.point_ids.end(), c.orig_index.begin(), c.orig_index.end());
      u.points.insert(u.points.end(), c.positions.begin(), c.positions.end());
    }
    std::sort(u.node.point_ids.begin(), u.node.point_ids.end());
    units.push_back(std::move(u));
  }
  for (const auto& [id, p] : by_id) {
    if (grouped.count(id)) continue;
    units.push_back(Unit{make_leaf(*p), p->cloud.positions});
  }
  std::sort(units.begin(), units.end(), [](const Unit& a, const Unit& b) { return a.node.min_part() < b.node.min_part(); });

  const std::size_t n = units.size();
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist[i][j] = dist[j][i] = min_set_distance(units[i].points, units[j].points);
  std::vector<bool> alive(n, true);
  for (std::size_t left = n; left > 1; --left) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (alive[i] && alive[j]) best = std::min(best, dist[i][j]);
    std::size_t bi = n, bj = n;
    std::pair<int, int> key{std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!alive[i] || !alive[j] || dist[i][j] > best + opt.tie_tol) continue;
        int a = units[i].node.min_part(), b = units[j].node.min_part();
        if (a > b) std::swap(a, b);
        if (std::make_pair(a, b) < key) {
          key = {a, b};
          bi = i;
          bj = j;
        }
      }
    units[bi].node = make_adjacency(std::move(units[bi].node), std::move(units[bj].node));
    units[bi].points.insert(units[bi].points.end(), units[bj].points.begin(), units[bj].points.end());
    alive[bj] = false;
    for (std::size_t k = 0; k < n; ++k) {
      if (!alive[k] || k == bi) continue;
      dist[bi][k] = dist[k][bi] = std::min(dist[bi][k], dist[bj][k]);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (alive[i]) return Hierarchy{std::move(units[i].node), std::move(shape_id)};
  throw InvalidArgument("empty part list");
}

inline std::size_t count_nodes(const HierNode& n) {
  std::size_t c = 1;
  for (const auto& ch : n.children) c += count_nodes(ch);
  return c;
}

template <class F>
void visit_preorder(const HierNode& n, F&& f, int depth = 0) {
  f(n, depth);
  for (const auto& c : n.children) visit_preorder(c, f, depth + 1);
}

// Rebuilds every node's point_ids from per-point instance labels.
inline void attach_point_ids(HierNode& n, std::span<const int> instance_label) {
  std::unordered_set<int> ids(n.part_ids.begin(), n.part_ids.end());
  n.point_ids.clear();
  for (std::size_t i = 0; i < instance_label.size(); ++i)
    if (ids.count(instance_label[i])) n.point_ids.push_back(static_cast<std::int64_t>(i));
  for (auto& c : n.children) attach_point_ids(c, instance_label);
}

// Labels each target point with (generator part index, copy index >= 1) of the
// nearest point among all transformed copies of the labeled generator parts.
inline std::vector<std::pair<int, int>> symmetry_label_transfer(const std::vector<PointCloud>& generator_parts,
                                                                const SymmetrySpec& spec,
                                                                std::span<const Vec3> targets) {
  std::vector<Vec3> source;
  std::vector<std::pair<int, int>> labels;
  for (int k = 1; k < spec.fold; ++k) {
    const RigidMap m = symmetry_map(spec, k);
    for (std::size_t j = 0; j < generator_parts.size(); ++j)
      for (const auto& p : generator_parts[j].positions) {
        source.push_back(m.apply(p));
        labels.emplace_back(static_cast<int>(j), k);
      }
  }
  return nn_label_transfer<std::pair<int, int>>(targets, source, labels);
}

namespace detail {

inline std::unordered_map<std::int64_t, std::size_t> row_of(const PointCloud& shape) {
  std::unordered_map<std::int64_t, std::size_t> rows;
  for (std::size_t i = 0; i < shape.size(); ++i) rows[shape.orig_index[i]] = i;
  return rows;
}

inline void expand(const HierNode& n, const PointCloud& shape, const std::unordered_map<std::int64_t, std::size_t>& rows,
                   std::vector<std::vector<std::int64_t>>& out) {
  switch (n.kind) {
    case NodeKind::Leaf:
      out.push_back(n.point_ids);
      return;
    case NodeKind::Adjacency:
      for (const auto& c : n.children) expand(c, shape, rows, out);
      return;
    case NodeKind::Symmetry: {
      std::vector<std::vector<std::int64_t>> gen_parts;
      expand(n.children.at(0), shape, rows, gen_parts);
      std::vector<PointCloud> clouds;
      for (const auto& ids : gen_parts) {
        PointCloud c;
        for (auto id : ids) c.push_back(shape.positions[rows.at(id)], shape.normals[rows.at(id)], id);
        clouds.push_back(std::move(c));
      }
      std::vector<std::int64_t> rest;
      std::set_difference(n.point_ids.begin(), n.point_ids.end(), n.children[0].point_ids.begin(),
                          n.children[0].point_ids.end(), std::back_inserter(rest));
      std::vector<Vec3> targets;
      for (auto id : rest) targets.push_back(shape.positions[rows.at(id)]);
      std::map<std::pair<int, int>, std::vector<std::int64_t>> copies;
      if (!rest.empty()) {
        const auto labels = symmetry_label_transfer(clouds, *n.symmetry, targets);
        for (std::size_t i = 0; i < rest.size(); ++i) copies[labels[i]].push_back(rest[i]);
      }
      for (auto& g : gen_parts) out.push_back(std::move(g));
      for (auto& [key, ids] : copies) out.push_back(std::move(ids));
      return;
    }
  }
}

}  // namespace detail

// Leaf point sets with every symmetry node expanded into its copies.
inline std::vector<std::vector<std::int64_t>> expand_parts(const Hierarchy& h, const PointCloud& shape) {
  std::vector<std::vector<std::int64_t>> out;
  detail::expand(h.root, shape, detail::row_of(shape), out);
  for (auto& s : out) std::sort(s.begin(), s.end());
  return out;
}

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

namespace detail {

inline void validate_node(const HierNode& n, const std::string& path, const PointCloud& shape,
                          const std::unordered_map<std::int64_t, std::size_t>& rows, double sym_tol,
                          ValidationReport& r) {
  auto fail = [&](const std::string& msg) { r.violations.push_back(msg + " at " + (path.empty() ? "/" : path)); };
  if (!std::is_sorted(n.part_ids.begin(), n.part_ids.end()) ||
      std::adjacent_find(n.part_ids.begin(), n.part_ids.end()) != n.part_ids.end())
    fail("part_ids not sorted-unique");
  if (!std::is_sorted(n.point_ids.begin(), n.point_ids.end()) ||
      std::adjacent_find(n.point_ids.begin(), n.point_ids.end()) != n.point_ids.end())
    fail("point_ids not sorted-unique");
  if (n.point_ids.empty()) fail("empty node");
  for (auto id : n.point_ids)
    if (!rows.count(id)) {
      fail("point id " + std::to_string(id) + " not in shape");
      break;
    }
  switch (n.kind) {
    case NodeKind::Leaf:
      if (!n.children.empty()) fail("leaf has children");
      if (n.part_ids.size() != 1) fail("leaf must cover exactly one part");
      if (n.symmetry) fail("leaf carries a symmetry payload");
      return;
    case NodeKind::Adjacency: {
      if (n.children.size() != 2) {
        fail("adjacency node needs two children");
        return;
      }
      if (n.symmetry) fail("adjacency node carries a symmetry payload");
      const auto& a = n.children[0];
      const auto& b = n.children[1];
      std::vector<std::int64_t> common;
      std::set_intersection(a.point_ids.begin(), a.point_ids.end(), b.point_ids.begin(), b.point_ids.end(),
                            std::back_inserter(common));
      if (!common.empty()) fail("non-disjoint children");
      if (sorted_union(a.point_ids, b.point_ids) != n.point_ids) fail("children do not cover node points");
      std::vector<int> common_parts;
      std::set_intersection(a.part_ids.begin(), a.part_ids.end(), b.part_ids.begin(), b.part_ids.end(),
                            std::back_inserter(common_parts));
      if (!common_parts.empty()) fail("non-disjoint child parts");
      if (sorted_union(a.part_ids, b.part_ids) != n.part_ids) fail("children do not cover node parts");
      if (!a.part_ids.empty() && !b.part_ids.empty() && a.min_part() > b.min_part()) fail("non-canonical child order");
      validate_node(a, path + "/0", shape, rows, sym_tol, r);
      validate_node(b, path + "/1", shape, rows, sym_tol, r);
      return;
    }
    case NodeKind::Symmetry: {
      if (n.children.size() != 1) {
        fail("symmetry node needs exactly one generator child");
        return;
      }
      if (!n.symmetry) {
        fail("symmetry node without symmetry payload");
        return;
      }
      try {
        check_spec(*n.symmetry);
      } catch (const Error& e) {
        fail(std::string("invalid symmetry spec: ") + e.what());
        return;
      }
      const auto& g = n.children[0];
      if (!std::includes(n.point_ids.begin(), n.point_ids.end(), g.point_ids.begin(), g.point_ids.end()))
        fail("generator points outside symmetry node");
      if (!std::includes(n.part_ids.begin(), n.part_ids.end(), g.part_ids.begin(), g.part_ids.end()))
        fail("generator parts outside symmetry node");
      if (!g.part_ids.empty() && g.min_part() != n.min_part()) fail("generator is not the smallest member");
      if (n.part_ids.size() != g.part_ids.size() * static_cast<std::size_t>(n.symmetry->fold))
        fail("member count does not match fold");
      if (!g.point_ids.empty() && rows.size() > 0) {
        std::vector<Vec3> gen;
        for (auto id : g.point_ids)
          if (rows.count(id)) gen.push_back(shape.positions[rows.at(id)]);
        std::vector<Vec3> node;
        for (auto id : n.point_ids)
          if (rows.count(id)) node.push_back(shape.positions[rows.at(id)]);
        if (!gen.empty() && !node.empty()) {
          std::vector<Vec3> images;
          for (int k = 0; k < n.symmetry->fold; ++k) {
            const RigidMap m = symmetry_map(*n.symmetry, k);
            for (const auto& p : gen) images.push_back(m.apply(p));
          }
          if (symmetric_residual(images, node) > sym_tol) fail("symmetry copies do not match node points");
        }
      }
      validate_node(g, path + "/0", shape, rows, sym_tol, r);
      return;
    }
  }
}

}  // namespace detail

// Structural invariants of every node, plus an exact partition of the shape.
// sym_tol bounds the residual between the symmetry images of a generator and
// its node's points.
inline ValidationReport validate(const Hierarchy& h, const PointCloud& shape, double sym_tol = 1e-4) {
  ValidationReport r;
  const auto rows = detail::row_of(shape);
  std::vector<std::int64_t> all = shape.orig_index;
  std::sort(all.begin(), all.end());
  if (h.root.point_ids != all) r.violations.push_back("root does not cover the shape exactly at /");
  detail::validate_node(h.root, "", shape, rows, sym_tol, r);
  return r;
}

// ---- JSON -----------------------------------------------------------------

inline nlohmann::json symmetry_to_json(const SymmetrySpec& s) {
  return {{"kind", to_string(s.kind)},
          {"anchor", {s.anchor.x(), s.anchor.y(), s.anchor.z()}},
          {"direction", {s.direction.x(), s.direction.y(), s.direction.z()}},
          {"fold", s.fold},
          {"step", s.step}};
}

namespace detail {

[[noreturn]] inline void schema_error(const std::string& where, const std::string& msg) {
  throw ParseError("schema error at " + (where.empty() ? std::string("/") : where) + ": " + msg);
}

inline const nlohmann::json& field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object()) schema_error(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) schema_error(where, std::string("missing '") + key + "'");
  return *it;
}

inline Vec3 vec3_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) schema_error(where, "expected an array of 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) schema_error(where, "expected a number");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

}  // namespace detail

inline SymmetrySpec symmetry_from_json(const nlohmann::json& j, const std::string& where = "") {
  SymmetrySpec s;
  const auto& kind = detail::field(j, "kind", where);
  if (!kind.is_string()) detail::schema_error(where + "/kind", "expected a string");
  try {
    s.kind = symmetry_kind_from_string(kind.get<std::string>());
  } catch (const Error& e) {
    detail::schema_error(where + "/kind", e.what());
  }
  s.anchor = detail::vec3_from_json(detail::field(j, "anchor", where), where + "/anchor");
  s.direction = detail::vec3_from_json(detail::field(j, "direction", where), where + "/direction");
  const auto& fold = detail::field(j, "fold", where);
  if (!fold.is_number_integer()) detail::schema_error(where + "/fold", "expected an integer");
  s.fold = fold.get<int>();
  const auto& step = detail::field(j, "step", where);
  if (!step.is_number()) detail::schema_error(where + "/step", "expected a number");
  s.step = step.get<double>();
  return s;
}

inline nlohmann::json node_to_json(const HierNode& n) {
  nlohmann::json j;
  j["kind"] = to_string(n.kind);
  j["part_ids"] = n.part_ids;
  if (!n.children.empty()) {
    j["children"] = nlohmann::json::array();
    for (const auto& c : n.children) j["children"].push_back(node_to_json(c));
  }
  if (n.symmetry) j["symmetry"] = symmetry_to_json(*n.symmetry);
  return j;
}

inline HierNode node_from_json(const nlohmann::json& j, const std::string& where = "") {
  HierNode n;
  const auto& kind = detail::field(j, "kind", where);
  const std::string k = kind.is_string() ? kind.get<std::string>() : "";
  if (k == "adjacency") n.kind = NodeKind::Adjacency;
  else if (k == "symmetry") n.kind = NodeKind::Symmetry;
  else if (k == "leaf") n.kind = NodeKind::Leaf;
  else detail::schema_error(where + "/kind", "expected \"adjacency\", \"symmetry\" or \"leaf\"");
  const auto& parts = detail::field(j, "part_ids", where);
  if (!parts.is_array()) detail::schema_error(where + "/part_ids", "expected an int array");
  for (const auto& p : parts) {
    if (!p.is_number_integer()) detail::schema_error(where + "/part_ids", "expected an int array");
    n.part_ids.push_back(p.get<int>());
  }
  if (auto it = j.find("children"); it != j.end()) {
    if (!it->is_array()) detail::schema_error(where + "/children", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i)
      n.children.push_back(node_from_json((*it)[i], where + "/children/" + std::to_string(i)));
  }
  if (auto it = j.find("symmetry"); it != j.end()) n.symmetry = symmetry_from_json(*it, where + "/symmetry");
  const std::size_t expected = n.kind == NodeKind::Adjacency ? 2 : n.kind == NodeKind::Symmetry ? 1 : 0;
  if (n.children.size() != expected)
    detail::schema_error(where + "/children", std::string(to_string(n.kind)) + " node needs " +
                                                  std::to_string(expected) + " children");
  if ((n.kind == NodeKind::Symmetry) != n.symmetry.has_value())
    detail::schema_error(where + "/symmetry", "symmetry payload must be present exactly on symmetry nodes");
  return n;
}

inline nlohmann::json hierarchy_to_json(const Hierarchy& h) {
  nlohmann::json j = node_to_json(h.root);
  if (!h.shape_id.empty()) j["shape_id"] = h.shape_id;
  return j;
}

inline Hierarchy hierarchy_from_json(const nlohmann::json& j) {
  Hierarchy h;
  h.root = node_from_json(j);
  if (auto it = j.find("shape_id"); it != j.end() && it->is_string()) h.shape_id = it->get<std::string>();
  return h;
}

// Line and column of a byte offset, for parse error messages.
inline std::string text_location(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline nlohmann::json parse_json_text(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("JSON parse error at " + text_location(text, e.byte == 0 ? 0 : e.byte - 1) + ": " + e.what());
  }
}

inline std::string serialize(const Hierarchy& h) { return hierarchy_to_json(h).dump(); }

inline Hierarchy deserialize(const std::string& text) {
  if (text.empty()) throw ParseError("empty hierarchy document");
  return hierarchy_from_json(parse_json_text(text));
}

}  // namespace recseg
