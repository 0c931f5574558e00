#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "recseg/error.hpp"

namespace recseg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Points with unit normals. orig_index maps every point back to its row in the
// root shape, so sub-clouds produced by recursive splits can be written back.
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;
  std::vector<std::int64_t> orig_index;

  PointCloud() = default;

  // Normalizes normals and assigns orig_index 0..n-1.
  PointCloud(std::vector<Vec3> pos, std::vector<Vec3> nrm)
      : positions(std::move(pos)), normals(std::move(nrm)) {
    if (positions.size() != normals.size())
      throw InvalidArgument("positions/normals length mismatch");
    orig_index.resize(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) orig_index[i] = static_cast<std::int64_t>(i);
    normalize_normals();
  }

  PointCloud(std::vector<Vec3> pos, std::vector<Vec3> nrm, std::vector<std::int64_t> idx)
      : positions(std::move(pos)), normals(std::move(nrm)), orig_index(std::move(idx)) {
    if (positions.size() != normals.size() || positions.size() != orig_index.size())
      throw InvalidArgument("point cloud field length mismatch");
    normalize_normals();
  }

  std::size_t size() const noexcept { return positions.size(); }
  bool empty() const noexcept { return positions.empty(); }

  void push_back(const Vec3& p, const Vec3& n, std::int64_t idx) {
    positions.push_back(p);
    normals.push_back(n);
    orig_index.push_back(idx);
  }

  PointCloud subset(std::span<const std::size_t> rows) const {
    PointCloud out;
    out.positions.reserve(rows.size());
    out.normals.reserve(rows.size());
    out.orig_index.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(positions.at(r), normals.at(r), orig_index.at(r));
    return out;
  }

  // Throws when any field invariant is broken.
  void check() const {
    if (positions.size() != normals.size() || positions.size() != orig_index.size())
      throw InvalidArgument("point cloud field length mismatch");
    std::unordered_set<std::int64_t> seen;
    for (std::size_t i = 0; i < size(); ++i) {
      if (std::abs(normals[i].norm() - 1.0) > 1e-4) throw InvalidArgument("normal is not unit length");
      if (!seen.insert(orig_index[i]).second) throw InvalidArgument("duplicate orig_index");
    }
  }

 private:
  void normalize_normals() {
    for (auto& n : normals) {
      const double len = n.norm();
      if (!(len > 0.0) || !std::isfinite(len)) throw InvalidArgument("zero or non-finite normal");
      n /= len;
    }
  }
};

enum class SymmetryKind { Reflective, Translational, Rotational };

inline const char* to_string(SymmetryKind k) {
  switch (k) {
    case SymmetryKind::Reflective: return "reflective";
    case SymmetryKind::Translational: return "translational";
    case SymmetryKind::Rotational: return "rotational";
  }
  return "?";
}

inline SymmetryKind symmetry_kind_from_string(const std::string& s) {
  if (s == "reflective") return SymmetryKind::Reflective;
  if (s == "translational") return SymmetryKind::Translational;
  if (s == "rotational") return SymmetryKind::Rotational;
  throw ParseError("unknown symmetry kind '" + s + "'");
}

// Right-child payload of a symmetry node.
//   Reflective:    plane through anchor with normal direction, fold 2.
//   Rotational:    axis through anchor along direction, fold copies.
//   Translational: copies at anchor-independent offsets k*step*direction.
struct SymmetrySpec {
  SymmetryKind kind = SymmetryKind::Reflective;
  Vec3 anchor = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
  int fold = 2;
  double step = 0.0;

  bool operator==(const SymmetrySpec&) const = default;
};

inline void check_spec(const SymmetrySpec& s) {
  if (!s.anchor.allFinite() || !s.direction.allFinite() || !std::isfinite(s.step))
    throw InvalidArgument("symmetry spec has non-finite fields");
  if (std::abs(s.direction.norm() - 1.0) > 1e-6) throw InvalidArgument("symmetry direction is not unit length");
  if (s.fold < 2) throw InvalidArgument("symmetry fold must be >= 2");
  if (s.kind == SymmetryKind::Reflective && s.fold != 2) throw InvalidArgument("reflective symmetry must have fold 2");
  if (s.kind == SymmetryKind::Translational && !(s.step > 0.0))
    throw InvalidArgument("translational symmetry needs step > 0");
}

// Flips v so its first component with |c| > eps is positive.
inline Vec3 canonical_sign(Vec3 v, double eps = 1e-12) {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(v[i]) > eps) return v[i] < 0 ? Vec3(-v) : v;
  }
  return v;
}

// Unit direction, sign-canonical for reflective/rotational specs, and the
// anchor moved to the point of the plane/axis closest to the origin.
inline SymmetrySpec canonicalize(SymmetrySpec s) {
  const double len = s.direction.norm();
  if (!(len > 1e-12)) throw InvalidArgument("symmetry direction is zero");
  s.direction /= len;
  switch (s.kind) {
    case SymmetryKind::Reflective:
      s.direction = canonical_sign(s.direction);
      s.anchor = s.direction * s.direction.dot(s.anchor);
      s.fold = 2;
      s.step = 0.0;
      break;
    case SymmetryKind::Rotational:
      s.direction = canonical_sign(s.direction);
      s.anchor = s.anchor - s.direction * s.direction.dot(s.anchor);
      s.step = 0.0;
      break;
    case SymmetryKind::Translational:
      break;
  }
  return s;
}

// Affine map of the k-th copy: p -> linear * p + offset.
struct RigidMap {
  Mat3 linear = Mat3::Identity();
  Vec3 offset = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return linear * p + offset; }
  Vec3 apply_normal(const Vec3& n) const { return linear * n; }
};

inline RigidMap symmetry_map(const SymmetrySpec& s, int k) {
  RigidMap m;
  if (k == 0) return m;
  switch (s.kind) {
    case SymmetryKind::Reflective: {
      m.linear = Mat3::Identity() - 2.0 * s.direction * s.direction.transpose();
      m.offset = 2.0 * s.direction.dot(s.anchor) * s.direction;
      break;
    }
    case SymmetryKind::Rotational: {
      const double angle = 2.0 * std::numbers::pi * k / s.fold;
      m.linear = Eigen::AngleAxisd(angle, s.direction).toRotationMatrix();
      m.offset = s.anchor - m.linear * s.anchor;
      break;
    }
    case SymmetryKind::Translational:
      m.offset = (k * s.step) * s.direction;
      break;
  }
  return m;
}

inline PointCloud transform_cloud(const PointCloud& c, const RigidMap& m) {
  PointCloud out = c;
  for (std::size_t i = 0; i < c.size(); ++i) {
    out.positions[i] = m.apply(c.positions[i]);
    out.normals[i] = m.apply_normal(c.normals[i]);
  }
  return out;
}

// Element 0 is the generator; element k is the k-th symmetric copy.
inline std::vector<PointCloud> apply_symmetry(const PointCloud& generator, const SymmetrySpec& spec) {
  if (generator.empty()) throw InvalidArgument("empty input");
  check_spec(spec);
  std::vector<PointCloud> copies;
  copies.reserve(static_cast<std::size_t>(spec.fold));
  copies.push_back(generator);
  for (int k = 1; k < spec.fold; ++k) copies.push_back(transform_cloud(generator, symmetry_map(spec, k)));
  return copies;
}

inline Vec3 centroid(std::span<const Vec3> pts) {
  if (pts.empty()) throw InvalidArgument("empty input");
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

struct Normalized {
  PointCloud cloud;
  Vec3 center;
  double scale;
};

// Centers on the centroid and scales so the farthest point has norm 1.
inline Normalized normalize_cloud(const PointCloud& cloud) {
  if (cloud.empty()) throw InvalidArgument("empty input");
  const Vec3 center = centroid(cloud.positions);
  double radius = 0.0;
  for (const auto& p : cloud.positions) radius = std::max(radius, (p - center).norm());
  const double scale = radius > 0.0 ? radius : 1.0;
  Normalized out{cloud, center, scale};
  for (auto& p : out.cloud.positions) p = (p - center) / scale;
  return out;
}

inline double min_set_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("empty input");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : a)
    for (const auto& q : b) best = std::min(best, (p - q).squaredNorm());
  return std::sqrt(best);
}

inline double min_set_distance(const PointCloud& a, const PointCloud& b) {
  return min_set_distance(a.positions, b.positions);
}

// Index of the nearest source point; ties resolve to the lower index.
inline std::size_t nearest_index(const Vec3& p, std::span<const Vec3> source) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < source.size(); ++j) {
    const double d = (p - source[j]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

template <class Label>
std::vector<Label> nn_label_transfer(std::span<const Vec3> targets, std::span<const Vec3> source,
                                     std::span<const Label> labels) {
  if (source.empty()) throw InvalidArgument("empty source");
  if (labels.size() != source.size()) throw InvalidArgument("source is not fully labeled");
  std::vector<Label> out;
  out.reserve(targets.size());
  for (const auto& p : targets) out.push_back(labels[nearest_index(p, source)]);
  return out;
}

// max over a of the distance to the nearest point of b.
inline double directed_residual(std::span<const Vec3> a, std::span<const Vec3> b) {
  double worst = 0.0;
  for (const auto& p : a) worst = std::max(worst, (p - b[nearest_index(p, b)]).norm());
  return worst;
}

inline double symmetric_residual(std::span<const Vec3> a, std::span<const Vec3> b) {
  return std::max(directed_residual(a, b), directed_residual(b, a));
}

}  // namespace recseg
