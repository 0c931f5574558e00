#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recseg/hierarchy.hpp"

namespace recseg::data {

// Semantic vocabulary shared by all categories.
inline const std::vector<std::string>& semantic_classes() {
  static const std::vector<std::string> k{"seat", "back", "leg", "arm", "top", "rail", "rung"};
  return k;
}

inline int semantic_id(const std::string& name) {
  const auto& k = semantic_classes();
  auto it = std::find(k.begin(), k.end(), name);
  if (it == k.end()) throw ParseError("unknown semantic class '" + name + "'");
  return static_cast<int>(it - k.begin());
}

inline const std::vector<std::string>& categories() {
  static const std::vector<std::string> k{"chair", "table", "ladder"};
  return k;
}

// Semantic classes a category can contain, as ids into semantic_classes().
inline std::vector<int> category_classes(const std::string& category) {
  if (category == "chair") return {0, 1, 2, 3};
  if (category == "table") return {2, 4};
  if (category == "ladder") return {5, 6};
  throw InvalidArgument("unknown category '" + category + "'");
}

struct PartInfo {
  int id = 0;
  std::string semantic;
};

struct ShapeRecord {
  std::string category;
  std::uint64_t seed = 0;
  PointCloud cloud;
  std::vector<int> instance_label;  // per point, part id
  std::vector<PartInfo> parts;      // ids 0..n-1 in order
  std::vector<SymmetryGroup> groups;

  std::string shape_id() const { return category + "_" + std::to_string(seed); }

  std::vector<Part> split_parts() const {
    std::vector<Part> out(parts.size());
    for (std::size_t p = 0; p < parts.size(); ++p) out[p].id = parts[p].id;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      auto& c = out.at(static_cast<std::size_t>(instance_label[i])).cloud;
      c.push_back(cloud.positions[i], cloud.normals[i], cloud.orig_index[i]);
    }
    return out;
  }

  std::vector<int> part_semantics() const {
    std::vector<int> out;
    for (const auto& p : parts) out.push_back(semantic_id(p.semantic));
    return out;
  }

  void check() const {
    cloud.check();
    if (instance_label.size() != cloud.size()) throw InvalidArgument("instance_label length mismatch");
    for (std::size_t p = 0; p < parts.size(); ++p)
      if (parts[p].id != static_cast<int>(p)) throw InvalidArgument("part ids must be contiguous from 0");
    std::vector<int> count(parts.size(), 0);
    for (int l : instance_label) {
      if (l < 0 || l >= static_cast<int>(parts.size())) throw InvalidArgument("point label references unknown part");
      ++count[static_cast<std::size_t>(l)];
    }
    for (std::size_t p = 0; p < parts.size(); ++p)
      if (count[p] == 0) throw InvalidArgument("part " + std::to_string(p) + " has no points");
    for (const auto& g : groups)
      for (int m : g.members)
        if (m < 0 || m >= static_cast<int>(parts.size())) throw InvalidArgument("group references unknown part");
  }
};

// Ground-truth hierarchy of a record from its recorded symmetry groups.
inline Hierarchy record_hierarchy(const ShapeRecord& r, const BuildOptions& opt = {}) {
  const auto parts = r.split_parts();
  const auto groups = detect_symmetry_groups(parts, DetectOptions{}, &r.groups);
  return build_hierarchy(parts, groups, opt, r.shape_id());
}

// ---- primitives -------------------------------------------------------------

namespace detail {

struct Face {
  Vec3 origin, u, v, normal;  // parallelogram origin + s*u + t*v
  double area() const { return u.cross(v).norm(); }
};

// Surface of a primitive as a sampler over its exposed faces.
struct Primitive {
  std::vector<Face> faces;
  // cylinder side and caps, when the primitive is a cylinder
  bool cylinder = false;
  Vec3 center = Vec3::Zero();
  int axis = 2;
  double radius = 0, half = 0;
  bool caps[2] = {true, true};

  double area() const {
    if (!cylinder) {
      double a = 0;
      for (const auto& f : faces) a += f.area();
      return a;
    }
    double a = 2 * std::numbers::pi * radius * 2 * half;
    for (bool c : caps) a += c ? std::numbers::pi * radius * radius : 0.0;
    return a;
  }

  void sample(std::size_t n, std::mt19937_64& rng, std::vector<Vec3>& pos, std::vector<Vec3>& nrm) const {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    if (!cylinder) {
      std::vector<double> w;
      for (const auto& f : faces) w.push_back(f.area());
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      for (std::size_t i = 0; i < n; ++i) {
        const Face& f = faces[pick(rng)];
        const double s = U(rng), t = U(rng);
        pos.push_back(f.origin + s * f.u + t * f.v);
        nrm.push_back(f.normal);
      }
      return;
    }
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    const double side = 2 * std::numbers::pi * radius * 2 * half;
    const double cap = std::numbers::pi * radius * radius;
    std::discrete_distribution<int> pick({side, caps[0] ? cap : 0.0, caps[1] ? cap : 0.0});
    for (std::size_t i = 0; i < n; ++i) {
      const int which = pick(rng);
      const double theta = 2 * std::numbers::pi * U(rng);
      Vec3 p = center, nn = Vec3::Zero();
      if (which == 0) {
        p[axis] += (2 * U(rng) - 1) * half;
        p[a1] += radius * std::cos(theta);
        p[a2] += radius * std::sin(theta);
        nn[a1] = std::cos(theta);
        nn[a2] = std::sin(theta);
      } else {
        const double r = radius * std::sqrt(U(rng));
        const double sgn = which == 1 ? -1.0 : 1.0;
        p[axis] += sgn * half;
        p[a1] += r * std::cos(theta);
        p[a2] += r * std::sin(theta);
        nn[axis] = sgn;
      }
      pos.push_back(p);
      nrm.push_back(nn);
    }
  }
};

// Axis-aligned box; skip lists faces left unsampled as (axis, side) with side
// -1 for the min face and +1 for the max face.
inline Primitive box(const Vec3& center, const Vec3& half, std::vector<std::pair<int, int>> skip = {}) {
  Primitive p;
  for (int ax = 0; ax < 3; ++ax) {
    const int a1 = (ax + 1) % 3, a2 = (ax + 2) % 3;
    for (int side : {-1, 1}) {
      if (std::find(skip.begin(), skip.end(), std::make_pair(ax, side)) != skip.end()) continue;
      Face f;
      f.normal = Vec3::Zero();
      f.normal[ax] = side;
      f.origin = center;
      f.origin[ax] += side * half[ax];
      f.origin[a1] -= half[a1];
      f.origin[a2] -= half[a2];
      f.u = Vec3::Zero();
      f.u[a1] = 2 * half[a1];
      f.v = Vec3::Zero();
      f.v[a2] = 2 * half[a2];
      p.faces.push_back(f);
    }
  }
  return p;
}

inline Primitive cylinder(const Vec3& center, int axis, double radius, double half, bool cap_min = true,
                          bool cap_max = true) {
  Primitive p;
  p.cylinder = true;
  p.center = center;
  p.axis = axis;
  p.radius = radius;
  p.half = half;
  p.caps[0] = cap_min;
  p.caps[1] = cap_max;
  return p;
}

struct Layout {
  struct Item {
    Primitive prim;
    std::string semantic;
  };
  std::vector<Item> items;  // index = part id
  struct Group {
    std::vector<int> members;  // members[0] generator; members[k] is copy k
    SymmetrySpec spec;         // in construction coordinates
  };
  std::vector<Group> groups;
};

inline Layout chair_layout(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto R = [&](double a, double b) { return a + (b - a) * U(rng); };
  const double w = R(0.8, 1.2), d = R(0.8, 1.2), t = R(0.06, 0.12), legh = R(0.8, 1.2);
  const double bh = R(0.8, 1.3), bt = R(0.05, 0.1), s = R(0.05, 0.1);
  const bool arms = U(rng) < 0.5;
  const bool round_legs = U(rng) < 0.5;
  Layout L;
  L.items.push_back({box({0, 0, legh + t / 2}, {w / 2, d / 2, t / 2}), "seat"});
  L.items.push_back({box({0, d / 2 - bt / 2, legh + t + bh / 2}, {w / 2, bt / 2, bh / 2}, {{2, -1}}), "back"});
  auto leg = [&](double x, double y) {
    if (round_legs) return cylinder({x, y, legh / 2}, 2, s / 2, legh / 2, true, false);
    return box({x, y, legh / 2}, {s / 2, s / 2, legh / 2}, {{2, 1}});
  };
  const double lx = w / 2 - s, ly = d / 2 - s;
  L.items.push_back({leg(-lx, -ly), "leg"});
  L.items.push_back({leg(lx, -ly), "leg"});
  L.items.push_back({leg(-lx, ly), "leg"});
  L.items.push_back({leg(lx, ly), "leg"});
  const SymmetrySpec mirror{SymmetryKind::Reflective, Vec3::Zero(), Vec3::UnitX(), 2, 0.0};
  L.groups.push_back({{2, 3}, mirror});
  L.groups.push_back({{4, 5}, mirror});
  if (arms) {
    const double aw = R(0.05, 0.1), ah = R(0.2, 0.35), ad = 0.35 * d;
    const double ax = w / 2 - aw / 2;
    L.items.push_back({box({-ax, -0.1 * d, legh + t + ah / 2}, {aw / 2, ad, ah / 2}, {{2, -1}}), "arm"});
    L.items.push_back({box({ax, -0.1 * d, legh + t + ah / 2}, {aw / 2, ad, ah / 2}, {{2, -1}}), "arm"});
    L.groups.push_back({{6, 7}, mirror});
  }
  return L;
}

inline Layout table_layout(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto R = [&](double a, double b) { return a + (b - a) * U(rng); };
  const double h = R(0.9, 1.3), t = R(0.05, 0.1);
  Layout L;
  if (U(rng) < 0.5) {
    // round top, legs in a ring about the vertical axis
    const double radius = R(0.8, 1.1), lr = R(0.04, 0.07);
    const int n = 3 + static_cast<int>(U(rng) * 4.0);
    const double ring = R(0.55, 0.75) * radius;
    L.items.push_back({cylinder({0, 0, h + t / 2}, 2, radius, t / 2), "top"});
    L.items.push_back({cylinder({ring, 0, h / 2}, 2, lr, h / 2, true, false), "leg"});
    Layout::Group g;
    g.members.push_back(1);
    g.spec = SymmetrySpec{SymmetryKind::Rotational, Vec3::Zero(), Vec3::UnitZ(), n, 0.0};
    for (int k = 1; k < n; ++k) {
      L.items.push_back(L.items[1]);  // geometry comes from the generator copy
      g.members.push_back(1 + k);
    }
    L.groups.push_back(g);
  } else {
    // rectangular top, one translational pair of legs per side
    const double w = R(1.2, 2.0), d = R(0.7, 1.2), s = R(0.06, 0.12);
    const double lx = w / 2 - s, ly = d / 2 - s;
    L.items.push_back({box({0, 0, h + t / 2}, {w / 2, d / 2, t / 2}), "top"});
    auto leg = [&](double x, double y) { return box({x, y, h / 2}, {s / 2, s / 2, h / 2}, {{2, 1}}); };
    L.items.push_back({leg(-lx, -ly), "leg"});
    L.items.push_back({leg(-lx, ly), "leg"});
    L.items.push_back({leg(lx, -ly), "leg"});
    L.items.push_back({leg(lx, ly), "leg"});
    const SymmetrySpec pair{SymmetryKind::Translational, Vec3::Zero(), Vec3::UnitY(), 2, 2 * ly};
    L.groups.push_back({{1, 2}, pair});
    L.groups.push_back({{3, 4}, pair});
  }
  return L;
}

inline Layout ladder_layout(std::mt19937_64& rng, int rungs = 0) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto R = [&](double a, double b) { return a + (b - a) * U(rng); };
  const double H = R(2.0, 3.0), W = R(0.6, 0.9), rr = R(0.03, 0.05), ru = R(0.02, 0.035);
  const int n = rungs > 0 ? rungs : 3 + static_cast<int>(U(rng) * 5.0);
  Layout L;
  L.items.push_back({cylinder({-W / 2, 0, H / 2}, 2, rr, H / 2), "rail"});
  L.items.push_back({cylinder({W / 2, 0, H / 2}, 2, rr, H / 2), "rail"});
  const double step = H / (n + 1);
  const double half = W / 2 - rr;
  Layout::Group g;
  for (int k = 0; k < n; ++k) {
    L.items.push_back({cylinder({0, 0, step}, 0, ru, half, false, false), "rung"});
    g.members.push_back(2 + k);
  }
  g.spec = SymmetrySpec{SymmetryKind::Translational, Vec3(0, 0, step), Vec3::UnitZ(), n, step};
  L.groups.push_back(g);
  return L;
}

// Point budget per part proportional to area, at least one per part; all
// members of a group get the generator's count.
inline std::vector<std::size_t> allocate(const Layout& L, std::size_t n_points) {
  const std::size_t n = L.items.size();
  std::vector<double> area(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) total += area[i] = L.items[i].prim.area();
  std::vector<std::size_t> count(n, 0);
  std::vector<bool> fixed(n, false);
  std::size_t used = 0;
  for (const auto& g : L.groups) {
    const double ideal = static_cast<double>(n_points) * area[static_cast<std::size_t>(g.members[0])] / total;
    const std::size_t c = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ideal)));
    for (int m : g.members) {
      count[static_cast<std::size_t>(m)] = c;
      fixed[static_cast<std::size_t>(m)] = true;
      used += c;
    }
  }
  std::vector<std::size_t> free;
  double free_area = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (!fixed[i]) {
      free.push_back(i);
      free_area += area[i];
    }
  if (used + free.size() > n_points) throw InvalidArgument("point budget too small for the part count");
  const std::size_t remaining = n_points - used;
  // largest remainder with a floor of one point
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t i : free) {
    const double ideal = static_cast<double>(remaining) * area[i] / free_area;
    count[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(ideal)));
    assigned += count[i];
    rem.emplace_back(ideal - std::floor(ideal), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t k = 0;
  while (assigned < remaining) {
    ++count[rem[k % rem.size()].second];
    ++assigned;
    ++k;
  }
  while (assigned > remaining) {
    // only possible through the one-point floor; take from the largest
    auto it = std::max_element(free.begin(), free.end(), [&](auto a, auto b) { return count[a] < count[b]; });
    --count[*it];
    --assigned;
  }
  return count;
}

}  // namespace detail

// Procedural shape with exact part labels and symmetry groups, normalized to
// zero centroid and unit radius. Group members are exact symmetric images of
// their generator's samples.
inline ShapeRecord generate_shape(const std::string& category, std::uint64_t seed, std::size_t n_points = 512,
                                  int ladder_rungs = 0) {
  std::mt19937_64 rng(seed);
  detail::Layout L;
  if (category == "chair") L = detail::chair_layout(rng);
  else if (category == "table") L = detail::table_layout(rng);
  else if (category == "ladder") L = detail::ladder_layout(rng, ladder_rungs);
  else throw InvalidArgument("unknown category '" + category + "'");

  const auto count = detail::allocate(L, n_points);
  const std::size_t n_parts = L.items.size();
  std::vector<std::vector<Vec3>> pos(n_parts), nrm(n_parts);
  std::vector<int> copy_of(n_parts, -1);
  std::vector<int> copy_index(n_parts, 0);
  for (std::size_t gi = 0; gi < L.groups.size(); ++gi) {
    const auto& g = L.groups[gi];
    for (std::size_t k = 1; k < g.members.size(); ++k) {
      copy_of[static_cast<std::size_t>(g.members[k])] = static_cast<int>(gi);
      copy_index[static_cast<std::size_t>(g.members[k])] = static_cast<int>(k);
    }
  }
  for (std::size_t p = 0; p < n_parts; ++p)
    if (copy_of[p] < 0) L.items[p].prim.sample(count[p], rng, pos[p], nrm[p]);
  for (std::size_t p = 0; p < n_parts; ++p) {
    if (copy_of[p] < 0) continue;
    const auto& g = L.groups[static_cast<std::size_t>(copy_of[p])];
    const auto gen = static_cast<std::size_t>(g.members[0]);
    const RigidMap m = symmetry_map(g.spec, copy_index[p]);
    for (std::size_t i = 0; i < pos[gen].size(); ++i) {
      pos[p].push_back(m.apply(pos[gen][i]));
      nrm[p].push_back(m.apply_normal(nrm[gen][i]));
    }
  }

  std::vector<std::pair<Vec3, Vec3>> pts;
  std::vector<int> label;
  for (std::size_t p = 0; p < n_parts; ++p)
    for (std::size_t i = 0; i < pos[p].size(); ++i) {
      pts.emplace_back(pos[p][i], nrm[p][i]);
      label.push_back(static_cast<int>(p));
    }
  std::vector<std::size_t> perm(pts.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<Vec3> P, N;
  ShapeRecord r;
  r.category = category;
  r.seed = seed;
  for (std::size_t i : perm) {
    P.push_back(pts[i].first);
    N.push_back(pts[i].second);
    r.instance_label.push_back(label[i]);
  }
  auto normalized = normalize_cloud(PointCloud(std::move(P), std::move(N)));
  r.cloud = std::move(normalized.cloud);
  for (std::size_t p = 0; p < n_parts; ++p) r.parts.push_back({static_cast<int>(p), L.items[p].semantic});
  for (const auto& g : L.groups) {
    SymmetrySpec s = g.spec;
    s.anchor = (s.anchor - normalized.center) / normalized.scale;
    s.step /= normalized.scale;
    SymmetryGroup out;
    out.members = g.members;
    out.spec = canonicalize(s);
    r.groups.push_back(out);
  }
  return r;
}

// Positions only; labels and normals are untouched.
inline ShapeRecord add_gaussian_noise(ShapeRecord r, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw InvalidArgument("noise sigma must be >= 0");
  if (sigma == 0.0) return r;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, sigma);
  for (auto& p : r.cloud.positions)
    for (int c = 0; c < 3; ++c) p[c] += N(rng);
  return r;
}

// Exactly n points, part budgets proportional to current part sizes with at
// least one point each. Selected rows keep their relative order.
inline ShapeRecord resample(const ShapeRecord& r, std::size_t n, std::uint64_t seed) {
  const std::size_t n_parts = r.parts.size();
  if (n < n_parts) throw InvalidArgument("resample: n smaller than the part count");
  std::vector<std::vector<std::size_t>> rows(n_parts);
  for (std::size_t i = 0; i < r.cloud.size(); ++i) rows[static_cast<std::size_t>(r.instance_label[i])].push_back(i);
  const double total = static_cast<double>(r.cloud.size());
  std::vector<std::size_t> count(n_parts);
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t p = 0; p < n_parts; ++p) {
    const double ideal = static_cast<double>(n) * static_cast<double>(rows[p].size()) / total;
    count[p] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(ideal)));
    assigned += count[p];
    rem.emplace_back(ideal - std::floor(ideal), p);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++count[rem[k % n_parts].second];
  while (assigned > n) {
    auto it = std::max_element(count.begin(), count.end());
    --*it;
    --assigned;
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  for (std::size_t p = 0; p < n_parts; ++p) {
    auto src = rows[p];
    if (count[p] <= src.size()) {
      if (count[p] < src.size()) {
        std::shuffle(src.begin(), src.end(), rng);
        src.resize(count[p]);
      }
      chosen.insert(chosen.end(), src.begin(), src.end());
    } else {
      chosen.insert(chosen.end(), src.begin(), src.end());
      std::uniform_int_distribution<std::size_t> pick(0, src.size() - 1);
      for (std::size_t k = src.size(); k < count[p]; ++k) chosen.push_back(src[pick(rng)]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  ShapeRecord out = r;
  out.cloud = PointCloud();
  out.instance_label.clear();
  for (std::size_t j = 0; j < chosen.size(); ++j) {
    const std::size_t i = chosen[j];
    out.cloud.push_back(r.cloud.positions[i], r.cloud.normals[i], static_cast<std::int64_t>(j));
    out.instance_label.push_back(r.instance_label[i]);
  }
  return out;
}

// ---- JSON I/O ----------------------------------------------------------------

inline nlohmann::json record_to_json(const ShapeRecord& r) {
  nlohmann::json j;
  j["category"] = r.category;
  j["seed"] = r.seed;
  auto& pts = j["points"] = nlohmann::json::array();
  for (std::size_t i = 0; i < r.cloud.size(); ++i) {
    const auto& p = r.cloud.positions[i];
    const auto& n = r.cloud.normals[i];
    pts.push_back({p.x(), p.y(), p.z(), n.x(), n.y(), n.z()});
  }
  j["instance_label"] = r.instance_label;
  auto& parts = j["parts"] = nlohmann::json::array();
  for (const auto& p : r.parts) parts.push_back({{"id", p.id}, {"class", p.semantic}});
  auto& groups = j["groups"] = nlohmann::json::array();
  for (const auto& g : r.groups) groups.push_back({{"members", g.members}, {"symmetry", symmetry_to_json(g.spec)}});
  return j;
}

inline ShapeRecord record_from_json(const nlohmann::json& j) {
  using recseg::detail::field;
  using recseg::detail::schema_error;
  ShapeRecord r;
  try {
    r.category = field(j, "category", "").get<std::string>();
    r.seed = field(j, "seed", "").get<std::uint64_t>();
    std::vector<Vec3> P, N;
    const auto& pts = field(j, "points", "");
    if (!pts.is_array()) schema_error("/points", "expected an array");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto& row = pts[i];
      if (!row.is_array() || row.size() != 6) schema_error("/points/" + std::to_string(i), "expected 6 numbers");
      P.emplace_back(row[0].get<double>(), row[1].get<double>(), row[2].get<double>());
      N.emplace_back(row[3].get<double>(), row[4].get<double>(), row[5].get<double>());
    }
    r.cloud = PointCloud(std::move(P), std::move(N));
    r.instance_label = field(j, "instance_label", "").get<std::vector<int>>();
    const auto& parts = field(j, "parts", "");
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const std::string where = "/parts/" + std::to_string(i);
      r.parts.push_back({field(parts[i], "id", where).get<int>(), field(parts[i], "class", where).get<std::string>()});
    }
    const auto& groups = field(j, "groups", "");
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const std::string where = "/groups/" + std::to_string(i);
      SymmetryGroup g;
      g.members = field(groups[i], "members", where).get<std::vector<int>>();
      g.spec = symmetry_from_json(field(groups[i], "symmetry", where), where + "/symmetry");
      r.groups.push_back(g);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("shape record schema error: ") + e.what());
  }
  try {
    r.check();
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("shape record invalid: ") + e.what());
  }
  return r;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline void save_record(const std::string& path, const ShapeRecord& r) { write_text(path, record_to_json(r).dump()); }

inline ShapeRecord load_record(const std::string& path) {
  const std::string text = read_text(path);
  try {
    return record_from_json(parse_json_text(text));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::size_t n_points = 512;
  std::vector<std::string> train;
  std::vector<std::string> test;
};

// Seeded shuffle, then the first round(ratio * n) items train.
inline DatasetManifest split_dataset(const std::vector<std::string>& paths, double ratio, std::uint64_t seed,
                                     std::size_t n_points = 512) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidArgument("split ratio must be in [0, 1]");
  std::vector<std::string> order = paths;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(order.size())));
  DatasetManifest m;
  m.seed = seed;
  m.n_points = n_points;
  m.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  m.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return m;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  return {{"seed", m.seed}, {"n_points", m.n_points}, {"train", m.train}, {"test", m.test}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  using recseg::detail::field;
  DatasetManifest m;
  try {
    m.seed = field(j, "seed", "").get<std::uint64_t>();
    m.n_points = field(j, "n_points", "").get<std::size_t>();
    m.train = field(j, "train", "").get<std::vector<std::string>>();
    m.test = field(j, "test", "").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest schema error: ") + e.what());
  }
  return m;
}

}  // namespace recseg::data
