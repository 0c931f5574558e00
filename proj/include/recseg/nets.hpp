#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "recseg/autodiff/ops.hpp"
#include "recseg/geom.hpp"

namespace recseg::nets {

using ad::Matrix;
using ad::Tape;
using ad::Var;

inline constexpr int kInputChannels = 6;    // x y z nx ny nz
inline constexpr int kNodeClasses = 3;      // adjacency, symmetry, leaf
inline constexpr int kSymmetryKinds = 3;    // reflective, translational, rotational
inline constexpr int kSymmetryParams = 8;   // anchor(3) direction(3) fold step

// Layer widths of every block. The defaults are the full-size model; reduced()
// is the small clone used for finite-difference checks.
struct NetDims {
  std::vector<int> global_encoder{64, 128, 128, 256, 256, 128};
  std::vector<int> point_encoder{64, 64, 128, 128};
  std::vector<int> seg_hidden{512, 256, 128, 128};
  int decoder_hidden = 256;
  int classifier_hidden = 128;
  int symmetry_hidden = 128;
  std::vector<int> semantic_hidden{128, 64};
  int semantic_classes = 0;  // 0 disables the semantic head
  bool normalization = true;
  double dropout = 0.2;

  int feature() const { return global_encoder.back(); }
  int node_feature() const { return 2 * feature(); }
  int point_feature() const { return point_encoder.back(); }

  static NetDims reduced() {
    NetDims d;
    d.global_encoder = {6, 5, 4};
    d.point_encoder = {5, 4};
    d.seg_hidden = {6, 5, 4, 4};
    d.decoder_hidden = 6;
    d.classifier_hidden = 5;
    d.symmetry_hidden = 5;
    d.semantic_hidden = {5, 4};
    return d;
  }
};

// Named parameters for every block plus the widths they were built with.
template <class T>
struct ModelParams {
  NetDims dims;
  ad::ParamStore<T> store;

  ModelParams() = default;
  ModelParams(NetDims d, std::uint64_t seed) : dims(std::move(d)) { build(seed); }

  std::size_t count() const { return store.count(); }

 private:
  void dense(const std::string& name, int in, int out, std::mt19937_64& rng) {
    ad::glorot_uniform(store.add(name + "/W", in, out), rng);
    store.add(name + "/b", 1, out);
  }
  void conv_stack(const std::string& prefix, int in, const std::vector<int>& widths, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
      const std::string name = prefix + "/conv" + std::to_string(i);
      dense(name, i == 0 ? in : widths[i - 1], widths[i], rng);
      if (dims.normalization) {
        store.add(name + "/gamma", 1, widths[i]).value.setOnes();
        store.add(name + "/beta", 1, widths[i]);
      }
    }
  }

  void build(std::uint64_t seed) {
    if (dims.global_encoder.empty() || dims.point_encoder.empty() || dims.seg_hidden.empty())
      throw InvalidArgument("network stacks must not be empty");
    std::mt19937_64 rng(seed);
    const int f = dims.feature();
    const int nf = dims.node_feature();
    conv_stack("pointnet1", kInputChannels, dims.global_encoder, rng);
    conv_stack("pointnet2", kInputChannels, dims.point_encoder, rng);
    dense("decoder/fc0", nf, dims.decoder_hidden, rng);
    dense("decoder/fc1", dims.decoder_hidden, 2 * f, rng);
    dense("classifier/fc0", nf, dims.classifier_hidden, rng);
    dense("classifier/fc1", dims.classifier_hidden, kNodeClasses, rng);
    dense("symmetry/fc0", nf, dims.symmetry_hidden, rng);
    dense("symmetry/fc1", dims.symmetry_hidden, kSymmetryKinds + kSymmetryParams, rng);
    conv_stack("seg", dims.point_feature() + nf, dims.seg_hidden, rng);
    dense("seg/out", dims.seg_hidden.back(), 2, rng);
    if (dims.semantic_classes > 0) {
      int in = nf;
      for (std::size_t i = 0; i < dims.semantic_hidden.size(); ++i) {
        dense("semantic/fc" + std::to_string(i), in, dims.semantic_hidden[i], rng);
        in = dims.semantic_hidden[i];
      }
      dense("semantic/fc" + std::to_string(dims.semantic_hidden.size()), in, dims.semantic_classes, rng);
    }
  }
};

template <class T>
Matrix<T> cloud_matrix(const PointCloud& cloud) {
  Matrix<T> m(static_cast<Eigen::Index>(cloud.size()), kInputChannels);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int c = 0; c < 3; ++c) {
      m(r, c) = static_cast<T>(cloud.positions[i][c]);
      m(r, 3 + c) = static_cast<T>(cloud.normals[i][c]);
    }
  }
  return m;
}

namespace detail {

template <class T>
Var dense(Tape<T>& t, ModelParams<T>& p, const std::string& name, Var x) {
  return ad::linear(t, x, t.param(p.store.at(name + "/W")), t.param(p.store.at(name + "/b")));
}

template <class T>
Var norm_relu(Tape<T>& t, ModelParams<T>& p, const std::string& name, Var x) {
  if (p.dims.normalization)
    x = ad::point_norm(t, x, t.param(p.store.at(name + "/gamma")), t.param(p.store.at(name + "/beta")));
  return ad::relu_op(t, x);
}

template <class T>
Var conv_stack(Tape<T>& t, ModelParams<T>& p, const std::string& prefix, std::size_t layers, Var x) {
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string name = prefix + "/conv" + std::to_string(i);
    x = norm_relu(t, p, name, dense(t, p, name, x));
  }
  return x;
}

template <class T>
void check_width(Tape<T>& t, Var v, int width, const char* what) {
  const auto& m = t.value(v);
  if (m.rows() != 1 || m.cols() != width)
    throw InvalidArgument(std::string(what) + ": expected a 1x" + std::to_string(width) + " feature, got " +
                          std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

}  // namespace detail

// Global shape encoder: per-point convolutions, then max-pool over points.
template <class T>
Var encode_cloud(Tape<T>& t, ModelParams<T>& p, Var points) {
  const auto& x = t.value(points);
  if (x.rows() == 0) throw InvalidArgument("encode_cloud: empty cloud");
  if (x.cols() != kInputChannels) throw InvalidArgument("encode_cloud: expected 6 input channels");
  Var h = detail::conv_stack(t, p, "pointnet1", p.dims.global_encoder.size(), points);
  return ad::max_pool_points(t, h).pooled;
}

// Per-point encoder; row i of the result belongs to input point i.
template <class T>
Var encode_points(Tape<T>& t, ModelParams<T>& p, Var points) {
  const auto& x = t.value(points);
  if (x.rows() == 0) throw InvalidArgument("encode_points: empty cloud");
  if (x.cols() != kInputChannels) throw InvalidArgument("encode_points: expected 6 input channels");
  return detail::conv_stack(t, p, "pointnet2", p.dims.point_encoder.size(), points);
}

template <class T>
Var make_root_feature(Tape<T>& t, ModelParams<T>& p, Var shape_feature) {
  detail::check_width(t, shape_feature, p.dims.feature(), "make_root_feature");
  return ad::concat(t, shape_feature, shape_feature);
}

// Two context features for the canonical (left, right) children.
template <class T>
std::pair<Var, Var> decode_children(Tape<T>& t, ModelParams<T>& p, Var node_feature) {
  detail::check_width(t, node_feature, p.dims.node_feature(), "decode_children");
  Var h = ad::tanh_op(t, detail::dense(t, p, "decoder/fc0", node_feature));
  Var out = ad::tanh_op(t, detail::dense(t, p, "decoder/fc1", h));
  const int f = p.dims.feature();
  return {ad::slice_cols(t, out, 0, f), ad::slice_cols(t, out, f, f)};
}

// Logits over {adjacency, symmetry, leaf}.
template <class T>
Var classify_node(Tape<T>& t, ModelParams<T>& p, Var node_feature) {
  detail::check_width(t, node_feature, p.dims.node_feature(), "classify_node");
  Var h = ad::tanh_op(t, detail::dense(t, p, "classifier/fc0", node_feature));
  return detail::dense(t, p, "classifier/fc1", h);
}

// 1 x 11 row: three kind logits, then anchor(3) direction(3) fold step.
template <class T>
Var predict_symmetry(Tape<T>& t, ModelParams<T>& p, Var node_feature) {
  detail::check_width(t, node_feature, p.dims.node_feature(), "predict_symmetry");
  Var h = ad::tanh_op(t, detail::dense(t, p, "symmetry/fc0", node_feature));
  return detail::dense(t, p, "symmetry/fc1", h);
}

// N x 2 binary logits. The node feature is appended to every per-point row; the
// first layer applies its weight rows for the two halves separately, which is
// the same product as multiplying the concatenated N x 384 matrix.
template <class T>
Var segment_points(Tape<T>& t, ModelParams<T>& p, Var per_point, Var node_feature, bool train,
                   std::mt19937_64& rng) {
  const auto& pp = t.value(per_point);
  if (pp.rows() == 0) throw InvalidArgument("segment_points: no points");
  if (pp.cols() != p.dims.point_feature())
    throw InvalidArgument("segment_points: per-point width " + std::to_string(pp.cols()) + " != " +
                          std::to_string(p.dims.point_feature()));
  detail::check_width(t, node_feature, p.dims.node_feature(), "segment_points");

  const int pf = p.dims.point_feature();
  const int nf = p.dims.node_feature();
  Var w0 = t.param(p.store.at("seg/conv0/W"));
  Var b0 = t.param(p.store.at("seg/conv0/b"));
  Var point_part = ad::linear(t, per_point, ad::slice_rows(t, w0, 0, pf), b0);
  Var zero_bias = t.constant(Matrix<T>::Zero(1, p.dims.seg_hidden[0]));
  Var node_part = ad::linear(t, node_feature, ad::slice_rows(t, w0, pf, nf), zero_bias);
  Var h = detail::norm_relu(t, p, "seg/conv0", ad::add_row(t, point_part, node_part));

  const std::size_t layers = p.dims.seg_hidden.size();
  for (std::size_t i = 1; i < layers; ++i) {
    const std::string name = "seg/conv" + std::to_string(i);
    h = detail::norm_relu(t, p, name, detail::dense(t, p, name, h));
    // dropout after each of the last two hidden layers
    if (i + 2 >= layers) h = ad::dropout(t, h, p.dims.dropout, train, rng);
  }
  return detail::dense(t, p, "seg/out", h);
}

template <class T>
Var predict_semantic_label(Tape<T>& t, ModelParams<T>& p, Var leaf_feature) {
  if (p.dims.semantic_classes <= 0) throw InvalidArgument("model has no semantic head");
  detail::check_width(t, leaf_feature, p.dims.node_feature(), "predict_semantic_label");
  Var h = leaf_feature;
  const std::size_t n = p.dims.semantic_hidden.size();
  for (std::size_t i = 0; i < n; ++i) h = ad::tanh_op(t, detail::dense(t, p, "semantic/fc" + std::to_string(i), h));
  return detail::dense(t, p, "semantic/fc" + std::to_string(n), h);
}

enum class Variant { Full, NoRcf, NoPsf };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoRcf: return "no_rcf";
    case Variant::NoPsf: return "no_psf";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "no_rcf") return Variant::NoRcf;
  if (s == "no_psf") return Variant::NoPsf;
  throw InvalidArgument("unknown variant '" + s + "'");
}

// How context and part-shape features are combined at a non-root node.
//   full:   node = [rcf, psf], classifier sees node
//   no_rcf: node = [psf, psf] everywhere; the decoder is unused
//   no_psf: node = [rcf, psf], classifier sees [rcf, rcf]
struct Wiring {
  Variant variant = Variant::Full;

  bool uses_context() const { return variant != Variant::NoRcf; }

  template <class T>
  Var node_feature(Tape<T>& t, Var rcf, Var psf) const {
    return variant == Variant::NoRcf ? ad::concat(t, psf, psf) : ad::concat(t, rcf, psf);
  }

  template <class T>
  Var classifier_input(Tape<T>& t, Var rcf, Var node) const {
    return variant == Variant::NoPsf ? ad::concat(t, rcf, rcf) : node;
  }
};

inline Wiring build_ablation(Variant v) { return Wiring{v}; }

// Interprets a raw symmetry-head row as a usable spec: kind by argmax,
// normalized direction, fold rounded to an integer >= 2, positive step.
template <class T>
SymmetrySpec decode_symmetry(const Matrix<T>& row) {
  if (row.rows() != 1 || row.cols() != kSymmetryKinds + kSymmetryParams)
    throw InvalidArgument("decode_symmetry: expected a 1x11 row");
  Eigen::Index kind = 0;
  row.leftCols(kSymmetryKinds).row(0).maxCoeff(&kind);
  SymmetrySpec s;
  s.kind = static_cast<SymmetryKind>(kind);
  for (int c = 0; c < 3; ++c) {
    s.anchor[c] = static_cast<double>(row(0, 3 + c));
    s.direction[c] = static_cast<double>(row(0, 6 + c));
  }
  if (!(s.direction.norm() > 1e-9)) s.direction = Vec3::UnitZ();
  const double fold = std::round(static_cast<double>(row(0, 9)));
  s.fold = fold < 2.0 ? 2 : (fold > 64.0 ? 64 : static_cast<int>(fold));
  s.step = std::abs(static_cast<double>(row(0, 10)));
  if (s.kind == SymmetryKind::Translational && !(s.step > 1e-6)) s.step = 1e-6;
  return canonicalize(s);
}

// Regression target and mask over the 8 continuous symmetry values; only the
// entries that define the given kind are supervised.
template <class T>
std::pair<Matrix<T>, Matrix<T>> symmetry_target(const SymmetrySpec& s) {
  Matrix<T> target = Matrix<T>::Zero(1, kSymmetryParams);
  Matrix<T> mask = Matrix<T>::Zero(1, kSymmetryParams);
  for (int c = 0; c < 3; ++c) {
    target(0, c) = static_cast<T>(s.anchor[c]);
    target(0, 3 + c) = static_cast<T>(s.direction[c]);
  }
  target(0, 6) = static_cast<T>(s.fold);
  target(0, 7) = static_cast<T>(s.step);
  const bool anchor = s.kind != SymmetryKind::Translational;
  const bool fold = s.kind != SymmetryKind::Reflective;
  const bool step = s.kind == SymmetryKind::Translational;
  for (int c = 0; c < 3; ++c) {
    mask(0, c) = anchor ? T(1) : T(0);
    mask(0, 3 + c) = T(1);
  }
  mask(0, 6) = fold ? T(1) : T(0);
  mask(0, 7) = step ? T(1) : T(0);
  return {target, mask};
}

}  // namespace recseg::nets
