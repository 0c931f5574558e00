#pragma once

#include <random>
#include <string>
#include <vector>

#include "recseg/autodiff/gradcheck.hpp"
#include "recseg/data.hpp"
#include "recseg/model.hpp"

// Finite-difference checks over every op and network block, in double precision
// on a width-reduced model.
namespace recseg::verify {

using ad::GradCheckReport;
using ad::Matrix;
using ad::Tape;
using ad::Var;

struct BlockCheck {
  std::string name;
  GradCheckReport report;
};

namespace detail {

inline Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> U(-scale, scale);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = U(rng);
  return m;
}

// Combines input and parameter checks into one report (worst of both).
inline GradCheckReport worst(GradCheckReport a, const GradCheckReport& b) {
  if (b.max_rel_err > a.max_rel_err) {
    a.max_rel_err = b.max_rel_err;
    a.worst = b.worst;
  }
  a.checked += b.checked;
  return a;
}

}  // namespace detail

inline std::vector<BlockCheck> gradient_suite(std::uint64_t seed = 11, double h = 1e-5) {
  std::vector<BlockCheck> out;
  std::mt19937_64 rng(seed);
  using detail::random_matrix;

  // --- single ops ---
  {
    ad::ParamStore<double> ps;
    ps.add("W", 3, 2).value = random_matrix(3, 2, rng);
    ps.add("b", 1, 2).value = random_matrix(1, 2, rng);
    const Matrix<double> x = random_matrix(4, 3, rng);
    const Matrix<double> target = random_matrix(4, 2, rng);
    auto loss = [&](Tape<double>& t, Var xv) {
      return ad::mse(t, ad::linear(t, xv, t.param(ps.at("W")), t.param(ps.at("b"))), target);
    };
    auto a = ad::check_param_gradients(ps, [&](Tape<double>& t) { return loss(t, t.constant(x)); }, h);
    out.push_back({"linear", detail::worst(a, ad::check_input_gradient(x, loss, h))});
  }
  {
    ad::ParamStore<double> ps;
    ps.add("W", 5, 3).value = random_matrix(5, 3, rng);
    ps.add("b", 1, 3).value = random_matrix(1, 3, rng);
    const Matrix<double> x = random_matrix(7, 5, rng);
    const Matrix<double> target = random_matrix(7, 3, rng);
    auto loss = [&](Tape<double>& t, Var xv) {
      return ad::mse(t, ad::point_shared_linear(t, xv, t.param(ps.at("W")), t.param(ps.at("b"))), target);
    };
    auto a = ad::check_param_gradients(ps, [&](Tape<double>& t) { return loss(t, t.constant(x)); }, h);
    out.push_back({"point_shared_linear", detail::worst(a, ad::check_input_gradient(x, loss, h))});
  }
  {
    const Matrix<double> x = random_matrix(16, 8, rng);
    const Matrix<double> target = random_matrix(1, 8, rng);
    out.push_back({"max_pool_points", ad::check_input_gradient(x, [&](Tape<double>& t, Var v) {
                     return ad::mse(t, ad::max_pool_points(t, v).pooled, target);
                   }, h)});
  }
  {
    const Matrix<double> x = random_matrix(5, 3, rng, 2.0);
    const std::vector<int> tgt{0, 2, 1, 1, 0};
    out.push_back({"softmax_cross_entropy", ad::check_input_gradient(x, [&](Tape<double>& t, Var v) {
                     return ad::softmax_cross_entropy(t, v, std::span<const int>(tgt));
                   }, h)});
  }
  {
    const Matrix<double> x = random_matrix(3, 4, rng);
    const Matrix<double> target = random_matrix(3, 4, rng);
    Matrix<double> mask = Matrix<double>::Ones(3, 4);
    mask(0, 1) = mask(2, 3) = 0;
    out.push_back({"mse", ad::check_input_gradient(x, [&](Tape<double>& t, Var v) { return ad::mse(t, v, target); }, h)});
    out.push_back({"masked_mse", ad::check_input_gradient(x, [&](Tape<double>& t, Var v) {
                     return ad::masked_mse(t, v, target, mask);
                   }, h)});
  }
  {
    const Matrix<double> x = random_matrix(4, 6, rng);
    const Matrix<double> target = random_matrix(4, 9, rng);
    out.push_back({"tanh_relu_concat_slice", ad::check_input_gradient(x, [&](Tape<double>& t, Var v) {
                     Var a = ad::tanh_op(t, v);
                     Var b = ad::relu_op(t, ad::slice_cols(t, v, 1, 3));
                     Var c = ad::concat(t, a, b);
                     Var d = ad::add(t, ad::scale(t, ad::slice_rows(t, c, 0, 4), 0.5), c);
                     return ad::mse(t, d, target);
                   }, h)});
  }
  {
    const Matrix<double> x = random_matrix(6, 5, rng);
    const Matrix<double> target = random_matrix(6, 5, rng);
    out.push_back({"dropout", ad::check_input_gradient(x, [&](Tape<double>& t, Var v) {
                     std::mt19937_64 drop(5);
                     return ad::mse(t, ad::dropout(t, v, 0.2, true, drop), target);
                   }, h)});
  }
  {
    ad::ParamStore<double> ps;
    ps.add("gamma", 1, 4).value = random_matrix(1, 4, rng);
    ps.add("beta", 1, 4).value = random_matrix(1, 4, rng);
    const Matrix<double> x = random_matrix(9, 4, rng);
    const Matrix<double> target = random_matrix(9, 4, rng);
    auto loss = [&](Tape<double>& t, Var xv) {
      return ad::mse(t, ad::point_norm(t, xv, t.param(ps.at("gamma")), t.param(ps.at("beta"))), target);
    };
    auto a = ad::check_param_gradients(ps, [&](Tape<double>& t) { return loss(t, t.constant(x)); }, h);
    out.push_back({"point_norm", detail::worst(a, ad::check_input_gradient(x, loss, h))});
  }
  {
    const Matrix<double> x = random_matrix(5, 1, rng);
    out.push_back({"sum", ad::check_input_gradient(x, [&](Tape<double>& t, Var v) {
                     return ad::sum(t, ad::tanh_op(t, v));
                   }, h)});
  }

  // --- network blocks on the reduced model ---
  nets::NetDims dims = nets::NetDims::reduced();
  dims.semantic_classes = 7;
  nets::ModelParams<double> p(dims, seed);
  const auto record = data::generate_shape("chair", seed, 64);
  const Matrix<double> cloud = nets::cloud_matrix<double>(record.cloud);
  const int nf = dims.node_feature();
  const Matrix<double> node_in = random_matrix(1, nf, rng);

  auto block = [&](const std::string& name, auto&& fn) {
    out.push_back({name, ad::check_param_gradients(p.store, fn, h)});
  };
  block("encode_cloud", [&](Tape<double>& t) {
    return ad::mse(t, nets::encode_cloud(t, p, t.constant(cloud)), Matrix<double>(Matrix<double>::Zero(1, dims.feature())));
  });
  block("encode_points", [&](Tape<double>& t) {
    Var y = nets::encode_points(t, p, t.constant(cloud));
    return ad::mse(t, y, Matrix<double>(Matrix<double>::Zero(cloud.rows(), dims.point_feature())));
  });
  block("decode_children", [&](Tape<double>& t) {
    auto [l, r] = nets::decode_children(t, p, t.constant(node_in));
    return ad::add(t, ad::sum(t, l), ad::mse(t, r, Matrix<double>(Matrix<double>::Zero(1, dims.feature()))));
  });
  block("classify_node", [&](Tape<double>& t) {
    const int tgt[1] = {1};
    return ad::softmax_cross_entropy(t, nets::classify_node(t, p, t.constant(node_in)), std::span<const int>(tgt, 1));
  });
  block("predict_symmetry", [&](Tape<double>& t) {
    return ad::sum(t, ad::tanh_op(t, nets::predict_symmetry(t, p, t.constant(node_in))));
  });
  block("segment_points", [&](Tape<double>& t) {
    std::mt19937_64 drop(3);
    Var pp = nets::encode_points(t, p, t.constant(cloud));
    Var s = nets::segment_points(t, p, pp, t.constant(node_in), true, drop);
    std::vector<int> labels(static_cast<std::size_t>(cloud.rows()));
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = record.instance_label[i] == 0 ? 0 : 1;
    return ad::softmax_cross_entropy(t, s, std::span<const int>(labels));
  });
  block("predict_semantic_label", [&](Tape<double>& t) {
    const int tgt[1] = {4};
    return ad::softmax_cross_entropy(t, nets::predict_semantic_label(t, p, t.constant(node_in)),
                                     std::span<const int>(tgt, 1));
  });

  // --- the whole recursive loss, per wiring ---
  const Hierarchy gt = data::record_hierarchy(record);
  const auto sem = record.part_semantics();
  for (auto v : {nets::Variant::Full, nets::Variant::NoRcf, nets::Variant::NoPsf}) {
    const nets::Wiring w = nets::build_ablation(v);
    block(std::string("teacher_forced_loss/") + nets::to_string(v), [&](Tape<double>& t) {
      std::mt19937_64 drop(9);
      model::LossConfig lc;
      lc.train = true;
      lc.part_semantics = sem;
      return model::teacher_forced_loss(t, p, record.cloud, gt, w, lc, drop).objective;
    });
  }
  return out;
}

}  // namespace recseg::verify
