#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "recseg/autodiff/tape.hpp"

namespace recseg::ad {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;  // "<tensor>[<flat index>]"
  std::size_t checked = 0;

  bool passed(double tol) const { return max_rel_err <= tol; }
};

// Gradients below the floor are compared in absolute terms; central differences
// carry roughly 1e-10 of roundoff at h = 1e-5, so exact zeros (a bias feeding a
// normalization) would otherwise read as large relative errors.
inline constexpr double kGradFloor = 1e-5;

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
  return std::abs(analytic - numeric) / denom;
}

// Compares reverse-mode parameter gradients with central differences.
// loss_fn builds the scalar loss on the tape it is given. When
// max_entries > 0 only that many randomly chosen entries per tensor are probed.
template <class LossFn>
GradCheckReport check_param_gradients(ParamStore<double>& params, LossFn&& loss_fn, double h = 1e-5,
                                      std::size_t max_entries = 0, std::uint64_t seed = 7) {
  params.zero_grad();
  {
    Tape<double> tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&] {
    Tape<double> tape;
    return tape.value(loss_fn(tape))(0, 0);
  };
  GradCheckReport report;
  std::mt19937_64 rng(seed);
  for (auto& [name, p] : params) {
    if (!p.requires_grad) continue;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(p.value.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    if (max_entries > 0 && idx.size() > max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries);
    }
    for (Eigen::Index i : idx) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + h;
      const double up = eval();
      x = saved - h;
      const double down = eval();
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(p.grad.data()[i], numeric);
      ++report.checked;
      if (err >= report.max_rel_err) {
        report.max_rel_err = err;
        report.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

// Same comparison for a differentiable input matrix bound with Tape::leaf.
template <class LossFn>
GradCheckReport check_input_gradient(Matrix<double> input, LossFn&& loss_fn, double h = 1e-5) {
  Matrix<double> analytic;
  {
    Tape<double> tape;
    Var x = tape.leaf(input);
    Var loss = loss_fn(tape, x);
    tape.backward(loss);
    analytic = tape.grad(x);
  }
  GradCheckReport report;
  for (Eigen::Index i = 0; i < input.size(); ++i) {
    const double saved = input.data()[i];
    auto eval = [&](double v) {
      input.data()[i] = v;
      Tape<double> tape;
      Var x = tape.leaf(input);
      return tape.value(loss_fn(tape, x))(0, 0);
    };
    const double numeric = (eval(saved + h) - eval(saved - h)) / (2.0 * h);
    input.data()[i] = saved;
    const double err = relative_error(analytic.data()[i], numeric);
    ++report.checked;
    if (err >= report.max_rel_err) {
      report.max_rel_err = err;
      report.worst = "input[" + std::to_string(i) + "]";
    }
  }
  return report;
}

}  // namespace recseg::ad
