#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "recseg/autodiff/tensor.hpp"

namespace recseg::ad {

template <class T>
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix<T>> m;  // first moments, parameter order
  std::vector<Matrix<T>> v;  // second moments

  void init(const ParamStore<T>& params) {
    m.clear();
    v.clear();
    for (const auto& [name, p] : params) {
      m.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
      v.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    }
    step = 0;
  }
};

// One bias-corrected Adam update from the gradients stored in params.
template <class T>
void adam_step(ParamStore<T>& params, AdamState<T>& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw InvalidArgument("adam_step: state does not match parameter count");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T step_size = static_cast<T>(state.lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(state.eps);
  std::size_t i = 0;
  for (auto& [name, p] : params) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols())
      throw InvalidArgument("adam_step: moment shape mismatch for '" + name + "'");
    ++i;
    if (!p.requires_grad) continue;
    m = b1 * m + (T(1) - b1) * p.grad;
    v = b2 * v + (T(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= step_size * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
  }
}

}  // namespace recseg::ad
