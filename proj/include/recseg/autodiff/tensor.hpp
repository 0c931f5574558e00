#pragma once

#include <Eigen/Dense>

#include <array>
#include <deque>
#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "recseg/error.hpp"

namespace recseg::ad {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Every op works on rank-2 values; vectors are 1 x C rows and scalars 1 x 1.
template <class T>
struct Tensor {
  Matrix<T> value;
  Matrix<T> grad;
  bool requires_grad = true;

  Tensor() = default;
  Tensor(Eigen::Index rows, Eigen::Index cols, bool trainable = true)
      : value(Matrix<T>::Zero(rows, cols)), grad(Matrix<T>::Zero(rows, cols)), requires_grad(trainable) {}
  explicit Tensor(Matrix<T> v, bool trainable = true)
      : value(std::move(v)), grad(Matrix<T>::Zero(value.rows(), value.cols())), requires_grad(trainable) {}

  std::array<std::size_t, 2> shape() const {
    return {static_cast<std::size_t>(value.rows()), static_cast<std::size_t>(value.cols())};
  }
  std::size_t numel() const { return static_cast<std::size_t>(value.size()); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <class T>
void require_finite(const Matrix<T>& m, const char* where) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite value produced by ") + where);
}

// Named trainable tensors in insertion order. The order fixes the checkpoint
// layout and the flattening used by the optimizer.
template <class T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.count(name)) throw InvalidArgument("duplicate parameter name '" + name + "'");
    index_[name] = entries_.size();
    entries_.emplace_back(name, Tensor<T>(rows, cols));
    return entries_.back().second;
  }

  Tensor<T>& at(const std::string& name) { return entries_.at(lookup(name)).second; }
  const Tensor<T>& at(const std::string& name) const { return entries_.at(lookup(name)).second; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

  // Same names and shapes, values converted to U.
  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, t] : entries_) {
      auto& dst = out.add(name, t.value.rows(), t.value.cols());
      dst.value = t.value.template cast<U>();
    }
    return out;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
    return it->second;
  }

  // deque keeps references returned by add() valid.
  std::deque<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Glorot-uniform weights, zero biases.
template <class T>
void glorot_uniform(Tensor<T>& w, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(w.value.rows());
  const double fan_out = static_cast<double>(w.value.cols());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < w.value.size(); ++i) w.value.data()[i] = static_cast<T>(dist(rng));
}

}  // namespace recseg::ad
