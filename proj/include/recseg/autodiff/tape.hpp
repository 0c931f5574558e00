#pragma once

#include <functional>
#include <limits>
#include <unordered_map>
#include <vector>

#include "recseg/autodiff/tensor.hpp"

namespace recseg::ad {

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const { return id != std::numeric_limits<std::size_t>::max(); }
};

// Records executed ops in order. Reverse traversal of the record is a valid
// topological order because an op can only consume values created before it.
template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix<T>& out_grad)>;

  // With grad disabled nothing is differentiable and no closures are kept.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Var constant(Matrix<T> value) { return push(std::move(value), false, nullptr); }

  // Differentiable leaf that is not a registered parameter (inputs under test).
  Var leaf(Matrix<T> value) { return push(std::move(value), grad_enabled_, nullptr); }

  // Binds a parameter; repeated binds return the same node so shared weights
  // accumulate a single gradient per tape.
  Var param(Tensor<T>& t) {
    auto it = params_.find(&t);
    if (it != params_.end()) return Var{it->second};
    Var v = push(t.value, grad_enabled_ && t.requires_grad, nullptr);
    nodes_[v.id].param = &t;
    params_.emplace(&t, v.id);
    return v;
  }

  Var record(Matrix<T> value, std::initializer_list<Var> inputs, Backward back, const char* op) {
    require_finite(value, op);
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_.at(in.id).needs_grad;
    return push(std::move(value), needs, needs ? std::move(back) : nullptr);
  }

  const Matrix<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  // Valid only during or after backward().
  Matrix<T>& grad(Var v) { return nodes_.at(v.id).grad; }
  const Matrix<T>& grad(Var v) const { return nodes_.at(v.id).grad; }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1, runs every recorded backward in reverse and
  // adds the resulting parameter gradients into Tensor::grad.
  void backward(Var loss) {
    const auto& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1) throw InvalidArgument("backward needs a scalar loss");
    for (auto& n : nodes_) {
      if (n.needs_grad) n.grad.setZero(n.value.rows(), n.value.cols());
    }
    if (!nodes_[loss.id].needs_grad) return;
    nodes_[loss.id].grad(0, 0) = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.back) n.back(*this, n.grad);
    }
    for (auto& n : nodes_) {
      if (n.param && n.needs_grad) {
        require_finite(n.grad, "backward");
        n.param->grad += n.grad;
      }
    }
  }

  void clear() {
    nodes_.clear();
    params_.clear();
  }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool needs_grad = false;
    Tensor<T>* param = nullptr;
    Backward back;
  };

  Var push(Matrix<T> value, bool needs, Backward back) {
    nodes_.push_back(Node{std::move(value), {}, needs, nullptr, std::move(back)});
    return Var{nodes_.size() - 1};
  }

  bool grad_enabled_ = true;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, std::size_t> params_;
};

}  // namespace recseg::ad
