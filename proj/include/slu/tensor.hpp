#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "slu/errors.hpp"

namespace slu {

using Index = int64_t;

inline std::string shape_str(const std::vector<Index>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

template <class S>
struct TensorData {
  std::vector<Index> shape;
  std::vector<S> v;  // values, row-major
  std::vector<S> g;  // gradient; empty until touched by backward
  bool requires_grad = false;

  Index numel() const { return static_cast<Index>(v.size()); }
};

template <class S>
inline void ensure_grad(TensorData<S>& d) {
  if (d.g.empty()) d.g.assign(d.v.size(), S(0));
}

// Value-semantic handle onto shared storage. All model math is 2-D
// (matrices, row vectors [1xd], scalars [1x1]).
template <class S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<Index> shape) {
    Tensor t;
    t.d_ = std::make_shared<TensorData<S>>();
    Index n = 1;
    for (Index x : shape) n *= x;
    t.d_->shape = std::move(shape);
    t.d_->v.assign(static_cast<size_t>(n), S(0));
    return t;
  }

  static Tensor full(std::vector<Index> shape, S fill) {
    Tensor t = zeros(std::move(shape));
    for (auto& x : t.d_->v) x = fill;
    return t;
  }

  static Tensor scalar(S v) {
    Tensor t = zeros({1, 1});
    t.d_->v[0] = v;
    return t;
  }

  static Tensor from(std::vector<Index> shape, std::vector<S> vals) {
    Index n = 1;
    for (Index x : shape) n *= x;
    if (n != static_cast<Index>(vals.size()))
      throw ShapeError("from(): " + shape_str(shape) + " incompatible with " +
                       std::to_string(vals.size()) + " values");
    Tensor t;
    t.d_ = std::make_shared<TensorData<S>>();
    t.d_->shape = std::move(shape);
    t.d_->v = std::move(vals);
    return t;
  }

  bool defined() const { return static_cast<bool>(d_); }
  const std::vector<Index>& shape() const { return d_->shape; }
  Index numel() const { return d_->numel(); }

  Index rows() const {
    if (d_->shape.size() != 2) throw ShapeError("rows(): tensor is not 2-D " + shape_str(d_->shape));
    return d_->shape[0];
  }
  Index cols() const {
    if (d_->shape.size() != 2) throw ShapeError("cols(): tensor is not 2-D " + shape_str(d_->shape));
    return d_->shape[1];
  }

  S* data() { return d_->v.data(); }
  const S* data() const { return d_->v.data(); }

  S& operator()(Index r, Index c) { return d_->v[static_cast<size_t>(r * cols() + c)]; }
  S operator()(Index r, Index c) const { return d_->v[static_cast<size_t>(r * cols() + c)]; }

  S item() const {
    if (numel() != 1) throw ShapeError("item(): tensor has " + std::to_string(numel()) + " elements");
    return d_->v[0];
  }

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    d_->requires_grad = rg;
    return *this;
  }

  // nullptr while no gradient has been accumulated
  const S* grad_data() const { return d_->g.empty() ? nullptr : d_->g.data(); }
  S* grad_data() { return d_->g.empty() ? nullptr : d_->g.data(); }
  bool has_grad() const { return !d_->g.empty(); }
  void alloc_grad() { ensure_grad(*d_); }
  void zero_grad() { d_->g.clear(); }

  Tensor clone() const {
    Tensor t;
    t.d_ = std::make_shared<TensorData<S>>();
    t.d_->shape = d_->shape;
    t.d_->v = d_->v;
    t.d_->requires_grad = d_->requires_grad;
    return t;
  }

  bool all_finite() const {
    for (S x : d_->v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  std::shared_ptr<TensorData<S>> impl() const { return d_; }

 private:
  std::shared_ptr<TensorData<S>> d_;
};

// Per-forward-pass tape. Ops append backward closures while a tape is
// active on the current thread; replay in reverse order accumulates
// gradients. Nothing is cached across steps.
template <class S>
class Tape {
 public:
  Tape() : prev_(current_ref()) { current_ref() = this; }
  ~Tape() { current_ref() = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_ref(); }
  static bool active() { return current_ref() != nullptr; }

  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
  size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape.
  void backward(Tensor<S>& loss) {
    if (loss.numel() != 1) throw ShapeError("backward(): loss must be scalar");
    loss.alloc_grad();
    loss.grad_data()[0] = S(1);
    for (size_t i = nodes_.size(); i > 0; --i) nodes_[i - 1]();
  }

 private:
  static Tape*& current_ref() {
    thread_local Tape* cur = nullptr;
    return cur;
  }
  std::vector<std::function<void()>> nodes_;
  Tape* prev_;
};

}  // namespace slu
