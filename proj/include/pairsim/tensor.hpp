#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "pairsim/errors.hpp"
#include "pairsim/prng.hpp"

namespace pairsim {

class Tape;

// Dense row-major tensor of 64-bit floats. Copies share storage; ops always
// allocate fresh outputs, so shared buffers are never mutated behind a
// reader's back (the optimizer mutates parameter storage in place, by
// design, between tapes).
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(count(shape_), fill)) {
    for (std::size_t d : shape_)
      if (d == 0) throw ShapeError("tensor with zero-length dimension");
  }

  Tensor(std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(std::move(values))) {
    if (count(shape_) != data_->size())
      throw ShapeError("tensor data length does not match shape");
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  // Values drawn uniformly from [-scale, +scale] by SplitMix64; identical
  // (shape, seed) gives a bitwise-identical tensor.
  static Tensor seeded(std::vector<std::size_t> shape, std::uint64_t seed, double scale) {
    if (scale <= 0.0) throw ShapeError("seeded init requires scale > 0");
    Tensor t(std::move(shape));
    SplitMix64 rng(seed);
    for (double& v : *t.data_) v = rng.uniform_signed(scale);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  const std::vector<double>& values() const { return *data_; }
  std::vector<double>& values() { return *data_; }
  const std::shared_ptr<std::vector<double>>& storage() const { return data_; }

  double at(std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t i, std::size_t j) const { return (*data_)[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return (*data_)[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& at(std::size_t i) { return (*data_)[i]; }
  double& at(std::size_t i, std::size_t j) { return (*data_)[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return (*data_)[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Scalar access; size()==1 regardless of rank.
  double value() const {
    if (size() != 1) throw ShapeError("value() on tensor with " + std::to_string(size()) + " elements");
    return (*data_)[0];
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    return t;
  }

  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  bool tracked() const { return tape_ != nullptr && node_ >= 0; }

  // Same storage, registered as a differentiable leaf on `tape`.
  Tensor attached(Tape& tape) const;

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ']';
    return os.str();
  }

 private:
  friend class Tape;
  friend Tensor make_tracked(Tape* tape, std::vector<std::size_t> shape, std::vector<double> values,
                             std::vector<int> parents,
                             std::function<void(const double*, const std::vector<double*>&)> backward);

  std::vector<std::size_t> shape_;
  std::shared_ptr<std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Reverse-mode tape. Nodes are appended in forward order, so parents always
// precede children; backward() is a single reverse sweep. A tape supports
// exactly one backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(const double* out_grad, const std::vector<double*>& parent_grads)>;

  int add_leaf(std::size_t size) {
    nodes_.push_back(Node{size, {}, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int add_node(std::size_t size, std::vector<int> parents, BackwardFn fn) {
    nodes_.push_back(Node{size, std::move(parents), std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::size_t node_count() const { return nodes_.size(); }

  // Gradient of `loss` with respect to every node, indexed by node id.
  // Nodes off the loss path keep empty buffers (treated as zero).
  std::vector<std::vector<double>> backward(const Tensor& loss) {
    if (loss.tape() != this || !loss.tracked())
      throw ShapeError("backward: loss is not on this tape");
    if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar");
    if (used_) throw ShapeError("backward: tape already consumed");
    used_ = true;

    std::vector<std::vector<double>> grads(nodes_.size());
    grads[loss.node()].assign(1, 1.0);

    for (int i = loss.node(); i >= 0; --i) {
      const Node& n = nodes_[i];
      if (grads[i].empty() || !n.backward) continue;
      std::vector<double*> parent_grads(n.parents.size(), nullptr);
      for (std::size_t p = 0; p < n.parents.size(); ++p) {
        int pid = n.parents[p];
        if (pid < 0) continue;  // untracked constant input
        if (grads[pid].empty()) grads[pid].assign(nodes_[pid].size, 0.0);
        parent_grads[p] = grads[pid].data();
      }
      n.backward(grads[i].data(), parent_grads);
    }
    return grads;
  }

  bool consumed() const { return used_; }

 private:
  struct Node {
    std::size_t size;
    std::vector<int> parents;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool used_ = false;
};

inline Tensor Tensor::attached(Tape& tape) const {
  Tensor t = *this;
  t.tape_ = &tape;
  t.node_ = tape.add_leaf(size());
  return t;
}

// Internal op helper: build a result tensor, tracked when any parent is.
inline Tensor make_tracked(Tape* tape, std::vector<std::size_t> shape, std::vector<double> values,
                           std::vector<int> parents, Tape::BackwardFn backward) {
  Tensor t(std::move(shape), std::move(values));
  if (tape != nullptr) {
    t.tape_ = tape;
    t.node_ = tape->add_node(t.size(), std::move(parents), std::move(backward));
  }
  return t;
}

// The common tape of the inputs (nullptr when untracked); mixing two live
// tapes is a caller bug.
inline Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->tracked()) continue;
    if (tape != nullptr && tape != t->tape())
      throw ShapeError("operands belong to different tapes");
    tape = t->tape();
  }
  return tape;
}

inline int node_of(const Tensor& t, Tape* tape) {
  return (tape != nullptr && t.tape() == tape) ? t.node() : -1;
}

}  // namespace pairsim
