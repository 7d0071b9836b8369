#pragma once

#include <map>
#include <string>

#include "pairsim/errors.hpp"
#include "pairsim/tensor.hpp"

namespace pairsim {

using ParamMap = std::map<std::string, Tensor>;

// Named trainable tensors. std::map keeps iteration order deterministic,
// which checkpointing and the optimizer rely on.
class ParameterSet {
 public:
  void add(const std::string& name, Tensor t) {
    if (params_.count(name)) throw ShapeError("duplicate parameter name: " + name);
    params_.emplace(name, std::move(t));
  }

  Tensor& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ShapeError("unknown parameter: " + name);
    return it->second;
  }
  const Tensor& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ShapeError("unknown parameter: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  std::size_t count() const { return params_.size(); }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
  }

  ParamMap& map() { return params_; }
  const ParamMap& map() const { return params_; }

  // Leaf-attach every parameter to `tape`, in name order.
  ParamMap attached(Tape& tape) const {
    ParamMap live;
    for (const auto& [name, t] : params_) live.emplace(name, t.attached(tape));
    return live;
  }

  ParameterSet clone() const {
    ParameterSet out;
    for (const auto& [name, t] : params_) out.add(name, t.clone());
    return out;
  }

 private:
  ParamMap params_;
};

}  // namespace pairsim
