#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mdfn/error.hpp"
#include "mdfn/rng.hpp"
#include "mdfn/tensor.hpp"

namespace mdfn::nn {

// Named trainable parameters. Nodes live here, outside any tape, so they
// survive tape clears between steps; iteration order is the sorted name
// order, which fixes the serialization layout.
template <typename T>
class ParamRegistry {
 public:
  explicit ParamRegistry(uint64_t seed = 0) : seed_(seed) {}

  uint64_t seed() const { return seed_; }

  // Registers a fresh Glorot-uniform parameter. fan_in/fan_out default to the
  // matrix dimensions; biases should pass explicit fans of the layer they
  // belong to (or use zeros()).
  Tensor<T> glorot(const std::string& name, Shape s, int fan_in = -1,
                   int fan_out = -1) {
    Tensor<T> t = insert(name, s, true);
    if (fan_in < 0) fan_in = s.rows;
    if (fan_out < 0) fan_out = s.cols;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    SplitMix64 rng(seed_ ^ fnv1a64(name));
    for (auto& v : t.val()) v = static_cast<T>(rng.uniform(-limit, limit));
    return t;
  }

  Tensor<T> zeros_param(const std::string& name, Shape s) {
    return insert(name, s, true);
  }

  Tensor<T> ones_param(const std::string& name, Shape s) {
    Tensor<T> t = insert(name, s, true);
    for (auto& v : t.val()) v = T(1);
    return t;
  }

  // Non-trainable named buffer (e.g. a frozen embedding table).
  Tensor<T> buffer(const std::string& name, Shape s) {
    return insert(name, s, false);
  }

  bool has(const std::string& name) const { return nodes_.count(name) > 0; }

  Tensor<T> get(const std::string& name) const {
    auto it = nodes_.find(name);
    if (it == nodes_.end())
      fail(ErrorCode::ConfigError, "unknown parameter: " + name);
    return Tensor<T>(it->second.get());
  }

  void zero_grad() {
    for (auto& [name, n] : nodes_)
      if (n->needs_grad) std::fill(n->grad.begin(), n->grad.end(), T(0));
  }

  // Sorted (name, tensor) view over trainable parameters only.
  std::vector<std::pair<std::string, Tensor<T>>> trainable() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (const auto& [name, n] : nodes_)
      if (n->needs_grad) out.emplace_back(name, Tensor<T>(n.get()));
    return out;
  }

  // Sorted view over everything, buffers included.
  std::vector<std::pair<std::string, Tensor<T>>> all() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (const auto& [name, n] : nodes_) out.emplace_back(name, Tensor<T>(n.get()));
    return out;
  }

  size_t count() const { return nodes_.size(); }

  size_t value_count() const {
    size_t total = 0;
    for (const auto& [name, n] : nodes_) total += n->val.size();
    return total;
  }

 private:
  Tensor<T> insert(const std::string& name, Shape s, bool trainable) {
    if (nodes_.count(name))
      fail(ErrorCode::ConfigError, "duplicate parameter: " + name);
    auto n = std::make_unique<Node<T>>();
    n->shape = s;
    n->needs_grad = trainable;
    n->alloc(trainable);
    Node<T>* raw = n.get();
    nodes_.emplace(name, std::move(n));
    return Tensor<T>(raw);
  }

  uint64_t seed_;
  std::map<std::string, std::unique_ptr<Node<T>>> nodes_;
};

}  // namespace mdfn::nn
