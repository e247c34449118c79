#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pcb/rng.hpp"
#include "pcb/tensor.hpp"

namespace pcb {

using ParamId = std::size_t;

// Gradient buffers aligned with a ParameterStore.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Tensor> grads) : grads_(std::move(grads)) {}

  std::size_t size() const { return grads_.size(); }
  Tensor& operator[](ParamId id) { return grads_[id]; }
  const Tensor& operator[](ParamId id) const { return grads_[id]; }

  void scale(double factor);
  void zero();
  Gradients& operator+=(const Gradients& other);
  double squared_norm() const;

 private:
  std::vector<Tensor> grads_;
};

// Registry of named trainable tensors. Insertion order is stable and is the
// order used for checkpoints and gradient reduction.
class ParameterStore {
 public:
  ParamId add(std::string name, Tensor init);

  std::size_t size() const { return values_.size(); }
  const Tensor& value(ParamId id) const { return values_[id]; }
  Tensor& value(ParamId id) { return values_[id]; }
  const std::string& name(ParamId id) const { return names_[id]; }
  std::optional<ParamId> find(const std::string& name) const;
  std::size_t scalar_count() const;

  Gradients zero_gradients() const;

  bool operator==(const ParameterStore& other) const {
    return names_ == other.names_ && values_ == other.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, ParamId> index_;
};

// Glorot/Xavier uniform initialisation for a (fan_in x fan_out) matrix.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor normal_init(Shape shape, double stddev, Rng& rng);

}  // namespace pcb
