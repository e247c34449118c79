#include "pcb/parameters.hpp"

#include <cmath>

#include "pcb/error.hpp"

namespace pcb {

void Gradients::scale(double factor) {
  for (auto& g : grads_)
    for (double& v : g.values()) v *= factor;
}

void Gradients::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.size() != size()) throw DimensionError("gradient sets differ in size");
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
  return *this;
}

double Gradients::squared_norm() const {
  double total = 0.0;
  for (const auto& g : grads_)
    for (double v : g.values()) total += v * v;
  return total;
}

ParamId ParameterStore::add(std::string name, Tensor init) {
  if (index_.count(name)) throw UsageError("duplicate parameter name: " + name);
  const ParamId id = values_.size();
  index_.emplace(name, id);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return id;
}

std::optional<ParamId> ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Gradients ParameterStore::zero_gradients() const {
  std::vector<Tensor> grads;
  grads.reserve(values_.size());
  for (const auto& v : values_) grads.emplace_back(v.shape(), 0.0);
  return Gradients(std::move(grads));
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

}  // namespace pcb
