#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcb/autodiff.hpp"
#include "pcb/cohort.hpp"
#include "pcb/model.hpp"

namespace pcbtest {

using pcb::Tape;
using pcb::Tensor;
using pcb::Var;

// |a - n| / max(|a|, |n|, 1e-6); the floor keeps finite-difference round-off
// on near-zero gradients from dominating.
double relative_error(double analytic, double numeric);

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

using InputGraph = std::function<Var(Tape&, std::span<const Var>)>;
// Compares the tape gradient of a scalar graph w.r.t. every input element
// with central differences of step h.
GradCheck check_input_gradients(const InputGraph& graph, const std::vector<Tensor>& inputs,
                                 double h = 1e-5);

using StoreGraph = std::function<Var(Tape&, const pcb::ParameterStore&)>;
// Same for parameters of a store. stride > 1 checks every stride-th scalar
// of each parameter (always including the first).
GradCheck check_parameter_gradients(const StoreGraph& graph, pcb::ParameterStore& store,
                                    std::size_t stride = 1, double h = 1e-5);

Tensor random_tensor(std::size_t rows, std::size_t cols, pcb::Rng& rng, double scale = 1.0);

// Brute-force metric oracles.
double auroc_pairs(std::span<const double> scores, std::span<const int> labels);
double average_precision_bruteforce(std::span<const double> scores, std::span<const int> labels);

// Validator for the JSON Schema subset used by the shipped schema files:
// type (string or list), properties, required, additionalProperties (bool or
// schema), items, enum, const, minimum, maximum, minItems, pattern-free
// strings, and local "$ref": "#/$defs/name". Returns one message per failure.
std::vector<std::string> validate_schema(const nlohmann::json& schema, const nlohmann::json& value);
nlohmann::json load_schema(const std::string& name);

// Small hand-checkable cohort: each patient is a list of visits of code names.
struct ToyPatient {
  std::vector<std::vector<std::string>> visits;
  int label = 0;
};
pcb::Dataset toy_dataset(const std::vector<ToyPatient>& patients);

// Desk-scale model config for a dataset.
pcb::ModelConfig small_model_config(const pcb::Dataset& data, pcb::ModelKind kind,
                                    std::size_t max_len = 24, int latent_groups = 3);

}  // namespace pcbtest
