#include "pcb/concepts.hpp"

#include <set>

#include "pcb/error.hpp"

namespace pcb {

ConceptSpec ConceptSpec::binary(std::string name) {
  ConceptSpec s;
  s.name = std::move(name);
  s.kind = ConceptKind::kBinary;
  s.categories = 2;
  s.embed_dim = 1;
  return s;
}

ConceptSpec ConceptSpec::categorical(std::string name, std::vector<std::string> labels,
                                     int embed_dim) {
  ConceptSpec s;
  s.name = std::move(name);
  s.kind = ConceptKind::kCategorical;
  s.categories = static_cast<int>(labels.size());
  s.embed_dim = embed_dim;
  s.category_labels = std::move(labels);
  return s;
}

std::string ConceptSpec::value_label(int value) const {
  if (kind == ConceptKind::kCategorical && value >= 0 &&
      value < static_cast<int>(category_labels.size())) {
    return category_labels[value];
  }
  return std::to_string(value);
}

void validate_specs(const std::vector<ConceptSpec>& specs) {
  std::set<std::string> names;
  for (const auto& s : specs) {
    if (s.name.empty()) throw ConfigError("concept with empty name");
    if (!names.insert(s.name).second) throw ConfigError("duplicate concept name: " + s.name);
    if (s.kind == ConceptKind::kCategorical) {
      if (s.categories < 2) throw ConfigError("categorical concept " + s.name + " needs K >= 2");
      if (s.embed_dim < 1) throw ConfigError("categorical concept " + s.name + " needs embed_dim >= 1");
    }
  }
}

void validate_concepts(const std::vector<ConceptSpec>& specs, const ConceptVector& values) {
  if (values.size() != specs.size()) {
    throw UsageError("concept vector has " + std::to_string(values.size()) +
                     " values, expected " + std::to_string(specs.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (values[i] < 0 || values[i] >= specs[i].arity()) {
      throw UsageError("concept " + specs[i].name + " value " + std::to_string(values[i]) +
                       " outside [0, " + std::to_string(specs[i].arity()) + ")");
    }
  }
}

int total_logit_count(const std::vector<ConceptSpec>& specs) {
  int n = 0;
  for (const auto& s : specs) n += s.logit_count();
  return n;
}

int total_input_width(const std::vector<ConceptSpec>& specs) {
  int n = 0;
  for (const auto& s : specs) n += s.input_width();
  return n;
}

std::size_t combination_count(const std::vector<ConceptSpec>& specs) {
  std::size_t n = 1;
  for (const auto& s : specs) n *= static_cast<std::size_t>(s.arity());
  return n;
}

std::size_t combination_index(const std::vector<ConceptSpec>& specs, const ConceptVector& values) {
  validate_concepts(specs, values);
  std::size_t index = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    index = index * static_cast<std::size_t>(specs[i].arity()) + static_cast<std::size_t>(values[i]);
  }
  return index;
}

ConceptVector combination_at(const std::vector<ConceptSpec>& specs, std::size_t index) {
  if (index >= combination_count(specs)) throw UsageError("combination index out of range");
  ConceptVector values(specs.size());
  for (std::size_t i = specs.size(); i-- > 0;) {
    const auto arity = static_cast<std::size_t>(specs[i].arity());
    values[i] = static_cast<int>(index % arity);
    index /= arity;
  }
  return values;
}

std::string render_combination(const std::vector<ConceptSpec>& specs, const ConceptVector& values) {
  validate_concepts(specs, values);
  std::string out;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (i) out += ',';
    out += specs[i].name + '=' + std::to_string(values[i]);
  }
  return out;
}

}  // namespace pcb
