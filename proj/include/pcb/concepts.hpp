#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace pcb {

enum class ConceptKind { kBinary, kCategorical };

// A human-defined concept fed through the bottleneck. Binary concepts use a
// single logit and enter the classifier as a scalar; categorical concepts use
// K logits and enter through a learned embed_dim-wide embedding.
struct ConceptSpec {
  std::string name;
  ConceptKind kind = ConceptKind::kBinary;
  int categories = 2;
  int embed_dim = 2;
  std::vector<std::string> category_labels;

  static ConceptSpec binary(std::string name);
  static ConceptSpec categorical(std::string name, std::vector<std::string> labels,
                                 int embed_dim = 2);

  // Number of distinct values: 2 for binary, K for categorical.
  int arity() const { return kind == ConceptKind::kBinary ? 2 : categories; }
  int logit_count() const { return kind == ConceptKind::kBinary ? 1 : categories; }
  int input_width() const { return kind == ConceptKind::kBinary ? 1 : embed_dim; }
  std::string value_label(int value) const;

  bool operator==(const ConceptSpec&) const = default;
};

// One value per ConceptSpec: 0/1 for binary, category index for categorical.
using ConceptVector = std::vector<int>;

void validate_specs(const std::vector<ConceptSpec>& specs);
// Throws UsageError when arity or a value does not match the specs.
void validate_concepts(const std::vector<ConceptSpec>& specs, const ConceptVector& values);

int total_logit_count(const std::vector<ConceptSpec>& specs);
int total_input_width(const std::vector<ConceptSpec>& specs);

// Mixed-radix enumeration of full concept combinations (first concept is the
// most significant digit).
std::size_t combination_count(const std::vector<ConceptSpec>& specs);
std::size_t combination_index(const std::vector<ConceptSpec>& specs, const ConceptVector& values);
ConceptVector combination_at(const std::vector<ConceptSpec>& specs, std::size_t index);

// "AF=1,HTN=0,DM=1" style rendering, stable for reports.
std::string render_combination(const std::vector<ConceptSpec>& specs, const ConceptVector& values);

}  // namespace pcb
