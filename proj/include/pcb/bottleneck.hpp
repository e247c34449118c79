#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pcb/autodiff.hpp"
#include "pcb/concepts.hpp"
#include "pcb/parameters.hpp"

namespace pcb {

// Gumbel-Softmax temperature; stepped once per optimizer step.
struct QuantizerState {
  double temperature = 2.0;
  double initial = 2.0;
  double minimum = 0.5;
  double decay = 0.999;
  std::uint64_t steps = 0;

  void validate() const;
  bool operator==(const QuantizerState&) const = default;
};

// After t steps tau = max(minimum, initial * decay^t), evaluated in closed
// form so long schedules carry no accumulated rounding.
QuantizerState temperature_step(const QuantizerState& state);

struct BottleneckConfig {
  std::vector<ConceptSpec> concepts;
  int latent_groups = 6;
  int concept_hidden = 64;
  std::vector<int> classifier_hidden = {16, 8};
  QuantizerState quantizer;
  double concept_loss_weight = 1.0;

  void validate() const;
  // Width of f's input: concept scalars/embeddings followed by the latent embedding.
  int classifier_input_width() const;
};

// One bit per latent group.
using LatentCode = std::vector<std::uint8_t>;

struct GumbelSample {
  Var output;             // soft sample, or one-hot forward value with soft gradient
  std::size_t index = 0;  // argmax of the soft sample
};

// Sample softmax((logits + g) / tau) with Gumbel noise g over a 1 x K row.
// Throws UsageError for tau <= 0.
GumbelSample gumbel_softmax(Var logits, double tau, bool hard, Rng& rng);

struct BottleneckOutput {
  Var concept_logits;    // 1 x total logit count
  LatentCode code;
  Var latent_embedding;  // 1 x latent_groups
};

// Concept head g, quantizer h with its 1-d codebook, and classifier f.
class Bottleneck {
 public:
  Bottleneck(const BottleneckConfig& config, int hidden, ParameterStore& store,
             const std::string& prefix, Rng& init);

  const BottleneckConfig& config() const { return config_; }
  const std::vector<ConceptSpec>& specs() const { return config_.concepts; }

  // g: hidden -> concept_hidden -> total logits.
  Var concept_logits(Tape& tape, const ParameterStore& store, Var representation) const;
  // h projection: 1 x (2 * latent_groups), group j owns columns 2j and 2j+1.
  Var quantizer_logits(Tape& tape, const ParameterStore& store, Var representation) const;
  // Train: hard Gumbel-Softmax per group (straight-through). Eval: argmax
  // per group, ties to entry 0. Returns the code and its latent embedding.
  std::pair<LatentCode, Var> quantize(Tape& tape, const ParameterStore& store, Var representation,
                                      double tau, bool train, Rng* rng) const;
  // Embedding of a fixed code: the selected codebook entry of each group.
  Var latent_embedding(Tape& tape, const ParameterStore& store, const LatentCode& code) const;
  // Ground-truth or intervened concept values -> f's concept input.
  Var assemble_concept_input(Tape& tape, const ParameterStore& store,
                             const ConceptVector& values) const;
  // Predicted concepts: sigmoid of binary logits, embedding of the argmax
  // category for categorical concepts.
  Var assemble_concept_input(Tape& tape, const ParameterStore& store, Var logits) const;
  // f: concatenated inputs -> hidden layers -> 1 risk logit.
  Var classify(Tape& tape, const ParameterStore& store, Var concept_input,
               Var latent_embedding) const;

  ParamId codebook() const { return codebook_; }

 private:
  Var select_codebook_entries(Tape& tape, const ParameterStore& store, Var one_hot) const;

  BottleneckConfig config_;
  ParamId g_w1_, g_b1_, g_w2_, g_b2_;
  ParamId h_w_, h_b_;
  ParamId codebook_;  // 1 x (2 * latent_groups)
  std::vector<ParamId> concept_embeddings_;  // per concept; unused for binary
  std::vector<std::pair<ParamId, ParamId>> classifier_;
};

// Sum over concepts of BCE (binary) or CE (categorical).
Var concept_loss(Var concept_logits, const std::vector<ConceptSpec>& specs,
                 const ConceptVector& truth);
// BCE(risk) + weight * concept_loss.
Var joint_loss(Var risk_logit, int label, Var concept_logits, const ConceptVector& truth,
               const std::vector<ConceptSpec>& specs, double concept_weight = 1.0);

// Bit-string rendering "b1,b2,...,bn".
std::string render_code(const LatentCode& code);
// b1 is the most significant bit.
std::uint32_t code_to_int(const LatentCode& code);
LatentCode code_from_int(std::uint32_t value, int groups);

}  // namespace pcb
