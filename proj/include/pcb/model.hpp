#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pcb/bottleneck.hpp"
#include "pcb/cohort.hpp"
#include "pcb/encoder.hpp"
#include "pcb/encoding.hpp"

namespace pcb {

enum class ModelKind { kPcb, kBlackBox };

std::string model_kind_name(ModelKind kind);
// "pcb" or "black-box"; anything else is a ConfigError.
ModelKind parse_model_kind(const std::string& name);

// One encoded patient ready for the model.
struct Example {
  std::int64_t patient_id = 0;
  TokenSequence sequence;
  ConceptVector concepts;
  int label = 0;
  int stratum = 0;
};

std::vector<Example> make_examples(const Dataset& data, const std::vector<std::size_t>& indices,
                                   std::size_t max_len);

struct ModelConfig {
  ModelKind kind = ModelKind::kPcb;
  EncoderConfig encoder;
  BottleneckConfig bottleneck;  // unused by the black box
  std::uint64_t init_seed = 0;

  void validate() const;
};

// Common interface of the black-box baseline and the PCB model. Parameters
// are owned by the model; eval-mode methods never mutate it, so a frozen
// model can serve concurrent readers.
class RiskModel {
 public:
  virtual ~RiskModel() = default;
  RiskModel(const RiskModel&) = delete;
  RiskModel& operator=(const RiskModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ModelKind kind() const { return config_.kind; }
  ParameterStore& parameters() { return params_; }
  const ParameterStore& parameters() const { return params_; }
  const Encoder& encoder() const { return encoder_; }

  // Train-mode objective for one example; dropout and Gumbel noise draw from rng.
  virtual Var training_loss(Tape& tape, const Example& example, Rng& rng) const = 0;
  // Same objective in eval mode (no noise); used for early stopping.
  virtual double evaluation_loss(const Example& example) const = 0;
  // Test-time risk.
  virtual double predict_risk(const Example& example) const = 0;
  // Called once after every optimizer step.
  virtual void on_optimizer_step() {}

 protected:
  explicit RiskModel(const ModelConfig& config);

  ModelConfig config_;
  ParameterStore params_;
  Rng init_rng_;
  Encoder encoder_;
};

class BlackBoxModel final : public RiskModel {
 public:
  explicit BlackBoxModel(const ModelConfig& config);

  Var risk_logit(Tape& tape, const Example& example, const ForwardMode& mode) const;
  Var training_loss(Tape& tape, const Example& example, Rng& rng) const override;
  double evaluation_loss(const Example& example) const override;
  double predict_risk(const Example& example) const override;

 private:
  LinearHead head_;
};

struct PcbPrediction {
  double risk = 0.0;                  // f on predicted concepts (test-time contract)
  std::vector<double> concept_logits;
  ConceptVector predicted_concepts;   // thresholded at logit 0 / argmax
  LatentCode code;
};

class PcbModel final : public RiskModel {
 public:
  explicit PcbModel(const ModelConfig& config);

  const Bottleneck& bottleneck() const { return bottleneck_; }
  const std::vector<ConceptSpec>& specs() const { return bottleneck_.specs(); }
  int latent_groups() const { return bottleneck_.config().latent_groups; }
  const QuantizerState& quantizer() const { return quantizer_; }
  void set_quantizer(const QuantizerState& state);

  Var training_loss(Tape& tape, const Example& example, Rng& rng) const override;
  double evaluation_loss(const Example& example) const override;
  double predict_risk(const Example& example) const override;
  void on_optimizer_step() override;

  PcbPrediction predict(const Example& example) const;
  // Eval-mode quantizer code.
  LatentCode latent_code(const Example& example) const;
  // Risk with the example's own code and its ground-truth concepts.
  double factual_risk(const Example& example) const;
  // p(y | do(c = values), l = code); a pure function of its arguments.
  double estimate_risk(const LatentCode& code, const ConceptVector& values) const;
  double estimate_logit(const LatentCode& code, const ConceptVector& values) const;

 private:
  Bottleneck bottleneck_;
  QuantizerState quantizer_;
};

std::unique_ptr<RiskModel> make_model(const ModelConfig& config);

}  // namespace pcb
