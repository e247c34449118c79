#include "pcb/model.hpp"

#include <cmath>

#include "pcb/error.hpp"

namespace pcb {

std::string model_kind_name(ModelKind kind) {
  return kind == ModelKind::kPcb ? "pcb" : "black-box";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "pcb") return ModelKind::kPcb;
  if (name == "black-box") return ModelKind::kBlackBox;
  throw ConfigError("model: expected 'pcb' or 'black-box', got '" + name + "'");
}

std::vector<Example> make_examples(const Dataset& data, const std::vector<std::size_t>& indices,
                                   std::size_t max_len) {
  std::vector<Example> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= data.patients.size()) throw UsageError("patient index out of range");
    const PatientRecord& p = data.patients[i];
    out.push_back({p.id, encode_patient(p, data.vocab, max_len), p.concepts, p.label, p.stratum});
  }
  return out;
}

void ModelConfig::validate() const {
  encoder.validate();
  if (kind == ModelKind::kPcb) bottleneck.validate();
}

RiskModel::RiskModel(const ModelConfig& config)
    : config_(config),
      init_rng_(Rng::derive(config.init_seed, {0x696e6974})),
      encoder_(config.encoder, params_, "encoder.", init_rng_) {}

// ---- black box --------------------------------------------------------------

BlackBoxModel::BlackBoxModel(const ModelConfig& config)
    : RiskModel(config), head_(params_, "head.", config.encoder.hidden, 1, init_rng_) {}

Var BlackBoxModel::risk_logit(Tape& tape, const Example& example, const ForwardMode& mode) const {
  Var rep = encoder_.forward(tape, params_, example.sequence, mode);
  return head_(tape, params_, rep);
}

Var BlackBoxModel::training_loss(Tape& tape, const Example& example, Rng& rng) const {
  return bce_with_logits(risk_logit(tape, example, {true, &rng}), example.label);
}

double BlackBoxModel::evaluation_loss(const Example& example) const {
  Tape tape(false);
  return bce_with_logits(risk_logit(tape, example, {}), example.label).item();
}

double BlackBoxModel::predict_risk(const Example& example) const {
  Tape tape(false);
  return stable_sigmoid(risk_logit(tape, example, {}).item());
}

// ---- PCB --------------------------------------------------------------------

PcbModel::PcbModel(const ModelConfig& config)
    : RiskModel(config),
      bottleneck_(config.bottleneck, config.encoder.hidden, params_, "pcb.", init_rng_),
      quantizer_(config.bottleneck.quantizer) {}

void PcbModel::set_quantizer(const QuantizerState& state) {
  state.validate();
  quantizer_ = state;
}

Var PcbModel::training_loss(Tape& tape, const Example& example, Rng& rng) const {
  Var rep = encoder_.forward(tape, params_, example.sequence, {true, &rng});
  Var logits = bottleneck_.concept_logits(tape, params_, rep);
  auto [code, latent] = bottleneck_.quantize(tape, params_, rep, quantizer_.temperature, true, &rng);
  Var input = bottleneck_.assemble_concept_input(tape, params_, example.concepts);
  Var risk = bottleneck_.classify(tape, params_, input, latent);
  return joint_loss(risk, example.label, logits, example.concepts, specs(),
                    bottleneck_.config().concept_loss_weight);
}

double PcbModel::evaluation_loss(const Example& example) const {
  Tape tape(false);
  Var rep = encoder_.forward(tape, params_, example.sequence, {});
  Var logits = bottleneck_.concept_logits(tape, params_, rep);
  auto [code, latent] = bottleneck_.quantize(tape, params_, rep, quantizer_.temperature, false, nullptr);
  Var input = bottleneck_.assemble_concept_input(tape, params_, example.concepts);
  Var risk = bottleneck_.classify(tape, params_, input, latent);
  return joint_loss(risk, example.label, logits, example.concepts, specs(),
                    bottleneck_.config().concept_loss_weight)
      .item();
}

PcbPrediction PcbModel::predict(const Example& example) const {
  Tape tape(false);
  Var rep = encoder_.forward(tape, params_, example.sequence, {});
  Var logits = bottleneck_.concept_logits(tape, params_, rep);
  auto [code, latent] = bottleneck_.quantize(tape, params_, rep, quantizer_.temperature, false, nullptr);
  Var input = bottleneck_.assemble_concept_input(tape, params_, logits);
  Var risk = bottleneck_.classify(tape, params_, input, latent);

  PcbPrediction out;
  out.risk = stable_sigmoid(risk.item());
  const auto values = logits.value().values();
  out.concept_logits.assign(values.begin(), values.end());
  out.code = std::move(code);
  std::size_t offset = 0;
  for (const auto& spec : specs()) {
    if (spec.kind == ConceptKind::kBinary) {
      out.predicted_concepts.push_back(values[offset] > 0.0 ? 1 : 0);
    } else {
      int best = 0;
      for (int k = 1; k < spec.categories; ++k) {
        if (values[offset + k] > values[offset + best]) best = k;
      }
      out.predicted_concepts.push_back(best);
    }
    offset += static_cast<std::size_t>(spec.logit_count());
  }
  return out;
}

double PcbModel::predict_risk(const Example& example) const { return predict(example).risk; }

void PcbModel::on_optimizer_step() { quantizer_ = temperature_step(quantizer_); }

LatentCode PcbModel::latent_code(const Example& example) const {
  Tape tape(false);
  Var rep = encoder_.forward(tape, params_, example.sequence, {});
  return bottleneck_.quantize(tape, params_, rep, quantizer_.temperature, false, nullptr).first;
}

double PcbModel::factual_risk(const Example& example) const {
  return estimate_risk(latent_code(example), example.concepts);
}

double PcbModel::estimate_logit(const LatentCode& code, const ConceptVector& values) const {
  Tape tape(false);
  Var input = bottleneck_.assemble_concept_input(tape, params_, values);
  Var latent = bottleneck_.latent_embedding(tape, params_, code);
  return bottleneck_.classify(tape, params_, input, latent).item();
}

double PcbModel::estimate_risk(const LatentCode& code, const ConceptVector& values) const {
  return stable_sigmoid(estimate_logit(code, values));
}

std::unique_ptr<RiskModel> make_model(const ModelConfig& config) {
  config.validate();
  if (config.kind == ModelKind::kPcb) return std::make_unique<PcbModel>(config);
  return std::make_unique<BlackBoxModel>(config);
}

}  // namespace pcb
