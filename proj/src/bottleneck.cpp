#include "pcb/bottleneck.hpp"

#include <cmath>

#include "pcb/error.hpp"

namespace pcb {

namespace {

std::size_t argmax_row(const Tensor& t, std::size_t begin, std::size_t count) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < count; ++i) {
    if (t[begin + i] > t[begin + best]) best = i;
  }
  return best;
}

Tensor pairing_matrix(std::size_t groups) {
  Tensor s = Tensor::full(2 * groups, groups, 0.0);
  for (std::size_t j = 0; j < groups; ++j) {
    s.at(2 * j, j) = 1.0;
    s.at(2 * j + 1, j) = 1.0;
  }
  return s;
}

}  // namespace

void QuantizerState::validate() const {
  if (!(minimum > 0.0)) throw ConfigError("bottleneck.tau_min: must be > 0");
  if (!(initial >= minimum)) throw ConfigError("bottleneck.tau_init: must be >= tau_min");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("bottleneck.tau_decay: must lie in (0, 1]");
  if (!(temperature >= minimum && temperature <= initial)) {
    throw ConfigError("bottleneck.tau: must lie in [tau_min, tau_init]");
  }
}

QuantizerState temperature_step(const QuantizerState& state) {
  QuantizerState next = state;
  next.steps = state.steps + 1;
  next.temperature = std::max(state.minimum,
                              state.initial * std::pow(state.decay, static_cast<double>(next.steps)));
  return next;
}

void BottleneckConfig::validate() const {
  validate_specs(concepts);
  if (latent_groups < 1 || latent_groups > 24) {
    throw ConfigError("bottleneck.latent_groups: must lie in [1, 24]");
  }
  if (concept_hidden < 1) throw ConfigError("bottleneck.concept_hidden: must be >= 1");
  for (int width : classifier_hidden) {
    if (width < 1) throw ConfigError("bottleneck.classifier_hidden: widths must be >= 1");
  }
  if (!(concept_loss_weight >= 0.0) || !std::isfinite(concept_loss_weight)) {
    throw ConfigError("bottleneck.concept_loss_weight: must be finite and >= 0");
  }
  quantizer.validate();
}

int BottleneckConfig::classifier_input_width() const {
  return total_input_width(concepts) + latent_groups;
}

GumbelSample gumbel_softmax(Var logits, double tau, bool hard, Rng& rng) {
  if (!(tau > 0.0)) throw UsageError("gumbel_softmax temperature must be > 0");
  if (logits.rows() != 1) throw DimensionError("gumbel_softmax expects a row, got " +
                                               shape_string(logits.shape()));
  Tape& tape = logits.tape();
  const std::size_t k = logits.cols();
  Tensor noise = Tensor::full(1, k, 0.0);
  for (std::size_t i = 0; i < k; ++i) noise[i] = rng.gumbel();
  Var soft = softmax(scale(add(logits, tape.constant(std::move(noise))), 1.0 / tau));
  GumbelSample out;
  out.index = argmax_row(soft.value(), 0, k);
  if (!hard) {
    out.output = soft;
    return out;
  }
  Tensor one_hot = Tensor::full(1, k, 0.0);
  one_hot[out.index] = 1.0;
  out.output = straight_through(one_hot, soft);
  return out;
}

Bottleneck::Bottleneck(const BottleneckConfig& config, int hidden, ParameterStore& store,
                       const std::string& prefix, Rng& init)
    : config_(config) {
  config_.validate();
  const auto h = static_cast<std::size_t>(hidden);
  const auto mid = static_cast<std::size_t>(config_.concept_hidden);
  const auto logits = static_cast<std::size_t>(total_logit_count(config_.concepts));
  const auto groups = static_cast<std::size_t>(config_.latent_groups);

  g_w1_ = store.add(prefix + "g.0.weight", xavier_uniform(h, mid, init));
  g_b1_ = store.add(prefix + "g.0.bias", Tensor::full(1, mid, 0.0));
  g_w2_ = store.add(prefix + "g.1.weight", xavier_uniform(mid, logits, init));
  g_b2_ = store.add(prefix + "g.1.bias", Tensor::full(1, logits, 0.0));

  h_w_ = store.add(prefix + "h.weight", xavier_uniform(h, 2 * groups, init));
  h_b_ = store.add(prefix + "h.bias", Tensor::full(1, 2 * groups, 0.0));
  codebook_ = store.add(prefix + "codebook", normal_init({1, 2 * groups}, 1.0, init));

  for (const auto& spec : config_.concepts) {
    if (spec.kind == ConceptKind::kCategorical) {
      concept_embeddings_.push_back(store.add(
          prefix + "concept_embedding." + spec.name,
          normal_init({static_cast<std::size_t>(spec.categories),
                       static_cast<std::size_t>(spec.embed_dim)},
                      1.0, init)));
    } else {
      concept_embeddings_.push_back(static_cast<ParamId>(-1));
    }
  }

  std::vector<int> widths{config_.classifier_input_width()};
  widths.insert(widths.end(), config_.classifier_hidden.begin(), config_.classifier_hidden.end());
  widths.push_back(1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = static_cast<std::size_t>(widths[l]);
    const auto out = static_cast<std::size_t>(widths[l + 1]);
    const std::string name = prefix + "f." + std::to_string(l) + ".";
    classifier_.emplace_back(store.add(name + "weight", xavier_uniform(in, out, init)),
                             store.add(name + "bias", Tensor::full(1, out, 0.0)));
  }
}

Var Bottleneck::concept_logits(Tape& tape, const ParameterStore& store, Var representation) const {
  Var x = add(matmul(representation, tape.parameter(store, g_w1_)), tape.parameter(store, g_b1_));
  return add(matmul(relu(x), tape.parameter(store, g_w2_)), tape.parameter(store, g_b2_));
}

Var Bottleneck::quantizer_logits(Tape& tape, const ParameterStore& store,
                                 Var representation) const {
  return add(matmul(representation, tape.parameter(store, h_w_)), tape.parameter(store, h_b_));
}

Var Bottleneck::select_codebook_entries(Tape& tape, const ParameterStore& store,
                                        Var one_hot) const {
  const auto groups = static_cast<std::size_t>(config_.latent_groups);
  Var picked = mul(one_hot, tape.parameter(store, codebook_));
  return matmul(picked, tape.constant(pairing_matrix(groups)));
}

std::pair<LatentCode, Var> Bottleneck::quantize(Tape& tape, const ParameterStore& store,
                                                Var representation, double tau, bool train,
                                                Rng* rng) const {
  const auto groups = static_cast<std::size_t>(config_.latent_groups);
  Var logits = quantizer_logits(tape, store, representation);
  LatentCode code(groups, 0);
  if (!train) {
    for (std::size_t j = 0; j < groups; ++j) {
      code[j] = static_cast<std::uint8_t>(argmax_row(logits.value(), 2 * j, 2));
    }
    return {code, latent_embedding(tape, store, code)};
  }
  if (rng == nullptr) throw UsageError("training quantizer needs an rng");
  std::vector<Var> samples;
  samples.reserve(groups);
  for (std::size_t j = 0; j < groups; ++j) {
    GumbelSample s = gumbel_softmax(slice(logits, 1, 2 * j, 2), tau, true, *rng);
    code[j] = static_cast<std::uint8_t>(s.index);
    samples.push_back(s.output);
  }
  return {code, select_codebook_entries(tape, store, concat(samples, 1))};
}

Var Bottleneck::latent_embedding(Tape& tape, const ParameterStore& store,
                                 const LatentCode& code) const {
  const auto groups = static_cast<std::size_t>(config_.latent_groups);
  if (code.size() != groups) {
    throw UsageError("latent code has " + std::to_string(code.size()) + " bits, expected " +
                     std::to_string(groups));
  }
  Tensor one_hot = Tensor::full(1, 2 * groups, 0.0);
  for (std::size_t j = 0; j < groups; ++j) {
    if (code[j] > 1) throw UsageError("latent code bits must be 0 or 1");
    one_hot[2 * j + code[j]] = 1.0;
  }
  return select_codebook_entries(tape, store, tape.constant(std::move(one_hot)));
}

Var Bottleneck::assemble_concept_input(Tape& tape, const ParameterStore& store,
                                       const ConceptVector& values) const {
  validate_concepts(config_.concepts, values);
  std::vector<Var> parts;
  for (std::size_t i = 0; i < config_.concepts.size(); ++i) {
    if (config_.concepts[i].kind == ConceptKind::kBinary) {
      parts.push_back(tape.constant(Tensor::full(1, 1, static_cast<double>(values[i]))));
    } else {
      const std::int32_t id = values[i];
      parts.push_back(embedding_lookup(tape.parameter(store, concept_embeddings_[i]),
                                       std::span<const std::int32_t>(&id, 1)));
    }
  }
  return concat(parts, 1);
}

Var Bottleneck::assemble_concept_input(Tape& tape, const ParameterStore& store, Var logits) const {
  const auto expected = static_cast<std::size_t>(total_logit_count(config_.concepts));
  if (logits.rows() != 1 || logits.cols() != expected) {
    throw DimensionError("concept logits " + shape_string(logits.shape()) + " vs (1, " +
                         std::to_string(expected) + ")");
  }
  std::vector<Var> parts;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < config_.concepts.size(); ++i) {
    const auto& spec = config_.concepts[i];
    const auto width = static_cast<std::size_t>(spec.logit_count());
    if (spec.kind == ConceptKind::kBinary) {
      parts.push_back(sigmoid(slice(logits, 1, offset, 1)));
    } else {
      const auto id = static_cast<std::int32_t>(argmax_row(logits.value(), offset, width));
      parts.push_back(embedding_lookup(tape.parameter(store, concept_embeddings_[i]),
                                       std::span<const std::int32_t>(&id, 1)));
    }
    offset += width;
  }
  return concat(parts, 1);
}

Var Bottleneck::classify(Tape& tape, const ParameterStore& store, Var concept_input,
                         Var latent_embedding) const {
  Var x = concat({concept_input, latent_embedding}, 1);
  for (std::size_t l = 0; l < classifier_.size(); ++l) {
    x = add(matmul(x, tape.parameter(store, classifier_[l].first)),
            tape.parameter(store, classifier_[l].second));
    if (l + 1 < classifier_.size()) x = relu(x);
  }
  return x;
}

Var concept_loss(Var concept_logits, const std::vector<ConceptSpec>& specs,
                 const ConceptVector& truth) {
  validate_concepts(specs, truth);
  Var total;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto width = static_cast<std::size_t>(specs[i].logit_count());
    Var part = specs[i].kind == ConceptKind::kBinary
                   ? bce_with_logits(slice(concept_logits, 1, offset, 1), truth[i])
                   : ce_with_logits(slice(concept_logits, 1, offset, width),
                                    static_cast<std::size_t>(truth[i]));
    total = total.valid() ? add(total, part) : part;
    offset += width;
  }
  if (!total.valid()) total = concept_logits.tape().constant(Tensor::full(1, 1, 0.0));
  return total;
}

Var joint_loss(Var risk_logit, int label, Var concept_logits, const ConceptVector& truth,
               const std::vector<ConceptSpec>& specs, double concept_weight) {
  Var risk = bce_with_logits(risk_logit, label);
  Var concepts = concept_loss(concept_logits, specs, truth);
  if (concept_weight != 1.0) concepts = scale(concepts, concept_weight);
  return add(risk, concepts);
}

std::string render_code(const LatentCode& code) {
  std::string out;
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (i) out += ',';
    out += code[i] ? '1' : '0';
  }
  return out;
}

std::uint32_t code_to_int(const LatentCode& code) {
  std::uint32_t v = 0;
  for (std::uint8_t bit : code) v = (v << 1) | (bit ? 1u : 0u);
  return v;
}

LatentCode code_from_int(std::uint32_t value, int groups) {
  if (groups < 1 || groups > 24 || value >= (1u << groups)) {
    throw UsageError("cluster id " + std::to_string(value) + " outside [0, 2^" +
                     std::to_string(groups) + ")");
  }
  LatentCode code(static_cast<std::size_t>(groups), 0);
  for (int i = groups - 1; i >= 0; --i) {
    code[static_cast<std::size_t>(i)] = value & 1u;
    value >>= 1;
  }
  return code;
}

}  // namespace pcb
