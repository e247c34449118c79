#include "pcb/json_io.hpp"

namespace pcb {

using nlohmann::json;

json concept_spec_to_json(const ConceptSpec& s) {
  return json{{"name", s.name},
              {"kind", s.kind == ConceptKind::kBinary ? "binary" : "categorical"},
              {"categories", s.categories},
              {"embed_dim", s.embed_dim},
              {"labels", s.category_labels}};
}

ConceptSpec concept_spec_from_json(const json& j) {
  ConceptSpec s;
  s.name = j.at("name").get<std::string>();
  s.kind = j.at("kind").get<std::string>() == "binary" ? ConceptKind::kBinary
                                                        : ConceptKind::kCategorical;
  s.categories = j.at("categories").get<int>();
  s.embed_dim = j.at("embed_dim").get<int>();
  s.category_labels = j.at("labels").get<std::vector<std::string>>();
  return s;
}

json encoder_config_to_json(const EncoderConfig& c) {
  return json{{"extractor_layers", c.extractor_layers},
              {"aggregator_layers", c.aggregator_layers},
              {"hidden", c.hidden},
              {"heads", c.heads},
              {"intermediate", c.intermediate},
              {"dropout", c.dropout},
              {"attention_dropout", c.attention_dropout},
              {"max_len", c.max_len},
              {"window", c.window},
              {"stride", c.stride},
              {"token_vocab", c.token_vocab},
              {"age_vocab", c.age_vocab},
              {"segment_vocab", c.segment_vocab}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  c.extractor_layers = j.at("extractor_layers").get<int>();
  c.aggregator_layers = j.at("aggregator_layers").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.heads = j.at("heads").get<int>();
  c.intermediate = j.at("intermediate").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.attention_dropout = j.at("attention_dropout").get<double>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.window = j.at("window").get<std::size_t>();
  c.stride = j.at("stride").get<std::size_t>();
  c.token_vocab = j.at("token_vocab").get<int>();
  c.age_vocab = j.at("age_vocab").get<int>();
  c.segment_vocab = j.at("segment_vocab").get<int>();
  return c;
}

json quantizer_to_json(const QuantizerState& q) {
  return json{{"temperature", q.temperature},
              {"initial", q.initial},
              {"minimum", q.minimum},
              {"decay", q.decay},
              {"steps", q.steps}};
}

QuantizerState quantizer_from_json(const json& j) {
  QuantizerState q;
  q.temperature = j.at("temperature").get<double>();
  q.initial = j.at("initial").get<double>();
  q.minimum = j.at("minimum").get<double>();
  q.decay = j.at("decay").get<double>();
  q.steps = j.at("steps").get<std::uint64_t>();
  return q;
}

json bottleneck_config_to_json(const BottleneckConfig& c) {
  json specs = json::array();
  for (const auto& s : c.concepts) specs.push_back(concept_spec_to_json(s));
  return json{{"concepts", specs},
              {"latent_groups", c.latent_groups},
              {"concept_hidden", c.concept_hidden},
              {"classifier_hidden", c.classifier_hidden},
              {"quantizer", quantizer_to_json(c.quantizer)},
              {"concept_loss_weight", c.concept_loss_weight}};
}

BottleneckConfig bottleneck_config_from_json(const json& j) {
  BottleneckConfig c;
  for (const auto& s : j.at("concepts")) c.concepts.push_back(concept_spec_from_json(s));
  c.latent_groups = j.at("latent_groups").get<int>();
  c.concept_hidden = j.at("concept_hidden").get<int>();
  c.classifier_hidden = j.at("classifier_hidden").get<std::vector<int>>();
  c.quantizer = quantizer_from_json(j.at("quantizer"));
  c.concept_loss_weight = j.at("concept_loss_weight").get<double>();
  return c;
}

json model_config_to_json(const ModelConfig& c) {
  return json{{"kind", model_kind_name(c.kind)},
              {"encoder", encoder_config_to_json(c.encoder)},
              {"bottleneck", bottleneck_config_to_json(c.bottleneck)},
              {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.kind = parse_model_kind(j.at("kind").get<std::string>());
  c.encoder = encoder_config_from_json(j.at("encoder"));
  c.bottleneck = bottleneck_config_from_json(j.at("bottleneck"));
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  return c;
}

}  // namespace pcb
