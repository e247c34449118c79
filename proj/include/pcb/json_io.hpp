#pragma once

// JSON conversions shared by the cohort, checkpoint and service formats.

#include "json.hpp"
#include "pcb/cohort.hpp"
#include "pcb/model.hpp"

namespace pcb {

nlohmann::json concept_rule_to_json(const ConceptRule& rule);
ConceptRule concept_rule_from_json(const nlohmann::json& j);

nlohmann::json concept_spec_to_json(const ConceptSpec& spec);
ConceptSpec concept_spec_from_json(const nlohmann::json& j);

nlohmann::json encoder_config_to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

nlohmann::json quantizer_to_json(const QuantizerState& state);
QuantizerState quantizer_from_json(const nlohmann::json& j);

nlohmann::json bottleneck_config_to_json(const BottleneckConfig& config);
BottleneckConfig bottleneck_config_from_json(const nlohmann::json& j);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace pcb
