#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pcb/error.hpp"

namespace pcbtest {

using nlohmann::json;

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradCheck check_input_gradients(const InputGraph& graph, const std::vector<Tensor>& inputs,
                                 double h) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  tape.backward(graph(tape, vars));

  auto evaluate = [&](const std::vector<Tensor>& values) {
    Tape t(false);
    std::vector<Var> v;
    for (const auto& x : values) v.push_back(t.constant(x));
    return graph(t, v).item();
  };

  GradCheck result;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = tape.grad(vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x = probe[k][i];
      probe[k][i] = x + h;
      const double up = evaluate(probe);
      probe[k][i] = x - h;
      const double down = evaluate(probe);
      probe[k][i] = x;
      const double numeric = (up - down) / (2.0 * h);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
      ++result.checked;
    }
  }
  return result;
}

GradCheck check_parameter_gradients(const StoreGraph& graph, pcb::ParameterStore& store,
                                    std::size_t stride, double h) {
  Tape tape;
  tape.backward(graph(tape, store));
  pcb::Gradients grads = store.zero_gradients();
  tape.accumulate_parameter_grads(grads);

  auto evaluate = [&] {
    Tape t(false);
    return graph(t, store).item();
  };

  GradCheck result;
  for (pcb::ParamId id = 0; id < store.size(); ++id) {
    Tensor& value = store.value(id);
    for (std::size_t i = 0; i < value.size(); i += stride) {
      const double x = value[i];
      value[i] = x + h;
      const double up = evaluate();
      value[i] = x - h;
      const double down = evaluate();
      value[i] = x;
      const double numeric = (up - down) / (2.0 * h);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(grads[id][i], numeric));
      ++result.checked;
    }
  }
  return result;
}

Tensor random_tensor(std::size_t rows, std::size_t cols, pcb::Rng& rng, double scale) {
  Tensor t({rows, cols});
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

double auroc_pairs(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

double average_precision_bruteforce(std::span<const double> scores, std::span<const int> labels) {
  // Positives in descending score order; each contributes the precision of
  // the set {score >= its score}.
  std::vector<std::size_t> positives;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1) positives.push_back(i);
  }
  std::stable_sort(positives.begin(), positives.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0.0;
  for (std::size_t i : positives) {
    std::size_t selected = 0, hits = 0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (scores[j] >= scores[i]) {
        ++selected;
        hits += labels[j] == 1;
      }
    }
    total += static_cast<double>(hits) / static_cast<double>(selected);
  }
  return total / static_cast<double>(positives.size());
}

namespace {

bool type_matches(const std::string& type, const json& v) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  throw std::runtime_error("schema uses unsupported type " + type);
}

void validate_at(const json& root, const json& schema, const json& v, const std::string& path,
                 std::vector<std::string>& errors) {
  static const std::vector<std::string> known = {
      "$schema", "$id", "$defs", "$ref", "title", "description", "type", "properties",
      "required", "additionalProperties", "items", "enum", "const", "minimum", "maximum",
      "minItems"};
  for (auto it = schema.begin(); it != schema.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw std::runtime_error("schema keyword not supported by the test validator: " + it.key());
    }
  }
  if (schema.contains("$ref")) {
    const std::string ref = schema["$ref"];
    const std::string prefix = "#/$defs/";
    if (ref.rfind(prefix, 0) != 0) throw std::runtime_error("unsupported $ref " + ref);
    validate_at(root, root["$defs"].at(ref.substr(prefix.size())), v, path, errors);
    return;
  }
  if (schema.contains("type")) {
    bool ok = false;
    if (schema["type"].is_array()) {
      for (const auto& t : schema["type"]) ok = ok || type_matches(t.get<std::string>(), v);
    } else {
      ok = type_matches(schema["type"].get<std::string>(), v);
    }
    if (!ok) {
      errors.push_back(path + ": expected type " + schema["type"].dump() + ", got " + v.dump());
      return;
    }
  }
  if (schema.contains("enum")) {
    const auto& options = schema["enum"];
    if (std::find(options.begin(), options.end(), v) == options.end()) {
      errors.push_back(path + ": " + v.dump() + " not in " + options.dump());
    }
  }
  if (schema.contains("const") && schema["const"] != v) {
    errors.push_back(path + ": expected " + schema["const"].dump());
  }
  if (v.is_number()) {
    if (schema.contains("minimum") && v.get<double>() < schema["minimum"].get<double>()) {
      errors.push_back(path + ": below minimum");
    }
    if (schema.contains("maximum") && v.get<double>() > schema["maximum"].get<double>()) {
      errors.push_back(path + ": above maximum");
    }
  }
  if (v.is_array()) {
    if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>()) {
      errors.push_back(path + ": too few items");
    }
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        validate_at(root, schema["items"], v[i], path + "[" + std::to_string(i) + "]", errors);
      }
    }
  }
  if (v.is_object()) {
    if (schema.contains("required")) {
      for (const auto& key : schema["required"]) {
        if (!v.contains(key.get<std::string>())) errors.push_back(path + ": missing " + key.dump());
      }
    }
    const json props = schema.value("properties", json::object());
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string child = path + "." + it.key();
      if (props.contains(it.key())) {
        validate_at(root, props[it.key()], it.value(), child, errors);
      } else if (schema.contains("additionalProperties")) {
        const auto& extra = schema["additionalProperties"];
        if (extra.is_boolean()) {
          if (!extra.get<bool>()) errors.push_back(child + ": unexpected property");
        } else {
          validate_at(root, extra, it.value(), child, errors);
        }
      }
    }
  }
}

}  // namespace

std::vector<std::string> validate_schema(const json& schema, const json& value) {
  std::vector<std::string> errors;
  validate_at(schema, schema, value, "$", errors);
  return errors;
}

json load_schema(const std::string& name) {
  std::ifstream in(std::string(PCB_SCHEMA_DIR) + "/" + name);
  if (!in) throw std::runtime_error("missing schema " + name);
  return json::parse(in);
}

pcb::Dataset toy_dataset(const std::vector<ToyPatient>& patients) {
  pcb::Dataset data;
  data.task = "toy";
  data.concepts = {pcb::code_presence_rule("AF", {"DX/I48"}), pcb::code_presence_rule("HTN", {"DX/I10"}),
                   pcb::code_presence_rule("DM", {"DX/E11"})};
  for (const char* code : {"DX/I48", "DX/I10", "DX/E11"}) data.vocab.add(code);
  for (std::size_t p = 0; p < patients.size(); ++p) {
    pcb::PatientRecord r;
    r.id = static_cast<std::int64_t>(p);
    double age = 60.0;
    for (std::size_t v = 0; v < patients[p].visits.size(); ++v) {
      r.visit_times.push_back(age);
      for (const auto& code : patients[p].visits[v]) {
        r.events.push_back({data.vocab.add(code), static_cast<int>(age), static_cast<int>(v)});
      }
      age += 0.5;
    }
    r.baseline_index = r.events.size();
    r.baseline_time = age;
    r.label = patients[p].label;
    r.concepts = pcb::derive_concepts(r, data.concepts, data.vocab);
    pcb::validate_record(r);
    data.patients.push_back(std::move(r));
  }
  return data;
}

pcb::ModelConfig small_model_config(const pcb::Dataset& data, pcb::ModelKind kind,
                                    std::size_t max_len, int latent_groups) {
  pcb::ModelConfig mc;
  mc.kind = kind;
  mc.encoder = pcb::EncoderConfig::desk(static_cast<int>(data.vocab.size()));
  mc.encoder.hidden = 16;
  mc.encoder.heads = 2;
  mc.encoder.intermediate = 24;
  mc.encoder.extractor_layers = 1;
  mc.encoder.aggregator_layers = 1;
  mc.encoder.max_len = max_len;
  mc.encoder.window = 8;
  mc.encoder.stride = 4;
  mc.bottleneck.concepts = data.specs();
  mc.bottleneck.latent_groups = latent_groups;
  mc.bottleneck.concept_hidden = 8;
  mc.init_seed = 7;
  return mc;
}

}  // namespace pcbtest
