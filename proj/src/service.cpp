#include "pcb/service.hpp"

#include <charconv>

#include "httplib.h"
#include "pcb/error.hpp"
#include "pcb/json_io.hpp"

namespace pcb {

using nlohmann::json;

namespace {

template <typename T>
std::optional<T> parse_id(const std::string& text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return value;
}

json assignment_json(const std::vector<ConceptSpec>& specs, const ConceptVector& values) {
  json out = json::object();
  for (std::size_t i = 0; i < specs.size(); ++i) out[specs[i].name] = values[i];
  return out;
}

// Parses {"name": value, ...}; every concept must be present exactly once.
ConceptVector parse_assignment(const std::vector<ConceptSpec>& specs, const json& j,
                               const std::string& field) {
  if (!j.is_object()) throw UsageError(field + " must be an object of concept values");
  ConceptVector values(specs.size(), kAnyValue);
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::size_t idx = specs.size();
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].name == it.key()) idx = i;
    }
    if (idx == specs.size()) throw UsageError(field + ": unknown concept '" + it.key() + "'");
    if (!it.value().is_number_integer()) throw UsageError(field + "." + it.key() + " must be an integer");
    values[idx] = it.value().get<int>();
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (values[i] == kAnyValue) throw UsageError(field + ": missing concept '" + specs[i].name + "'");
  }
  validate_concepts(specs, values);
  return values;
}

json rr_or_null(const std::optional<ObservedRiskRatio>& o) {
  return o ? json(o->ratio) : json(nullptr);
}

}  // namespace

ApiResponse api_error(int status, const std::string& code, const std::string& message) {
  return {status, json{{"error", {{"code", code}, {"message", message}}}}};
}

std::size_t resolve_exposure(const std::vector<ConceptSpec>& specs, const std::string& name) {
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (name.empty() ? specs[i].kind == ConceptKind::kBinary : specs[i].name == name) {
      if (specs[i].kind != ConceptKind::kBinary) {
        throw ConfigError("analysis.exposure: concept '" + name + "' is not binary");
      }
      return i;
    }
  }
  throw ConfigError(name.empty() ? "analysis.exposure: task has no binary concept"
                                 : "analysis.exposure: unknown concept '" + name + "'");
}

ApiService::ApiService(std::shared_ptr<const PcbModel> model, std::string task,
                       std::vector<Example> examples, ServiceOptions options)
    : model_(std::move(model)),
      task_(std::move(task)),
      examples_(std::move(examples)),
      options_(std::move(options)) {
  options_.plausibility.validate();
  analysis_ = analyze_clusters(*model_, examples_, options_.coverage);
  bool has_binary = false;
  for (const auto& s : model_->specs()) has_binary = has_binary || s.kind == ConceptKind::kBinary;
  if (has_binary || !options_.exposure.empty()) {
    exposure_ = resolve_exposure(model_->specs(), options_.exposure);
    sanity_ = sanity_report(*model_, analysis_, exposure_, options_.plausibility);
  } else {
    sanity_.notice = "sanity check needs a binary exposure concept";
  }
  for (std::size_t i = 0; i < examples_.size(); ++i) patient_index_[examples_[i].patient_id] = i;
}

ApiResponse ApiService::meta() const {
  json concepts = json::array();
  for (const auto& s : model_->specs()) concepts.push_back(concept_spec_to_json(s));
  return {200, json{{"task", task_},
                    {"model", "pcb"},
                    {"latent_groups", model_->latent_groups()},
                    {"concepts", concepts},
                    {"patients", examples_.size()},
                    {"coverage", options_.coverage},
                    {"plausibility",
                     {{"min", options_.plausibility.min_prevalence},
                      {"max", options_.plausibility.max_prevalence}}},
                    {"exposure", sanity_.exposure}}};
}

ApiResponse ApiService::clusters() const {
  json rows = json::array();
  for (const auto& s : analysis_.summaries) {
    rows.push_back({{"id", s.id},
                    {"code", render_code(code_from_int(s.id, analysis_.latent_groups))},
                    {"size", s.size},
                    {"share", s.share},
                    {"mean_risk", s.mean_risk},
                    {"major", s.major}});
  }
  return {200, json{{"clusters", rows}}};
}

ApiResponse ApiService::upset(const std::string& id_text) const {
  const auto id = parse_id<ClusterId>(id_text);
  if (!id || analysis_.upsets.count(*id) == 0) {
    return api_error(404, "not-found", "unknown cluster '" + id_text + "'");
  }
  const UpsetTable& t = analysis_.upsets.at(*id);
  json cells = json::array();
  for (const auto& c : t.cells) {
    cells.push_back({{"combination", assignment_json(analysis_.specs, c.combination)},
                     {"label", render_combination(analysis_.specs, c.combination)},
                     {"count", c.count},
                     {"share", static_cast<double>(c.count) / static_cast<double>(t.size)},
                     {"mean_risk", c.mean_risk}});
  }
  return {200, json{{"cluster", t.cluster},
                    {"code", render_code(code_from_int(t.cluster, analysis_.latent_groups))},
                    {"size", t.size},
                    {"cells", cells}}};
}

ApiResponse ApiService::counterfactual(const std::string& body) const {
  json request;
  try {
    request = json::parse(body);
  } catch (const json::exception&) {
    return api_error(400, "bad-request", "request body is not valid JSON");
  }
  if (!request.is_object() || !request.contains("cluster") || !request.contains("assignment")) {
    return api_error(400, "bad-request", "expected {\"cluster\": id, \"assignment\": {...}}");
  }
  if (!request["cluster"].is_number_unsigned()) {
    return api_error(400, "bad-request", "cluster must be a non-negative integer id");
  }
  const auto id = request["cluster"].get<std::uint64_t>();
  if (id >= (std::uint64_t{1} << model_->latent_groups())) {
    return api_error(404, "not-found", "unknown cluster " + std::to_string(id));
  }
  const auto it = analysis_.upsets.find(static_cast<ClusterId>(id));
  if (it == analysis_.upsets.end()) {
    return api_error(422, "not-plausible-context",
                     "cluster " + std::to_string(id) + " has no members to judge plausibility");
  }
  ConceptVector intervention, reference;
  try {
    intervention = parse_assignment(model_->specs(), request["assignment"], "assignment");
    reference = request.contains("reference")
                    ? parse_assignment(model_->specs(), request["reference"], "reference")
                    : ConceptVector(model_->specs().size(), 0);
  } catch (const UsageError& e) {
    return api_error(400, "bad-request", e.what());
  }
  const CounterfactualResult r =
      pcb::counterfactual(*model_, it->second, intervention, reference, options_.plausibility);
  return {200, json{{"cluster", r.cluster},
                    {"code", render_code(code_from_int(r.cluster, analysis_.latent_groups))},
                    {"intervention", assignment_json(analysis_.specs, r.intervention)},
                    {"reference", assignment_json(analysis_.specs, r.reference)},
                    {"risk", r.risk},
                    {"reference_risk", r.reference_risk},
                    {"risk_ratio", r.risk_ratio},
                    {"prevalence", r.prevalence},
                    {"verdict", verdict_name(r.verdict)}}};
}

ApiResponse ApiService::sanity() const {
  json rows = json::array();
  for (const auto& r : sanity_.rows) {
    rows.push_back({{"cluster", r.cluster},
                    {"code", render_code(code_from_int(r.cluster, analysis_.latent_groups))},
                    {"size", r.size},
                    {"exposed_share", r.exposed_share},
                    {"base", assignment_json(analysis_.specs, r.base)},
                    {"estimated_rr", r.estimated.ratio},
                    {"exposed_risk", r.estimated.exposed_risk},
                    {"unexposed_risk", r.estimated.unexposed_risk},
                    {"observed_rr", rr_or_null(r.observed)}});
  }
  return {200, json{{"exposure", sanity_.exposure},
                    {"spearman", sanity_.spearman ? json(*sanity_.spearman) : json(nullptr)},
                    {"notice", sanity_.notice},
                    {"rows", rows}}};
}

ApiResponse ApiService::patient_risk(const std::string& id_text) const {
  const auto id = parse_id<std::int64_t>(id_text);
  const auto it = id ? patient_index_.find(*id) : patient_index_.end();
  if (it == patient_index_.end()) return api_error(404, "not-found", "unknown patient '" + id_text + "'");
  const std::size_t i = it->second;
  const Example& ex = examples_[i];
  const ClusterId cluster = analysis_.clusters[i];
  const LatentCode code = code_from_int(cluster, analysis_.latent_groups);
  return {200, json{{"patient", ex.patient_id},
                    {"cluster", cluster},
                    {"code", render_code(code)},
                    {"concepts", assignment_json(analysis_.specs, ex.concepts)},
                    {"label", ex.label},
                    {"factual_risk", model_->estimate_risk(code, ex.concepts)},
                    {"predicted_risk", analysis_.risks[i]}}};
}

ApiResponse ApiService::handle(const std::string& method, const std::string& path,
                               const std::string& body) const {
  try {
    auto segments = [&] {
      std::vector<std::string> out;
      std::size_t pos = 0;
      while (pos <= path.size()) {
        const auto next = path.find('/', pos);
        const std::string part = path.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
        if (!part.empty()) out.push_back(part);
        if (next == std::string::npos) break;
        pos = next + 1;
      }
      return out;
    }();
    if (segments.size() < 2 || segments[0] != "api") {
      return api_error(404, "not-found", "no route for " + path);
    }
    const auto& s = segments;
    if (method == "GET") {
      if (s.size() == 2 && s[1] == "meta") return meta();
      if (s.size() == 2 && s[1] == "clusters") return clusters();
      if (s.size() == 4 && s[1] == "clusters" && s[3] == "upset") return upset(s[2]);
      if (s.size() == 2 && s[1] == "sanity") return sanity();
      if (s.size() == 4 && s[1] == "patients" && s[3] == "risk") return patient_risk(s[2]);
    } else if (method == "POST") {
      if (s.size() == 2 && s[1] == "counterfactual") return counterfactual(body);
    }
    return api_error(404, "not-found", "no route for " + method + " " + path);
  } catch (const std::exception& e) {
    return api_error(500, "internal", e.what());
  }
}

void ApiService::mount(httplib::Server& server) const {
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(R"(/api/.*)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle("GET", req.path, req.body));
  });
  server.Post(R"(/api/.*)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle("POST", req.path, req.body));
  });
}

void ApiService::serve(const std::string& host, int port) const {
  httplib::Server server;
  mount(server);
  if (!server.listen(host, port)) {
    throw UsageError("cannot listen on " + host + ":" + std::to_string(port));
  }
}

}  // namespace pcb
