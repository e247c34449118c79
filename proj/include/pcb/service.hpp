#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcb/counterfactual.hpp"
#include "pcb/model.hpp"

namespace httplib {
class Server;
}

namespace pcb {

struct ServiceOptions {
  double coverage = 0.95;
  PlausibilityRange plausibility;
  std::string exposure;  // empty: first binary concept
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// Read-only HTTP/JSON view over a frozen PCB model and one cohort split.
// All analysis is computed at construction; handlers only read shared state,
// so requests can be served concurrently and in any order.
//
//   GET  /api/meta
//   GET  /api/clusters
//   GET  /api/clusters/{id}/upset
//   POST /api/counterfactual   {"cluster": id, "assignment": {name: value},
//                               "reference": {name: value}?}
//   GET  /api/sanity
//   GET  /api/patients/{id}/risk
//
// Errors carry {"error": {"code": ..., "message": ...}} with code one of
// bad-request (400), not-found (404), not-plausible-context (422), internal (500).
class ApiService {
 public:
  ApiService(std::shared_ptr<const PcbModel> model, std::string task,
             std::vector<Example> examples, ServiceOptions options);

  ApiResponse handle(const std::string& method, const std::string& path,
                     const std::string& body) const;

  ApiResponse meta() const;
  ApiResponse clusters() const;
  ApiResponse upset(const std::string& id) const;
  ApiResponse counterfactual(const std::string& body) const;
  ApiResponse sanity() const;
  ApiResponse patient_risk(const std::string& id) const;

  // Registers the routes on an httplib server.
  void mount(httplib::Server& server) const;
  // Blocking listen.
  void serve(const std::string& host, int port) const;

  const ClusterAnalysis& analysis() const { return analysis_; }
  const SanityReport& sanity_data() const { return sanity_; }

 private:
  std::shared_ptr<const PcbModel> model_;
  std::string task_;
  std::vector<Example> examples_;
  ServiceOptions options_;
  std::size_t exposure_ = 0;
  ClusterAnalysis analysis_;
  SanityReport sanity_;
  std::map<std::int64_t, std::size_t> patient_index_;
};

ApiResponse api_error(int status, const std::string& code, const std::string& message);

// Index of a concept by name, or of the first binary concept when name is empty.
std::size_t resolve_exposure(const std::vector<ConceptSpec>& specs, const std::string& name);

}  // namespace pcb
