#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcb/model.hpp"

namespace pcb {

using ClusterId = std::uint32_t;

// Value in a concept pattern that matches anything.
inline constexpr int kAnyValue = -1;

// Eval-mode quantizer code of every example, as integer cluster ids.
std::vector<ClusterId> assign_clusters(const PcbModel& model, const std::vector<Example>& examples);

std::map<ClusterId, std::size_t> cluster_sizes(const std::vector<ClusterId>& assignments);

// Clusters by size (descending, ties by id ascending); the shortest prefix
// whose cumulative share reaches `coverage`.
std::vector<ClusterId> select_major_clusters(const std::map<ClusterId, std::size_t>& sizes,
                                             double coverage = 0.95);

struct UpsetCell {
  ConceptVector combination;
  std::size_t count = 0;
  double mean_risk = 0.0;
};

// Members of one cluster broken down by full concept combination. Only
// non-empty cells are stored, ordered by combination_index.
struct UpsetTable {
  ClusterId cluster = 0;
  std::size_t size = 0;
  std::vector<UpsetCell> cells;

  std::size_t count_of(const std::vector<ConceptSpec>& specs, const ConceptVector& values) const;
};

UpsetTable upset(ClusterId cluster, const std::vector<ConceptSpec>& specs,
                 const std::vector<ConceptVector>& member_concepts,
                 const std::vector<double>& member_risks);

struct PlausibilityRange {
  double min_prevalence = 0.05;
  double max_prevalence = 0.95;

  void validate() const;
};

enum class Verdict { kPlausible, kImplausible, kImpossible };
std::string verdict_name(Verdict verdict);

// Share of the cluster whose concepts equal `values` (kAnyValue matches all).
double prevalence(const UpsetTable& table, const ConceptVector& values);
// 0 or 1 -> impossible; within [min, max] -> plausible; otherwise implausible.
Verdict judge_plausibility(double prevalence, const PlausibilityRange& range);
Verdict judge_plausibility(const UpsetTable& table, const ConceptVector& intervention,
                           const PlausibilityRange& range);

struct RiskRatio {
  double exposed_risk = 0.0;
  double unexposed_risk = 0.0;
  double ratio = 0.0;
};

// estimate_risk with the exposure concept set to exposed vs unexposed value,
// other concepts from `base`.
RiskRatio risk_ratio(const PcbModel& model, ClusterId cluster, std::size_t exposure,
                     const ConceptVector& base, int exposed_value = 1, int unexposed_value = 0);

struct ObservedRiskRatio {
  std::size_t exposed_count = 0;
  std::size_t exposed_cases = 0;
  std::size_t unexposed_count = 0;
  std::size_t unexposed_cases = 0;
  double ratio = 0.0;
};

// Label prevalence ratio among members matching `base` (kAnyValue entries
// match everything; the exposure entry is ignored). nullopt when either group
// is empty or the unexposed group has no cases.
std::optional<ObservedRiskRatio> observed_risk_ratio(const std::vector<ConceptVector>& concepts,
                                                     const std::vector<int>& labels,
                                                     std::size_t exposure, const ConceptVector& base,
                                                     int exposed_value = 1, int unexposed_value = 0);

struct CounterfactualResult {
  ClusterId cluster = 0;
  ConceptVector intervention;
  ConceptVector reference;
  double risk = 0.0;
  double reference_risk = 0.0;
  double risk_ratio = 0.0;
  double prevalence = 0.0;
  Verdict verdict = Verdict::kImpossible;
};

CounterfactualResult counterfactual(const PcbModel& model, const UpsetTable& table,
                                    const ConceptVector& intervention,
                                    const ConceptVector& reference,
                                    const PlausibilityRange& range);

struct ClusterSummary {
  ClusterId id = 0;
  std::size_t size = 0;
  double share = 0.0;
  double mean_risk = 0.0;
  bool major = false;
};

// Frozen-model view of a cohort: per-patient cluster, concepts, labels and
// predicted risks, plus per-cluster summaries and UpSet tables.
struct ClusterAnalysis {
  std::vector<ConceptSpec> specs;
  int latent_groups = 0;
  double coverage = 0.95;
  std::vector<std::int64_t> patient_ids;
  std::vector<ClusterId> clusters;
  std::vector<ConceptVector> concepts;
  std::vector<int> labels;
  std::vector<double> risks;      // test-time risk (predicted concepts)
  std::vector<ClusterSummary> summaries;  // size descending, id ascending
  std::map<ClusterId, UpsetTable> upsets;

  const ClusterSummary* find(ClusterId id) const;
  std::vector<std::size_t> members(ClusterId id) const;
};

ClusterAnalysis analyze_clusters(const PcbModel& model, const std::vector<Example>& examples,
                                 double coverage = 0.95);

struct SanityRow {
  ClusterId cluster = 0;
  std::size_t size = 0;
  double exposed_share = 0.0;
  ConceptVector base;  // modal combination; exposure entry is the unexposed value
  RiskRatio estimated;
  std::optional<ObservedRiskRatio> observed;
};

struct SanityReport {
  std::string exposure;
  std::vector<SanityRow> rows;
  std::optional<double> spearman;
  std::string notice;
};

// For every major cluster whose exposure share is plausible: the estimated RR
// at the cluster's modal combination and the observed RR from labels over all
// members. Spearman correlation over rows with an observed RR (needs >= 3).
SanityReport sanity_report(const PcbModel& model, const ClusterAnalysis& analysis,
                           std::size_t exposure, const PlausibilityRange& range);

// Tab-separated reports with fixed column order.
void write_cluster_table(std::ostream& out, const ClusterAnalysis& analysis);
void write_upset_table(std::ostream& out, const UpsetTable& table,
                       const std::vector<ConceptSpec>& specs);
void write_sanity_table(std::ostream& out, const SanityReport& report, int latent_groups);

}  // namespace pcb
