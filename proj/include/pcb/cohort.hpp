#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pcb/concepts.hpp"
#include "pcb/vocabulary.hpp"

namespace pcb {

struct MedicalEvent {
  TokenId code = CodeVocabulary::kUnk;
  int age_years = 0;
  int visit = 0;

  bool operator==(const MedicalEvent&) const = default;
};

// One patient. Events [0, baseline_index) form the predictive history; later
// events fall in the outcome window and are never encoded. visit_times[v] is
// the patient's age in fractional years at visit v.
struct PatientRecord {
  std::int64_t id = 0;
  std::vector<MedicalEvent> events;
  std::size_t baseline_index = 0;
  double baseline_time = 0.0;
  std::vector<double> visit_times;
  ConceptVector concepts;
  int label = 0;
  int stratum = 0;  // generator-only hidden variable

  bool operator==(const PatientRecord&) const = default;
};

// Checks sorting, visit monotonicity, baseline bounds and label range.
void validate_record(const PatientRecord& record);
std::size_t history_visit_count(const PatientRecord& record);
// True when the pre-baseline history spans at least min_visits visits.
bool meets_minimum_history(const PatientRecord& record, std::size_t min_visits = 3);

// ---- concept derivation ---------------------------------------------------

enum class ConceptRuleKind {
  kCodePresence,    // binary: any listed code before baseline
  kVisitFrequency,  // categorical: visits per year of history
  kFollowUp,        // categorical: years since first index code
};

struct ConceptRule {
  ConceptSpec spec;
  ConceptRuleKind kind = ConceptRuleKind::kCodePresence;
  std::vector<std::string> codes;  // concept codes, or index-condition codes for kFollowUp
  std::vector<double> edges;       // category boundaries for categorical rules

  bool operator==(const ConceptRule&) const = default;
};

// Category boundaries: left-closed, right-open, boundary values go up.
const std::vector<double>& visit_frequency_edges();  // 2,4,8,12,16,24 per year
const std::vector<double>& follow_up_edges();        // 1,2,3,4,5,7,10 years
std::size_t bucket_index(double value, const std::vector<double>& edges);

ConceptRule code_presence_rule(std::string name, std::vector<std::string> codes);
ConceptRule visit_frequency_rule(std::string name);
ConceptRule follow_up_rule(std::string name, std::vector<std::string> index_codes);

std::vector<ConceptSpec> specs_of(const std::vector<ConceptRule>& rules);

// nullopt when the rule does not apply (follow-up without an index code).
std::optional<int> derive_concept(const PatientRecord& record, const ConceptRule& rule,
                                  const CodeVocabulary& vocab);
// Throws DataError if any concept is not applicable.
ConceptVector derive_concepts(const PatientRecord& record, const std::vector<ConceptRule>& rules,
                              const CodeVocabulary& vocab);

// ---- cohort ---------------------------------------------------------------

struct Dataset {
  std::string task;
  CodeVocabulary vocab;
  std::vector<ConceptRule> concepts;
  std::vector<PatientRecord> patients;

  std::vector<ConceptSpec> specs() const { return specs_of(concepts); }
};

struct GeneratorConfig {
  std::string task = "custom";
  std::size_t num_patients = 1000;
  std::uint64_t seed = 0;
  std::vector<ConceptRule> concepts;
  std::vector<double> stratum_weights;
  // [stratum][combination] probabilities, combination order per combination_index.
  std::vector<std::vector<double>> combination_distribution;
  // [stratum][combination] outcome risk in (0, 1).
  std::vector<std::vector<double>> risk_table;

  int noise_codes = 60;
  int signature_codes_per_stratum = 6;
  double signature_rate = 0.6;
  int min_visits = 3;
  int max_visits = 10;
  int min_events_per_visit = 1;
  int max_events_per_visit = 3;
  int max_concept_code_repeats = 2;
  // Cap on pre-baseline events (0 = none); records over the cap are redrawn.
  std::size_t max_history_events = 0;
  double min_baseline_age = 50.0;
  double max_baseline_age = 85.0;
  double min_observation_years = 3.0;
  double max_observation_years = 8.0;

  std::size_t num_strata() const { return stratum_weights.size(); }
  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Builds the vocabulary implied by a generator config.
CodeVocabulary generator_vocabulary(const GeneratorConfig& config);

// Patient i draws from a stream derived from (seed, i), so the output does not
// depend on shard boundaries; shards > 1 only changes how work is split.
Dataset generate_cohort(const GeneratorConfig& config, std::size_t shards = 1);

// Risk ratio implied by the risk table for one stratum: exposure concept set
// to exposed vs unexposed value, other concepts from `base`.
double oracle_risk_ratio(const GeneratorConfig& config, int stratum, std::size_t exposure,
                         const ConceptVector& base, int exposed_value = 1,
                         int unexposed_value = 0);

// Built-in task templates over synthetic data.
//  af-hf: three binary concepts (AF, hypertension, diabetes), four strata.
//  f-hf:  admission-frequency (7) and follow-up (8) categorical concepts.
GeneratorConfig af_hf_template(std::size_t num_patients, std::uint64_t seed);
GeneratorConfig f_hf_template(std::size_t num_patients, std::uint64_t seed);
GeneratorConfig task_template(const std::string& name, std::size_t num_patients,
                              std::uint64_t seed);

// ---- splitting --------------------------------------------------------------

struct SplitRatios {
  double train = 0.6;
  double tune = 0.1;
  double valid = 0.3;
};

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> tune;
  std::vector<std::size_t> valid;
};

// Random partition of [0, n). Each ratio must lie in (0, 1) and they must sum
// to one; train/tune sizes are rounded, valid takes the remainder.
DatasetSplit split_dataset(std::size_t n, const SplitRatios& ratios, std::uint64_t seed);
std::vector<PatientRecord> select_patients(const Dataset& data, const std::vector<std::size_t>& idx);

// ---- persistence ------------------------------------------------------------

// JSON-lines: a header object {"format":"pcb-cohort","version":1,...} then one
// patient per line. The vocabulary is stored separately.
void write_cohort(std::ostream& out, const Dataset& data);
Dataset read_cohort(std::istream& in, const CodeVocabulary& vocab);

void save_dataset(const std::string& cohort_path, const std::string& vocab_path, const Dataset& data);
Dataset load_dataset(const std::string& cohort_path, const std::string& vocab_path);

}  // namespace pcb
