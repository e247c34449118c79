#include "pcb/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "pcb/error.hpp"
#include "pcb/json_io.hpp"
#include "pcb/rng.hpp"

namespace pcb {

using nlohmann::json;

// ---- records ----------------------------------------------------------------

void validate_record(const PatientRecord& r) {
  if (r.label != 0 && r.label != 1) throw DataError("patient " + std::to_string(r.id) + ": label must be 0 or 1");
  if (r.baseline_index > r.events.size()) throw DataError("patient " + std::to_string(r.id) + ": baseline beyond events");
  int last_visit = 0;
  for (const auto& e : r.events) {
    if (e.visit < last_visit) throw DataError("patient " + std::to_string(r.id) + ": visit index decreases");
    if (e.age_years < 0) throw DataError("patient " + std::to_string(r.id) + ": negative age");
    if (static_cast<std::size_t>(e.visit) >= r.visit_times.size()) {
      throw DataError("patient " + std::to_string(r.id) + ": visit without a visit time");
    }
    last_visit = e.visit;
  }
}

std::size_t history_visit_count(const PatientRecord& r) {
  std::set<int> visits;
  for (std::size_t i = 0; i < r.baseline_index; ++i) visits.insert(r.events[i].visit);
  return visits.size();
}

bool meets_minimum_history(const PatientRecord& r, std::size_t min_visits) {
  return r.baseline_index > 0 && history_visit_count(r) >= min_visits;
}

// ---- concept derivation -------------------------------------------------------

const std::vector<double>& visit_frequency_edges() {
  static const std::vector<double> edges{2, 4, 8, 12, 16, 24};
  return edges;
}

const std::vector<double>& follow_up_edges() {
  static const std::vector<double> edges{1, 2, 3, 4, 5, 7, 10};
  return edges;
}

std::size_t bucket_index(double value, const std::vector<double>& edges) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
}

ConceptRule code_presence_rule(std::string name, std::vector<std::string> codes) {
  ConceptRule rule;
  rule.spec = ConceptSpec::binary(std::move(name));
  rule.kind = ConceptRuleKind::kCodePresence;
  rule.codes = std::move(codes);
  return rule;
}

ConceptRule visit_frequency_rule(std::string name) {
  ConceptRule rule;
  rule.spec = ConceptSpec::categorical(
      std::move(name), {"<=2/year", "2-4/year", "4-8/year", "8-12/year", "12-16/year",
                        "16-24/year", ">24/year"});
  rule.kind = ConceptRuleKind::kVisitFrequency;
  rule.edges = visit_frequency_edges();
  return rule;
}

ConceptRule follow_up_rule(std::string name, std::vector<std::string> index_codes) {
  ConceptRule rule;
  rule.spec = ConceptSpec::categorical(
      std::move(name), {"0-1", "1-2", "2-3", "3-4", "4-5", "5-7", "7-10", ">10"});
  rule.kind = ConceptRuleKind::kFollowUp;
  rule.codes = std::move(index_codes);
  rule.edges = follow_up_edges();
  return rule;
}

std::vector<ConceptSpec> specs_of(const std::vector<ConceptRule>& rules) {
  std::vector<ConceptSpec> specs;
  for (const auto& r : rules) specs.push_back(r.spec);
  return specs;
}

namespace {

std::set<TokenId> code_ids(const ConceptRule& rule, const CodeVocabulary& vocab) {
  std::set<TokenId> ids;
  for (const auto& c : rule.codes) ids.insert(vocab.id(c));
  return ids;
}

}  // namespace

std::optional<int> derive_concept(const PatientRecord& record, const ConceptRule& rule,
                                  const CodeVocabulary& vocab) {
  if (record.baseline_index == 0) throw DataError("record has no history before baseline");
  switch (rule.kind) {
    case ConceptRuleKind::kCodePresence: {
      const auto ids = code_ids(rule, vocab);
      for (std::size_t i = 0; i < record.baseline_index; ++i) {
        if (ids.count(record.events[i].code)) return 1;
      }
      return 0;
    }
    case ConceptRuleKind::kVisitFrequency: {
      const int first_visit = record.events.front().visit;
      const double years = record.baseline_time - record.visit_times.at(first_visit);
      const auto visits = static_cast<double>(history_visit_count(record));
      const double rate = years > 0.0 ? visits / years : std::numeric_limits<double>::infinity();
      return static_cast<int>(bucket_index(rate, rule.edges));
    }
    case ConceptRuleKind::kFollowUp: {
      const auto ids = code_ids(rule, vocab);
      for (std::size_t i = 0; i < record.baseline_index; ++i) {
        if (ids.count(record.events[i].code)) {
          const double years = record.baseline_time - record.visit_times.at(record.events[i].visit);
          return static_cast<int>(bucket_index(years, rule.edges));
        }
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

ConceptVector derive_concepts(const PatientRecord& record, const std::vector<ConceptRule>& rules,
                              const CodeVocabulary& vocab) {
  ConceptVector out;
  for (const auto& rule : rules) {
    auto v = derive_concept(record, rule, vocab);
    if (!v) throw DataError("concept " + rule.spec.name + " not applicable to patient " + std::to_string(record.id));
    out.push_back(*v);
  }
  return out;
}

// ---- generator config --------------------------------------------------------

void GeneratorConfig::validate() const {
  if (num_patients == 0) throw ConfigError("generator.num_patients must be positive");
  if (concepts.empty()) throw ConfigError("generator.concepts must not be empty");
  validate_specs(specs_of(concepts));
  const std::size_t S = num_strata();
  if (S == 0) throw ConfigError("generator.stratum_weights must not be empty");
  const auto sums_to_one = [](const std::vector<double>& p) {
    double total = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) return false;
      total += v;
    }
    return std::abs(total - 1.0) < 1e-9;
  };
  if (!sums_to_one(stratum_weights)) throw ConfigError("generator.stratum_weights must sum to 1");
  const std::size_t combos = combination_count(specs_of(concepts));
  if (combination_distribution.size() != S) throw ConfigError("generator.combination_distribution needs one row per stratum");
  if (risk_table.size() != S) throw ConfigError("generator.risk_table needs one row per stratum");
  for (std::size_t s = 0; s < S; ++s) {
    if (combination_distribution[s].size() != combos) {
      throw ConfigError("generator.combination_distribution row " + std::to_string(s) + " has wrong length");
    }
    if (!sums_to_one(combination_distribution[s])) {
      throw ConfigError("generator.combination_distribution row " + std::to_string(s) + " must sum to 1");
    }
    if (risk_table[s].size() != combos) throw ConfigError("generator.risk_table row " + std::to_string(s) + " has wrong length");
    for (double r : risk_table[s]) {
      if (!(r > 0.0 && r < 1.0)) throw ConfigError("generator.risk_table entries must lie in (0, 1)");
    }
  }
  if (min_visits < 1 || max_visits < min_visits) throw ConfigError("generator.min_visits/max_visits invalid");
  if (min_events_per_visit < 1 || max_events_per_visit < min_events_per_visit) {
    throw ConfigError("generator.events_per_visit range invalid");
  }
  if (signature_rate < 0.0 || signature_rate > 1.0) throw ConfigError("generator.signature_rate must be in [0, 1]");
  if (noise_codes < 1) throw ConfigError("generator.noise_codes must be positive");
  if (min_observation_years <= 0.0 || max_observation_years < min_observation_years) {
    throw ConfigError("generator.observation_years range invalid");
  }
  if (min_baseline_age < 20.0 || max_baseline_age < min_baseline_age) {
    throw ConfigError("generator.baseline_age range invalid");
  }
}

namespace {

constexpr const char* kOutcomeCode = "DX/I50";

const std::vector<std::string>& lifestyle_codes() {
  static const std::vector<std::string> codes{
      "LIFE/SMOKE_CURRENT", "LIFE/SMOKE_EX", "LIFE/SMOKE_NON",
      "LIFE/DRINK_CURRENT", "LIFE/DRINK_EX", "LIFE/DRINK_NON"};
  return codes;
}

std::string_view cycle_prefix(int k) {
  static constexpr std::string_view prefixes[] = {"DX/", "RX/", "PX/", "LAB/"};
  return prefixes[k % 4];
}

std::string signature_code(std::size_t stratum, int k) {
  return std::string(cycle_prefix(k)) + "SIG" + std::to_string(stratum) + "_" + std::to_string(k);
}

std::string noise_code(int k) { return std::string(cycle_prefix(k)) + "N" + std::to_string(k); }

std::size_t sample_index(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // rounding slack: last index with positive mass
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  return probs.size() - 1;
}

// [lo, hi) range of values that fall into category k; the open top bucket
// gets a finite width equal to its predecessor's.
std::pair<double, double> category_range(const std::vector<double>& edges, int k) {
  const double lo = k == 0 ? 0.0 : edges[k - 1];
  double hi;
  if (k < static_cast<int>(edges.size())) {
    hi = edges[k];
  } else {
    const double prev = edges.size() >= 2 ? edges[edges.size() - 2] : 0.0;
    hi = edges.back() + (edges.back() - prev);
  }
  return {lo, hi};
}

struct CodeTables {
  std::vector<std::vector<TokenId>> signatures;  // per stratum
  std::vector<TokenId> noise;
  std::vector<TokenId> lifestyle;
  TokenId outcome;
};

TokenId noise_event(const CodeTables& tables, const CodeVocabulary& vocab, Rng& rng, bool& emitted) {
  emitted = true;
  const double u = rng.uniform();
  if (u < 0.7) return tables.noise[rng.uniform_int(0, static_cast<std::int64_t>(tables.noise.size()) - 1)];
  if (u < 0.9) {
    std::optional<TokenId> token;
    switch (rng.uniform_int(0, 2)) {
      case 0: token = categorize_measurement(135.0 + 20.0 * rng.normal(), MeasurementKind::kSystolicBp, vocab); break;
      case 1: token = categorize_measurement(80.0 + 12.0 * rng.normal(), MeasurementKind::kDiastolicBp, vocab); break;
      default: token = categorize_measurement(27.0 + 5.0 * rng.normal(), MeasurementKind::kBmi, vocab); break;
    }
    if (!token) {
      emitted = false;  // out-of-range measurement is dropped
      return CodeVocabulary::kUnk;
    }
    return *token;
  }
  return tables.lifestyle[rng.uniform_int(0, static_cast<std::int64_t>(tables.lifestyle.size()) - 1)];
}

std::optional<PatientRecord> draw_patient(const GeneratorConfig& config, const CodeVocabulary& vocab,
                                          const CodeTables& tables, std::size_t stratum,
                                          const ConceptVector& intended, Rng& rng) {
  const auto specs = specs_of(config.concepts);
  PatientRecord r;
  r.stratum = static_cast<int>(stratum);
  r.baseline_time = rng.uniform(config.min_baseline_age, config.max_baseline_age);

  double observation = rng.uniform(config.min_observation_years, config.max_observation_years);
  std::optional<double> follow_up;
  std::optional<std::pair<double, double>> rate_range;
  std::vector<TokenId> index_codes;
  for (std::size_t c = 0; c < config.concepts.size(); ++c) {
    const auto& rule = config.concepts[c];
    if (rule.kind == ConceptRuleKind::kFollowUp) {
      const auto [lo, hi] = category_range(rule.edges, intended[c]);
      follow_up = rng.uniform(lo, hi);
      for (const auto& code : rule.codes) index_codes.push_back(vocab.id(code));
    } else if (rule.kind == ConceptRuleKind::kVisitFrequency) {
      rate_range = category_range(rule.edges, intended[c]);
    }
  }
  if (follow_up) observation = std::max(observation, *follow_up);

  int visits;
  if (rate_range) {
    const int lo = std::max(config.min_visits, static_cast<int>(std::ceil(rate_range->first * observation)));
    const int hi = static_cast<int>(std::ceil(rate_range->second * observation)) - 1;
    if (hi < lo) return std::nullopt;
    visits = static_cast<int>(rng.uniform_int(lo, hi));
  } else {
    visits = static_cast<int>(rng.uniform_int(config.min_visits, config.max_visits));
  }

  const double start = r.baseline_time - observation;
  std::vector<double> times{start};
  for (int v = 1; v < visits; ++v) times.push_back(rng.uniform(start, r.baseline_time));
  std::sort(times.begin() + 1, times.end());
  int index_visit = -1;
  if (follow_up) {
    const double t = r.baseline_time - *follow_up;
    if (t <= start) {
      index_visit = 0;
    } else {
      if (visits == 1) return std::nullopt;
      const auto v = rng.uniform_int(1, visits - 1);
      times[v] = t;
      std::sort(times.begin() + 1, times.end());
      index_visit = static_cast<int>(std::find(times.begin(), times.end(), t) - times.begin());
    }
  }

  std::vector<std::vector<TokenId>> per_visit(visits);
  for (int v = 0; v < visits; ++v) {
    const auto n = rng.uniform_int(config.min_events_per_visit, config.max_events_per_visit);
    for (std::int64_t k = 0; k < n; ++k) {
      if (rng.uniform() < config.signature_rate) {
        const auto& sig = tables.signatures[stratum];
        per_visit[v].push_back(sig[rng.uniform_int(0, static_cast<std::int64_t>(sig.size()) - 1)]);
      } else {
        bool emitted = false;
        const TokenId t = noise_event(tables, vocab, rng, emitted);
        if (emitted) per_visit[v].push_back(t);
      }
    }
  }
  for (std::size_t c = 0; c < config.concepts.size(); ++c) {
    const auto& rule = config.concepts[c];
    if (rule.kind != ConceptRuleKind::kCodePresence || intended[c] == 0) continue;
    const auto repeats = rng.uniform_int(1, std::max(1, config.max_concept_code_repeats));
    for (std::int64_t k = 0; k < repeats; ++k) {
      const TokenId code = vocab.id(rule.codes[rng.uniform_int(0, static_cast<std::int64_t>(rule.codes.size()) - 1)]);
      per_visit[rng.uniform_int(0, visits - 1)].push_back(code);
    }
  }
  if (index_visit >= 0) per_visit[index_visit].push_back(index_codes.front());

  for (int v = 0; v < visits; ++v) {
    auto& events = per_visit[v];
    if (events.empty()) {
      bool emitted = false;
      TokenId t = CodeVocabulary::kUnk;
      while (!emitted) t = noise_event(tables, vocab, rng, emitted);
      events.push_back(t);
    }
    for (std::size_t i = events.size(); i > 1; --i) {
      std::swap(events[i - 1], events[rng.uniform_int(0, static_cast<std::int64_t>(i) - 1)]);
    }
    const int age = static_cast<int>(std::floor(times[v]));
    for (TokenId t : events) r.events.push_back({t, age, v});
  }
  r.visit_times = times;
  r.baseline_index = r.events.size();
  if (config.max_history_events && r.baseline_index > config.max_history_events) return std::nullopt;

  const ConceptVector derived = derive_concepts(r, config.concepts, vocab);
  if (derived != intended) return std::nullopt;
  r.concepts = derived;
  return r;
}

}  // namespace

CodeVocabulary generator_vocabulary(const GeneratorConfig& config) {
  CodeVocabulary vocab;
  for (const auto& rule : config.concepts)
    for (const auto& code : rule.codes) vocab.add(code);
  vocab.add(kOutcomeCode);
  for (std::size_t s = 0; s < config.num_strata(); ++s)
    for (int k = 0; k < config.signature_codes_per_stratum; ++k) vocab.add(signature_code(s, k));
  for (int k = 0; k < config.noise_codes; ++k) vocab.add(noise_code(k));
  for (auto kind : {MeasurementKind::kSystolicBp, MeasurementKind::kDiastolicBp, MeasurementKind::kBmi})
    for (const auto& code : measurement_codes(kind)) vocab.add(code);
  for (const auto& code : lifestyle_codes()) vocab.add(code);
  return vocab;
}

Dataset generate_cohort(const GeneratorConfig& config, std::size_t shards) {
  config.validate();
  if (shards == 0) throw UsageError("generate_cohort needs at least one shard");
  Dataset data;
  data.task = config.task;
  data.concepts = config.concepts;
  data.vocab = generator_vocabulary(config);

  CodeTables tables;
  for (std::size_t s = 0; s < config.num_strata(); ++s) {
    std::vector<TokenId> sig;
    for (int k = 0; k < config.signature_codes_per_stratum; ++k) sig.push_back(data.vocab.id(signature_code(s, k)));
    tables.signatures.push_back(std::move(sig));
  }
  for (int k = 0; k < config.noise_codes; ++k) tables.noise.push_back(data.vocab.id(noise_code(k)));
  for (const auto& code : lifestyle_codes()) tables.lifestyle.push_back(data.vocab.id(code));
  tables.outcome = data.vocab.id(kOutcomeCode);

  const auto specs = specs_of(config.concepts);
  data.patients.resize(config.num_patients);
  const std::size_t per_shard = (config.num_patients + shards - 1) / shards;
  for (std::size_t shard = 0; shard < shards; ++shard) {
    const std::size_t begin = shard * per_shard;
    const std::size_t end = std::min(config.num_patients, begin + per_shard);
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = Rng::derive(config.seed, {static_cast<std::uint64_t>(i)});
      const std::size_t stratum = sample_index(config.stratum_weights, rng);
      const std::size_t combo = sample_index(config.combination_distribution[stratum], rng);
      const ConceptVector intended = combination_at(specs, combo);
      std::optional<PatientRecord> record;
      for (int attempt = 0; attempt < 1000 && !record; ++attempt) {
        record = draw_patient(config, data.vocab, tables, stratum, intended, rng);
      }
      if (!record) {
        throw ConfigError("generator cannot realise combination " + render_combination(specs, intended) +
                          " under the configured event limits");
      }
      PatientRecord& r = *record;
      r.id = static_cast<std::int64_t>(i);
      r.label = rng.bernoulli(config.risk_table[stratum][combo]) ? 1 : 0;

      // outcome window: a few events after baseline, including the outcome code for cases
      const int next_visit = static_cast<int>(r.visit_times.size());
      const double t = r.baseline_time + rng.uniform(0.1, 5.0);
      r.visit_times.push_back(t);
      const int age = static_cast<int>(std::floor(t));
      bool emitted = false;
      const TokenId extra = noise_event(tables, data.vocab, rng, emitted);
      if (emitted) r.events.push_back({extra, age, next_visit});
      if (r.label) r.events.push_back({tables.outcome, age, next_visit});
      data.patients[i] = std::move(r);
    }
  }
  return data;
}

double oracle_risk_ratio(const GeneratorConfig& config, int stratum, std::size_t exposure,
                         const ConceptVector& base, int exposed_value, int unexposed_value) {
  const auto specs = specs_of(config.concepts);
  if (stratum < 0 || static_cast<std::size_t>(stratum) >= config.num_strata()) {
    throw UsageError("stratum out of range");
  }
  if (exposure >= specs.size()) throw UsageError("exposure concept out of range");
  ConceptVector exposed = base, unexposed = base;
  exposed[exposure] = exposed_value;
  unexposed[exposure] = unexposed_value;
  const auto& row = config.risk_table[stratum];
  return row[combination_index(specs, exposed)] / row[combination_index(specs, unexposed)];
}

// ---- templates ----------------------------------------------------------------

namespace {

// Independent per-concept marginals -> joint distribution over combinations.
std::vector<double> product_distribution(const std::vector<ConceptSpec>& specs,
                                         const std::vector<std::vector<double>>& marginals) {
  std::vector<double> joint(combination_count(specs));
  for (std::size_t k = 0; k < joint.size(); ++k) {
    const ConceptVector cv = combination_at(specs, k);
    double p = 1.0;
    for (std::size_t c = 0; c < specs.size(); ++c) p *= marginals[c][cv[c]];
    joint[k] = p;
  }
  const double total = std::accumulate(joint.begin(), joint.end(), 0.0);
  for (double& p : joint) p /= total;
  return joint;
}

}  // namespace

GeneratorConfig af_hf_template(std::size_t num_patients, std::uint64_t seed) {
  GeneratorConfig g;
  g.task = "af-hf";
  g.num_patients = num_patients;
  g.seed = seed;
  g.concepts = {code_presence_rule("AF", {"DX/I48"}),
                code_presence_rule("HTN", {"DX/I10"}),
                code_presence_rule("DM", {"DX/E11"})};
  const auto specs = specs_of(g.concepts);

  g.stratum_weights = {0.15, 0.27, 0.25, 0.33};
  // prevalence of AF, HTN, DM within each stratum
  const double prevalence[4][3] = {{0.35, 0.30, 0.20}, {0.40, 0.45, 0.35},
                                   {0.40, 0.55, 0.40}, {0.45, 0.60, 0.45}};
  // multiplicative risk: base * rr_af^AF * rr_htn^HTN * rr_dm^DM
  const double base[4] = {0.02, 0.06, 0.40, 0.88};
  const double rr_af[4] = {4.0, 2.5, 1.8, 1.1};
  const double rr_htn[4] = {1.0, 1.5, 1.2, 1.0};
  const double rr_dm[4] = {1.0, 1.5, 1.1, 1.0};
  for (int s = 0; s < 4; ++s) {
    std::vector<std::vector<double>> marginals;
    for (int c = 0; c < 3; ++c) marginals.push_back({1.0 - prevalence[s][c], prevalence[s][c]});
    g.combination_distribution.push_back(product_distribution(specs, marginals));
    std::vector<double> risk(combination_count(specs));
    for (std::size_t k = 0; k < risk.size(); ++k) {
      const ConceptVector cv = combination_at(specs, k);
      risk[k] = base[s] * std::pow(rr_af[s], cv[0]) * std::pow(rr_htn[s], cv[1]) * std::pow(rr_dm[s], cv[2]);
    }
    g.risk_table.push_back(std::move(risk));
  }
  g.min_visits = 3;
  g.max_visits = 10;
  g.min_events_per_visit = 1;
  g.max_events_per_visit = 3;
  return g;
}

GeneratorConfig f_hf_template(std::size_t num_patients, std::uint64_t seed) {
  GeneratorConfig g;
  g.task = "f-hf";
  g.num_patients = num_patients;
  g.seed = seed;
  g.concepts = {visit_frequency_rule("ADMISSION_FREQ"), follow_up_rule("FOLLOW_UP", {"DX/I25"})};
  const auto specs = specs_of(g.concepts);

  g.stratum_weights = {0.25, 0.25, 0.25, 0.25};
  const double intercept[4] = {-3.0, -1.5, 0.0, 1.0};
  for (int s = 0; s < 4; ++s) {
    // busier strata shift admission frequency upwards
    std::vector<double> freq(7), follow(8, 1.0 / 8.0);
    for (int k = 0; k < 7; ++k) freq[k] = std::exp(-0.5 * std::pow((k - (1.0 + s)) / 1.5, 2.0));
    const double total = std::accumulate(freq.begin(), freq.end(), 0.0);
    for (double& f : freq) f /= total;
    g.combination_distribution.push_back(product_distribution(specs, {freq, follow}));
    std::vector<double> risk(combination_count(specs));
    for (std::size_t k = 0; k < risk.size(); ++k) {
      const ConceptVector cv = combination_at(specs, k);
      const double logit = intercept[s] + 0.25 * cv[0] + 0.15 * cv[1];
      risk[k] = 1.0 / (1.0 + std::exp(-logit));
    }
    g.risk_table.push_back(std::move(risk));
  }
  g.min_observation_years = 3.0;
  g.max_observation_years = 5.0;
  g.min_events_per_visit = 1;
  g.max_events_per_visit = 2;
  g.max_concept_code_repeats = 1;
  g.min_baseline_age = 50.0;
  return g;
}

GeneratorConfig task_template(const std::string& name, std::size_t num_patients, std::uint64_t seed) {
  if (name == "af-hf") return af_hf_template(num_patients, seed);
  if (name == "f-hf") return f_hf_template(num_patients, seed);
  throw ConfigError("task.template must be 'af-hf' or 'f-hf', got '" + name + "'");
}

// ---- splitting ------------------------------------------------------------------

DatasetSplit split_dataset(std::size_t n, const SplitRatios& ratios, std::uint64_t seed) {
  for (double r : {ratios.train, ratios.tune, ratios.valid}) {
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("split ratios must each lie in (0, 1)");
  }
  if (std::abs(ratios.train + ratios.tune + ratios.valid - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x73706c6974ULL));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<std::int64_t>(i) - 1)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
  const auto n_tune = std::min(n - std::min(n, n_train),
                               static_cast<std::size_t>(std::llround(ratios.tune * static_cast<double>(n))));
  DatasetSplit split;
  split.train.assign(order.begin(), order.begin() + std::min(n, n_train));
  split.tune.assign(order.begin() + split.train.size(), order.begin() + split.train.size() + n_tune);
  split.valid.assign(order.begin() + split.train.size() + n_tune, order.end());
  return split;
}

std::vector<PatientRecord> select_patients(const Dataset& data, const std::vector<std::size_t>& idx) {
  std::vector<PatientRecord> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data.patients.at(i));
  return out;
}

// ---- persistence -----------------------------------------------------------------

namespace {

constexpr int kCohortVersion = 1;

std::string rule_kind_name(ConceptRuleKind k) {
  switch (k) {
    case ConceptRuleKind::kCodePresence: return "code-presence";
    case ConceptRuleKind::kVisitFrequency: return "visit-frequency";
    case ConceptRuleKind::kFollowUp: return "follow-up";
  }
  return "";
}

ConceptRuleKind parse_rule_kind(const std::string& s) {
  if (s == "code-presence") return ConceptRuleKind::kCodePresence;
  if (s == "visit-frequency") return ConceptRuleKind::kVisitFrequency;
  if (s == "follow-up") return ConceptRuleKind::kFollowUp;
  throw DataError("unknown concept rule kind '" + s + "'");
}

}  // namespace

json concept_rule_to_json(const ConceptRule& r) {
  json j = concept_spec_to_json(r.spec);
  j["rule"] = rule_kind_name(r.kind);
  j["codes"] = r.codes;
  j["edges"] = r.edges;
  return j;
}

ConceptRule concept_rule_from_json(const json& j) {
  ConceptRule r;
  r.spec = concept_spec_from_json(j);
  r.kind = parse_rule_kind(j.at("rule").get<std::string>());
  r.codes = j.at("codes").get<std::vector<std::string>>();
  r.edges = j.at("edges").get<std::vector<double>>();
  return r;
}

void write_cohort(std::ostream& out, const Dataset& data) {
  json header{{"format", "pcb-cohort"},
              {"version", kCohortVersion},
              {"task", data.task},
              {"patients", data.patients.size()},
              {"concepts", json::array()}};
  for (const auto& r : data.concepts) header["concepts"].push_back(concept_rule_to_json(r));
  out << header.dump() << '\n';
  for (const auto& p : data.patients) {
    json events = json::array();
    for (const auto& e : p.events) events.push_back({e.code, e.age_years, e.visit});
    json line{{"id", p.id},
              {"stratum", p.stratum},
              {"label", p.label},
              {"concepts", p.concepts},
              {"baseline_index", p.baseline_index},
              {"baseline_time", p.baseline_time},
              {"visit_times", p.visit_times},
              {"events", std::move(events)}};
    out << line.dump() << '\n';
  }
}

Dataset read_cohort(std::istream& in, const CodeVocabulary& vocab) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty cohort file");
  Dataset data;
  data.vocab = vocab;
  std::size_t expected = 0;
  try {
    const json header = json::parse(line);
    if (header.at("format") != "pcb-cohort") throw DataError("not a pcb-cohort file");
    if (header.at("version").get<int>() != kCohortVersion) {
      throw DataError("unsupported cohort format version " + header.at("version").dump());
    }
    data.task = header.at("task").get<std::string>();
    expected = header.at("patients").get<std::size_t>();
    for (const auto& c : header.at("concepts")) data.concepts.push_back(concept_rule_from_json(c));
  } catch (const json::exception& e) {
    throw DataError(std::string("bad cohort header: ") + e.what());
  }
  const auto specs = data.specs();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      PatientRecord p;
      p.id = j.at("id").get<std::int64_t>();
      p.stratum = j.at("stratum").get<int>();
      p.label = j.at("label").get<int>();
      p.concepts = j.at("concepts").get<ConceptVector>();
      p.baseline_index = j.at("baseline_index").get<std::size_t>();
      p.baseline_time = j.at("baseline_time").get<double>();
      p.visit_times = j.at("visit_times").get<std::vector<double>>();
      for (const auto& e : j.at("events")) {
        MedicalEvent ev{e.at(0).get<TokenId>(), e.at(1).get<int>(), e.at(2).get<int>()};
        vocab.entry(ev.code);
        p.events.push_back(ev);
      }
      validate_record(p);
      validate_concepts(specs, p.concepts);
      data.patients.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw DataError("cohort line " + std::to_string(line_no) + ": " + e.what());
    } catch (const UsageError& e) {
      throw DataError("cohort line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (data.patients.size() != expected) {
    throw DataError("cohort header announces " + std::to_string(expected) + " patients, file has " +
                    std::to_string(data.patients.size()));
  }
  return data;
}

void save_dataset(const std::string& cohort_path, const std::string& vocab_path, const Dataset& data) {
  std::ofstream cohort(cohort_path, std::ios::binary);
  if (!cohort) throw DataError("cannot write " + cohort_path);
  write_cohort(cohort, data);
  std::ofstream vocab(vocab_path, std::ios::binary);
  if (!vocab) throw DataError("cannot write " + vocab_path);
  data.vocab.write(vocab);
}

Dataset load_dataset(const std::string& cohort_path, const std::string& vocab_path) {
  std::ifstream vocab_in(vocab_path, std::ios::binary);
  if (!vocab_in) throw DataError("cannot open " + vocab_path);
  const CodeVocabulary vocab = CodeVocabulary::read(vocab_in);
  std::ifstream cohort_in(cohort_path, std::ios::binary);
  if (!cohort_in) throw DataError("cannot open " + cohort_path);
  return read_cohort(cohort_in, vocab);
}

}  // namespace pcb
