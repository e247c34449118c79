#include "pcb/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "pcb/error.hpp"
#include "pcb/metrics.hpp"

namespace pcb {

namespace {

bool matches(const ConceptVector& values, const ConceptVector& pattern, std::size_t skip) {
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (i == skip || pattern[i] == kAnyValue) continue;
    if (values[i] != pattern[i]) return false;
  }
  return true;
}

}  // namespace

std::vector<ClusterId> assign_clusters(const PcbModel& model, const std::vector<Example>& examples) {
  std::vector<ClusterId> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(code_to_int(model.latent_code(ex)));
  return out;
}

std::map<ClusterId, std::size_t> cluster_sizes(const std::vector<ClusterId>& assignments) {
  std::map<ClusterId, std::size_t> sizes;
  for (ClusterId c : assignments) ++sizes[c];
  return sizes;
}

std::vector<ClusterId> select_major_clusters(const std::map<ClusterId, std::size_t>& sizes,
                                             double coverage) {
  if (!(coverage > 0.0 && coverage <= 1.0)) throw ConfigError("analysis.coverage: must lie in (0, 1]");
  std::vector<std::pair<ClusterId, std::size_t>> order(sizes.begin(), sizes.end());
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::size_t total = 0;
  for (const auto& [id, n] : order) total += n;
  std::vector<ClusterId> out;
  if (total == 0) return out;
  std::size_t covered = 0;
  for (const auto& [id, n] : order) {
    if (n == 0) continue;
    out.push_back(id);
    covered += n;
    if (static_cast<double>(covered) >= coverage * static_cast<double>(total)) break;
  }
  return out;
}

std::size_t UpsetTable::count_of(const std::vector<ConceptSpec>& specs,
                                 const ConceptVector& values) const {
  std::size_t n = 0;
  for (const auto& cell : cells) {
    if (matches(cell.combination, values, specs.size())) n += cell.count;
  }
  return n;
}

UpsetTable upset(ClusterId cluster, const std::vector<ConceptSpec>& specs,
                 const std::vector<ConceptVector>& member_concepts,
                 const std::vector<double>& member_risks) {
  if (member_concepts.size() != member_risks.size()) {
    throw UsageError("upset: concepts and risks differ in length");
  }
  std::map<std::size_t, std::pair<std::size_t, double>> cells;
  for (std::size_t i = 0; i < member_concepts.size(); ++i) {
    auto& cell = cells[combination_index(specs, member_concepts[i])];
    ++cell.first;
    cell.second += member_risks[i];
  }
  UpsetTable table;
  table.cluster = cluster;
  table.size = member_concepts.size();
  for (const auto& [index, cell] : cells) {
    table.cells.push_back({combination_at(specs, index), cell.first,
                           cell.second / static_cast<double>(cell.first)});
  }
  return table;
}

void PlausibilityRange::validate() const {
  if (!(min_prevalence >= 0.0 && max_prevalence <= 1.0 && min_prevalence < max_prevalence)) {
    throw ConfigError("analysis.plausibility_min/plausibility_max: need 0 <= min < max <= 1");
  }
}

std::string verdict_name(Verdict verdict) {
  switch (verdict) {
    case Verdict::kPlausible: return "plausible";
    case Verdict::kImplausible: return "implausible";
    case Verdict::kImpossible: return "impossible";
  }
  return "impossible";
}

double prevalence(const UpsetTable& table, const ConceptVector& values) {
  if (table.size == 0) return 0.0;
  std::size_t n = 0;
  for (const auto& cell : table.cells) {
    if (matches(cell.combination, values, values.size())) n += cell.count;
  }
  return static_cast<double>(n) / static_cast<double>(table.size);
}

Verdict judge_plausibility(double p, const PlausibilityRange& range) {
  if (p <= 0.0 || p >= 1.0) return Verdict::kImpossible;
  if (p >= range.min_prevalence && p <= range.max_prevalence) return Verdict::kPlausible;
  return Verdict::kImplausible;
}

Verdict judge_plausibility(const UpsetTable& table, const ConceptVector& intervention,
                           const PlausibilityRange& range) {
  return judge_plausibility(prevalence(table, intervention), range);
}

RiskRatio risk_ratio(const PcbModel& model, ClusterId cluster, std::size_t exposure,
                     const ConceptVector& base, int exposed_value, int unexposed_value) {
  if (exposure >= model.specs().size()) throw UsageError("exposure concept index out of range");
  const LatentCode code = code_from_int(cluster, model.latent_groups());
  ConceptVector exposed = base, unexposed = base;
  exposed[exposure] = exposed_value;
  unexposed[exposure] = unexposed_value;
  RiskRatio rr;
  rr.exposed_risk = model.estimate_risk(code, exposed);
  rr.unexposed_risk = model.estimate_risk(code, unexposed);
  if (!(rr.unexposed_risk > 0.0)) throw DataError("unexposed risk is zero; ratio undefined");
  rr.ratio = rr.exposed_risk / rr.unexposed_risk;
  return rr;
}

std::optional<ObservedRiskRatio> observed_risk_ratio(const std::vector<ConceptVector>& concepts,
                                                     const std::vector<int>& labels,
                                                     std::size_t exposure, const ConceptVector& base,
                                                     int exposed_value, int unexposed_value) {
  if (concepts.size() != labels.size()) throw UsageError("observed_risk_ratio: length mismatch");
  if (exposure >= base.size()) throw UsageError("exposure concept index out of range");
  ObservedRiskRatio o;
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (!matches(concepts[i], base, exposure)) continue;
    const int v = concepts[i][exposure];
    if (v == exposed_value) {
      ++o.exposed_count;
      o.exposed_cases += static_cast<std::size_t>(labels[i]);
    } else if (v == unexposed_value) {
      ++o.unexposed_count;
      o.unexposed_cases += static_cast<std::size_t>(labels[i]);
    }
  }
  if (o.exposed_count == 0 || o.unexposed_count == 0 || o.unexposed_cases == 0) return std::nullopt;
  const double pe = static_cast<double>(o.exposed_cases) / static_cast<double>(o.exposed_count);
  const double pu = static_cast<double>(o.unexposed_cases) / static_cast<double>(o.unexposed_count);
  o.ratio = pe / pu;
  return o;
}

CounterfactualResult counterfactual(const PcbModel& model, const UpsetTable& table,
                                    const ConceptVector& intervention,
                                    const ConceptVector& reference,
                                    const PlausibilityRange& range) {
  validate_concepts(model.specs(), intervention);
  validate_concepts(model.specs(), reference);
  const LatentCode code = code_from_int(table.cluster, model.latent_groups());
  CounterfactualResult r;
  r.cluster = table.cluster;
  r.intervention = intervention;
  r.reference = reference;
  r.risk = model.estimate_risk(code, intervention);
  r.reference_risk = model.estimate_risk(code, reference);
  r.risk_ratio = r.risk / r.reference_risk;
  r.prevalence = prevalence(table, intervention);
  r.verdict = judge_plausibility(r.prevalence, range);
  return r;
}

const ClusterSummary* ClusterAnalysis::find(ClusterId id) const {
  for (const auto& s : summaries) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

std::vector<std::size_t> ClusterAnalysis::members(ClusterId id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (clusters[i] == id) out.push_back(i);
  }
  return out;
}

ClusterAnalysis analyze_clusters(const PcbModel& model, const std::vector<Example>& examples,
                                 double coverage) {
  ClusterAnalysis a;
  a.specs = model.specs();
  a.latent_groups = model.latent_groups();
  a.coverage = coverage;
  for (const auto& ex : examples) {
    PcbPrediction p = model.predict(ex);
    a.patient_ids.push_back(ex.patient_id);
    a.clusters.push_back(code_to_int(p.code));
    a.concepts.push_back(ex.concepts);
    a.labels.push_back(ex.label);
    a.risks.push_back(p.risk);
  }
  const auto sizes = cluster_sizes(a.clusters);
  const auto major = select_major_clusters(sizes, coverage);
  std::map<ClusterId, std::vector<ConceptVector>> member_concepts;
  std::map<ClusterId, std::vector<double>> member_risks;
  for (std::size_t i = 0; i < a.clusters.size(); ++i) {
    member_concepts[a.clusters[i]].push_back(a.concepts[i]);
    member_risks[a.clusters[i]].push_back(a.risks[i]);
  }
  for (const auto& [id, n] : sizes) {
    UpsetTable t = upset(id, a.specs, member_concepts[id], member_risks[id]);
    ClusterSummary s;
    s.id = id;
    s.size = n;
    s.share = static_cast<double>(n) / static_cast<double>(a.clusters.size());
    double total = 0.0;
    for (double r : member_risks[id]) total += r;
    s.mean_risk = total / static_cast<double>(n);
    s.major = std::find(major.begin(), major.end(), id) != major.end();
    a.summaries.push_back(s);
    a.upsets.emplace(id, std::move(t));
  }
  std::stable_sort(a.summaries.begin(), a.summaries.end(),
                   [](const ClusterSummary& x, const ClusterSummary& y) { return x.size > y.size; });
  return a;
}

SanityReport sanity_report(const PcbModel& model, const ClusterAnalysis& analysis,
                           std::size_t exposure, const PlausibilityRange& range) {
  range.validate();
  const auto& specs = analysis.specs;
  if (exposure >= specs.size()) throw UsageError("exposure concept index out of range");
  if (specs[exposure].kind != ConceptKind::kBinary) {
    throw UsageError("sanity report needs a binary exposure concept");
  }
  SanityReport report;
  report.exposure = specs[exposure].name;

  for (const auto& s : analysis.summaries) {
    if (!s.major) continue;
    const UpsetTable& table = analysis.upsets.at(s.id);
    ConceptVector exposed_pattern(specs.size(), kAnyValue);
    exposed_pattern[exposure] = 1;
    const double share = prevalence(table, exposed_pattern);
    if (judge_plausibility(share, range) != Verdict::kPlausible) continue;

    const UpsetCell* modal = nullptr;
    for (const auto& cell : table.cells) {
      if (modal == nullptr || cell.count > modal->count) modal = &cell;
    }
    SanityRow row;
    row.cluster = s.id;
    row.size = s.size;
    row.exposed_share = share;
    row.base = modal->combination;
    row.base[exposure] = 0;
    row.estimated = risk_ratio(model, s.id, exposure, row.base);

    std::vector<ConceptVector> concepts;
    std::vector<int> labels;
    for (std::size_t i : analysis.members(s.id)) {
      concepts.push_back(analysis.concepts[i]);
      labels.push_back(analysis.labels[i]);
    }
    row.observed = observed_risk_ratio(concepts, labels, exposure,
                                       ConceptVector(specs.size(), kAnyValue));
    report.rows.push_back(std::move(row));
  }

  std::vector<double> est, obs;
  for (const auto& row : report.rows) {
    if (!row.observed) continue;
    est.push_back(row.estimated.ratio);
    obs.push_back(row.observed->ratio);
  }
  if (est.size() < 3) {
    report.notice = "correlation omitted: " + std::to_string(est.size()) +
                    " comparable clusters (need 3)";
  } else {
    try {
      report.spearman = spearman(est, obs);
    } catch (const UndefinedMetricError& e) {
      report.notice = std::string("correlation omitted: ") + e.what();
    }
  }
  return report;
}

void write_cluster_table(std::ostream& out, const ClusterAnalysis& analysis) {
  out << "cluster\tcode\tsize\tshare\tmean_risk\tmajor\n";
  for (const auto& s : analysis.summaries) {
    out << s.id << '\t' << render_code(code_from_int(s.id, analysis.latent_groups)) << '\t'
        << s.size << '\t' << s.share << '\t' << s.mean_risk << '\t' << (s.major ? 1 : 0) << '\n';
  }
}

void write_upset_table(std::ostream& out, const UpsetTable& table,
                       const std::vector<ConceptSpec>& specs) {
  out << "combination";
  for (const auto& spec : specs) out << '\t' << spec.name;
  out << "\tcount\tshare\tmean_risk\n";
  for (const auto& cell : table.cells) {
    out << render_combination(specs, cell.combination);
    for (int v : cell.combination) out << '\t' << v;
    out << '\t' << cell.count << '\t'
        << static_cast<double>(cell.count) / static_cast<double>(table.size) << '\t'
        << cell.mean_risk << '\n';
  }
}

void write_sanity_table(std::ostream& out, const SanityReport& report, int latent_groups) {
  out << "# exposure " << report.exposure;
  if (report.spearman) out << " spearman " << *report.spearman;
  if (!report.notice.empty()) out << " notice: " << report.notice;
  out << '\n';
  out << "cluster\tcode\tsize\texposed_share\testimated_rr\texposed_risk\tunexposed_risk\t"
         "observed_rr\texposed_cases\texposed_n\tunexposed_cases\tunexposed_n\n";
  for (const auto& r : report.rows) {
    out << r.cluster << '\t' << render_code(code_from_int(r.cluster, latent_groups)) << '\t'
        << r.size << '\t' << r.exposed_share << '\t' << r.estimated.ratio << '\t'
        << r.estimated.exposed_risk << '\t' << r.estimated.unexposed_risk << '\t';
    if (r.observed) {
      out << r.observed->ratio << '\t' << r.observed->exposed_cases << '\t'
          << r.observed->exposed_count << '\t' << r.observed->unexposed_cases << '\t'
          << r.observed->unexposed_count << '\n';
    } else {
      out << "NA\tNA\tNA\tNA\tNA\n";
    }
  }
}

}  // namespace pcb
