#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "pcb/cohort.hpp"
#include "pcb/error.hpp"
#include "pcb/model.hpp"
#include "support.hpp"

using namespace pcb;

TEST(Vocabulary, SpecialsAndRoundTrip) {
  CodeVocabulary v;
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.entry(CodeVocabulary::kPad).code, "[PAD]");
  const TokenId a = v.add("DX/I48");
  EXPECT_EQ(v.add("DX/I48"), a);
  EXPECT_EQ(channel_of("RX/123"), Channel::kMedication);
  EXPECT_THROW(v.id("DX/NOPE"), DataError);
  std::stringstream ss;
  v.write(ss);
  EXPECT_EQ(CodeVocabulary::read(ss), v);
}

TEST(Vocabulary, MeasurementBucketsAreInclusiveAtBothEnds) {
  const auto low = measurement_bucket(80.0, MeasurementKind::kSystolicBp);
  ASSERT_TRUE(low);
  EXPECT_EQ(low->lower, 80.0);
  EXPECT_EQ(low->upper, 85.0);
  const auto edge = measurement_bucket(85.0, MeasurementKind::kSystolicBp);
  EXPECT_EQ(edge->lower, 85.0);
  const auto top = measurement_bucket(200.0, MeasurementKind::kSystolicBp);
  ASSERT_TRUE(top);
  EXPECT_EQ(top->lower, 195.0);
  EXPECT_FALSE(measurement_bucket(79.9, MeasurementKind::kSystolicBp));
  EXPECT_FALSE(measurement_bucket(200.1, MeasurementKind::kSystolicBp));
  EXPECT_EQ(measurement_codes(MeasurementKind::kSystolicBp).size(), 24u);
  EXPECT_EQ(measurement_codes(MeasurementKind::kDiastolicBp).size(), 18u);
  EXPECT_EQ(measurement_codes(MeasurementKind::kBmi).size(), 34u);
  EXPECT_THROW(measurement_bucket(std::nan(""), MeasurementKind::kBmi), UsageError);
  EXPECT_THROW(parse_measurement_kind("weight"), UsageError);
}

TEST(Concepts, CombinationEnumerationIsMixedRadix) {
  const std::vector<ConceptSpec> specs = {ConceptSpec::binary("A"),
                                          ConceptSpec::categorical("B", {"x", "y", "z"})};
  EXPECT_EQ(combination_count(specs), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(combination_index(specs, combination_at(specs, i)), i);
  EXPECT_EQ(combination_at(specs, 4), (ConceptVector{1, 1}));
  EXPECT_EQ(render_combination(specs, {1, 2}), "A=1,B=2");
}

TEST(Concepts, DerivationRules) {
  CodeVocabulary vocab;
  const TokenId af = vocab.add("DX/I48"), hf = vocab.add("DX/I50"), other = vocab.add("DX/Z00");
  PatientRecord r;
  r.events = {{other, 60, 0}, {af, 61, 1}, {other, 62, 2}, {hf, 63, 3}};
  r.visit_times = {60.0, 61.0, 62.5, 63.0};
  r.baseline_index = 3;
  r.baseline_time = 63.0;
  EXPECT_EQ(derive_concept(r, code_presence_rule("AF", {"DX/I48"}), vocab), 1);
  // HF only occurs after baseline.
  EXPECT_EQ(derive_concept(r, code_presence_rule("HF", {"DX/I50"}), vocab), 0);
  // 3 visits over 3 years -> 1/year -> first bucket.
  EXPECT_EQ(derive_concept(r, visit_frequency_rule("FREQ"), vocab), 0);
  // First AF at 61.0, baseline 63.0 -> exactly 2 years, boundary goes up.
  EXPECT_EQ(derive_concept(r, follow_up_rule("FU", {"DX/I48"}), vocab), 2);
  EXPECT_EQ(derive_concept(r, follow_up_rule("FU", {"DX/I50"}), vocab), std::nullopt);
  EXPECT_THROW(derive_concepts(r, {follow_up_rule("FU", {"DX/I50"})}, vocab), DataError);
  EXPECT_EQ(bucket_index(1.999, follow_up_edges()), 1u);
  EXPECT_EQ(bucket_index(100.0, follow_up_edges()), 7u);
}

TEST(Cohort, RecordValidation) {
  PatientRecord r;
  r.events = {{4, 60, 1}, {5, 61, 0}};
  r.visit_times = {60.0, 61.0};
  r.baseline_index = 2;
  EXPECT_THROW(validate_record(r), DataError);
  r.events[1].visit = 1;
  validate_record(r);
  r.label = 2;
  EXPECT_THROW(validate_record(r), DataError);
}

TEST(Generator, ShardingDoesNotChangeOutput) {
  const GeneratorConfig g = af_hf_template(300, 17);
  const Dataset one = generate_cohort(g, 1);
  const Dataset four = generate_cohort(g, 4);
  EXPECT_EQ(one.patients, four.patients);
  EXPECT_EQ(one.vocab, four.vocab);
  EXPECT_NE(generate_cohort(af_hf_template(300, 18)).patients, one.patients);
}

TEST(Generator, RecordsAreValidAndConceptsMatchRules) {
  for (const char* task : {"af-hf", "f-hf"}) {
    const Dataset d = generate_cohort(task_template(task, 400, 3));
    EXPECT_EQ(d.task, task);
    ASSERT_EQ(d.patients.size(), 400u);
    for (const auto& p : d.patients) {
      validate_record(p);
      ASSERT_TRUE(meets_minimum_history(p));
      ASSERT_EQ(derive_concepts(p, d.concepts, d.vocab), p.concepts);
    }
  }
}

// Monte Carlo check of the planted structure against the generator tables.
TEST(Generator, FrequenciesMatchConfiguredDistributions) {
  const std::size_t n = 20000;
  const GeneratorConfig g = af_hf_template(n, 5);
  const Dataset d = generate_cohort(g);
  const auto specs = d.specs();
  std::vector<double> stratum_count(g.num_strata(), 0.0);
  std::vector<std::vector<double>> combo_count(g.num_strata(),
                                               std::vector<double>(combination_count(specs), 0.0));
  std::vector<std::vector<double>> positives = combo_count;
  for (const auto& p : d.patients) {
    const std::size_t s = static_cast<std::size_t>(p.stratum);
    const std::size_t c = combination_index(specs, p.concepts);
    stratum_count[s] += 1;
    combo_count[s][c] += 1;
    positives[s][c] += p.label;
  }
  for (std::size_t s = 0; s < g.num_strata(); ++s) {
    const double w = g.stratum_weights[s];
    EXPECT_NEAR(stratum_count[s] / n, w, 5 * std::sqrt(w * (1 - w) / n)) << "stratum " << s;
    for (std::size_t c = 0; c < combo_count[s].size(); ++c) {
      const double pc = g.combination_distribution[s][c];
      EXPECT_NEAR(combo_count[s][c] / stratum_count[s], pc,
                  5 * std::sqrt(pc * (1 - pc) / stratum_count[s]) + 1e-9);
    }
  }
  // Pooled over cells: observed label rate vs expected, z-score per stratum.
  for (std::size_t s = 0; s < g.num_strata(); ++s) {
    double expected = 0, variance = 0, observed = 0;
    for (std::size_t c = 0; c < combo_count[s].size(); ++c) {
      const double r = g.risk_table[s][c];
      expected += combo_count[s][c] * r;
      variance += combo_count[s][c] * r * (1 - r);
      observed += positives[s][c];
    }
    EXPECT_LT(std::abs(observed - expected) / std::sqrt(variance), 5.0) << "stratum " << s;
  }
}

TEST(Generator, OracleRiskRatioFollowsRiskTable) {
  const GeneratorConfig g = af_hf_template(10, 1);
  // Multiplicative template: AF ratio does not depend on the base.
  EXPECT_NEAR(oracle_risk_ratio(g, 0, 0, {0, 0, 0}), 4.0, 1e-12);
  EXPECT_NEAR(oracle_risk_ratio(g, 3, 0, {0, 1, 1}), 1.1, 1e-12);
  EXPECT_THROW(oracle_risk_ratio(g, 4, 0, {0, 0, 0}), UsageError);
}

TEST(Generator, ValidationNamesField) {
  GeneratorConfig g = af_hf_template(10, 1);
  g.stratum_weights[0] += 0.1;
  try {
    g.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("stratum_weights"), std::string::npos);
  }
  EXPECT_THROW(task_template("cvd-hf", 10, 1), ConfigError);
}

TEST(Split, PartitionProperty) {
  for (std::size_t n : {10u, 11u, 997u, 5000u}) {
    const DatasetSplit s = split_dataset(n, {}, 42);
    EXPECT_EQ(s.train.size(), static_cast<std::size_t>(std::llround(0.6 * n)));
    EXPECT_EQ(s.tune.size(), static_cast<std::size_t>(std::llround(0.1 * n)));
    EXPECT_EQ(s.train.size() + s.tune.size() + s.valid.size(), n);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.tune.begin(), s.tune.end());
    all.insert(s.valid.begin(), s.valid.end());
    EXPECT_EQ(all.size(), n);
    EXPECT_EQ(*all.rbegin(), n - 1);
  }
  EXPECT_EQ(split_dataset(100, {}, 1).train, split_dataset(100, {}, 1).train);
  EXPECT_NE(split_dataset(100, {}, 1).train, split_dataset(100, {}, 2).train);
  EXPECT_THROW(split_dataset(100, {0.6, 0.1, 0.2}, 1), ConfigError);
  EXPECT_THROW(split_dataset(100, {1.0, 0.0, 0.0}, 1), ConfigError);
}

TEST(Cohort, JsonLinesRoundTrip) {
  const Dataset d = generate_cohort(task_template("f-hf", 50, 9));
  std::stringstream ss;
  write_cohort(ss, d);
  const Dataset back = read_cohort(ss, d.vocab);
  EXPECT_EQ(back.task, d.task);
  EXPECT_EQ(back.concepts, d.concepts);
  EXPECT_EQ(back.patients, d.patients);

  std::stringstream bad("{\"format\":\"other\"}\n");
  EXPECT_THROW(read_cohort(bad, d.vocab), DataError);
}

TEST(Cohort, ExamplesCarryConceptsAndLabels) {
  const Dataset d = pcbtest::toy_dataset({{{{"DX/I48"}, {"DX/X1"}}, 1}, {{{"DX/I10", "DX/E11"}}, 0}});
  const auto ex = make_examples(d, {1, 0}, 6);
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[0].patient_id, 1);
  EXPECT_EQ(ex[0].concepts, (ConceptVector{0, 1, 1}));
  EXPECT_EQ(ex[1].concepts, (ConceptVector{1, 0, 0}));
  EXPECT_EQ(ex[1].label, 1);
  EXPECT_EQ(ex[1].sequence.length, 3u);
}
