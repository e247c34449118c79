#include "pcb/encoding.hpp"

#include <algorithm>

#include "pcb/error.hpp"

namespace pcb {

TokenSequence encode_patient(const PatientRecord& record, const CodeVocabulary& vocab,
                             std::size_t max_len) {
  if (max_len < 2) throw UsageError("max_len must allow CLS plus one event");
  if (record.baseline_index == 0) {
    throw DataError("patient " + std::to_string(record.id) + " has no history before baseline");
  }
  const std::size_t history = record.baseline_index;
  const std::size_t keep = std::min(history, max_len - 1);
  const std::size_t first = history - keep;

  TokenSequence seq;
  seq.tokens.assign(max_len, CodeVocabulary::kPad);
  seq.ages.assign(max_len, 0);
  seq.segments.assign(max_len, 0);
  seq.positions.resize(max_len);
  seq.mask.assign(max_len, 0);
  for (std::size_t i = 0; i < max_len; ++i) seq.positions[i] = static_cast<std::int32_t>(i);

  const auto clamp_age = [](int age) { return std::clamp(age, 0, kMaxAgeYears); };
  seq.tokens[0] = CodeVocabulary::kCls;
  seq.ages[0] = clamp_age(record.events[first].age_years);
  seq.segments[0] = 0;
  seq.mask[0] = 1;

  int segment = 0;
  int visit = record.events[first].visit;
  for (std::size_t k = 0; k < keep; ++k) {
    const MedicalEvent& e = record.events[first + k];
    vocab.entry(e.code);  // range check
    if (e.visit != visit) {
      segment ^= 1;
      visit = e.visit;
    }
    seq.tokens[k + 1] = e.code;
    seq.ages[k + 1] = clamp_age(e.age_years);
    seq.segments[k + 1] = segment;
    seq.mask[k + 1] = 1;
  }
  seq.length = keep + 1;
  return seq;
}

std::vector<TokenId> decode_tokens(const TokenSequence& seq) {
  if (seq.length == 0) return {};
  return {seq.tokens.begin() + 1, seq.tokens.begin() + static_cast<std::ptrdiff_t>(seq.length)};
}

void validate_sequence(const TokenSequence& seq) {
  const std::size_t n = seq.tokens.size();
  if (seq.ages.size() != n || seq.segments.size() != n || seq.positions.size() != n ||
      seq.mask.size() != n) {
    throw DataError("token sequence channels differ in length");
  }
  if (seq.length > n) throw DataError("token sequence length exceeds max_len");
  for (std::size_t i = 0; i < n; ++i) {
    const bool active = i < seq.length;
    if (seq.mask[i] != (active ? 1 : 0)) throw DataError("mask does not match sequence length");
    if (!active && seq.tokens[i] != CodeVocabulary::kPad) throw DataError("padded position holds a token");
    if (seq.segments[i] != 0 && seq.segments[i] != 1) throw DataError("segment id outside {0, 1}");
  }
}

}  // namespace pcb
