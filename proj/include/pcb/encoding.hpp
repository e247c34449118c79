#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pcb/cohort.hpp"
#include "pcb/vocabulary.hpp"

namespace pcb {

// Model-ready view of a patient history. All channels have max_len entries;
// positions >= length are padding (mask 0).
struct TokenSequence {
  std::vector<std::int32_t> tokens;
  std::vector<std::int32_t> ages;
  std::vector<std::int32_t> segments;
  std::vector<std::int32_t> positions;
  std::vector<std::uint8_t> mask;
  std::size_t length = 0;  // CLS plus kept events

  std::size_t max_len() const { return tokens.size(); }
  bool operator==(const TokenSequence&) const = default;
};

inline constexpr int kMaxAgeYears = 119;

// CLS followed by the pre-baseline event codes. Histories longer than
// max_len - 1 keep their most recent events. Segment ids alternate 0/1 at
// visit boundaries (CLS shares the first kept visit's segment). Ages are
// clamped to [0, kMaxAgeYears]. Throws DataError on an empty history.
TokenSequence encode_patient(const PatientRecord& record, const CodeVocabulary& vocab,
                             std::size_t max_len);

// Event codes of an encoded sequence (padding and CLS removed).
std::vector<TokenId> decode_tokens(const TokenSequence& seq);

// Throws DataError unless every channel has equal length and the mask/pad
// layout is consistent.
void validate_sequence(const TokenSequence& seq);

}  // namespace pcb
