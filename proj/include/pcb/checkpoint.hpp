#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "pcb/cohort.hpp"
#include "pcb/model.hpp"

namespace pcb {

// Binary layout, little-endian:
//   "PCBCKPT\0"  u32 version  u64 payload_size  u32 crc32(payload)  payload
// payload = u64 header_size, JSON header (task, model config, quantizer,
// vocabulary, concept rules, parameter manifest), then per parameter in store
// order: u32 name_size, name, u32 rank, u64 dims[rank], f64 values[].
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointBundle {
  std::unique_ptr<RiskModel> model;
  std::string task;
  CodeVocabulary vocab;
  std::vector<ConceptRule> concepts;
};

std::string serialize_checkpoint(const RiskModel& model, const std::string& task,
                                 const CodeVocabulary& vocab,
                                 const std::vector<ConceptRule>& concepts);
// Throws CheckpointError: kFormat (bad magic or layout), kUnsupportedVersion,
// kTruncated, kChecksum. Nothing is returned unless the whole file verifies.
CheckpointBundle deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const RiskModel& model, const std::string& task,
                     const CodeVocabulary& vocab, const std::vector<ConceptRule>& concepts);
CheckpointBundle load_checkpoint(const std::string& path);

}  // namespace pcb
