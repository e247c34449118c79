#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "pcb/cohort.hpp"
#include "pcb/counterfactual.hpp"
#include "pcb/model.hpp"
#include "pcb/trainer.hpp"

namespace pcb {

// Everything a CLI run needs. Parsed from "key = value" lines with dotted
// section prefixes (encoder.hidden = 32); '#' starts a comment.
struct RunConfig {
  std::string task = "af-hf";
  ModelKind model = ModelKind::kPcb;
  std::uint64_t seed = 0;

  std::size_t num_patients = 2000;
  SplitRatios split;

  EncoderConfig encoder;        // token_vocab is taken from the dataset
  BottleneckConfig bottleneck;  // concepts are taken from the dataset
  TrainConfig train;

  double coverage = 0.95;
  PlausibilityRange plausibility;
  std::string exposure;  // empty: first binary concept

  RunConfig();

  // Throws ConfigError naming the offending key.
  void validate() const;
};

RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);
// Canonical key = value rendering (round-trips through parse_run_config).
std::string render_run_config(const RunConfig& config);

}  // namespace pcb
