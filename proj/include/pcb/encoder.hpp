#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcb/autodiff.hpp"
#include "pcb/encoding.hpp"
#include "pcb/parameters.hpp"

namespace pcb {

struct EncoderConfig {
  int extractor_layers = 4;
  int aggregator_layers = 4;
  int hidden = 150;
  int heads = 6;
  int intermediate = 108;
  double dropout = 0.2;
  double attention_dropout = 0.3;
  std::size_t max_len = 1220;
  std::size_t window = 50;
  std::size_t stride = 30;
  int token_vocab = 0;
  int age_vocab = kMaxAgeYears + 1;
  int segment_vocab = 2;

  // Published Hi-BEHRT setup (vocabulary size still has to be filled in).
  static EncoderConfig reference(int token_vocab);
  // Small configuration for single-core experiments and tests.
  static EncoderConfig desk(int token_vocab);

  // Throws ConfigError naming the offending field.
  void validate() const;
  // Sliding-window count, including a padded final window when
  // (max_len - window) is not a multiple of stride.
  std::size_t segment_count() const;

  bool operator==(const EncoderConfig&) const = default;
};

// Per-call switches for stochastic layers.
struct ForwardMode {
  bool train = false;
  Rng* rng = nullptr;  // required when train is set
};

struct SegmentWindow {
  std::size_t start = 0;
  Var rows;                        // window x hidden, zero rows past max_len
  std::vector<std::uint8_t> mask;  // 1 = real position
  bool active = false;             // any unmasked position
};

// Splits an embedded (max_len x hidden) sequence into windows starting at
// k * stride. A final partial window is padded with masked zero rows.
std::vector<SegmentWindow> slide_windows(Var embedded, std::span<const std::uint8_t> mask,
                                         std::size_t window, std::size_t stride);

// Pre-norm transformer block parameters.
struct TransformerLayerParams {
  ParamId ln1_gain, ln1_bias;
  ParamId wq, bq, wk, bk, wv, bv, wo, bo;
  ParamId ln2_gain, ln2_bias;
  ParamId w1, b1, w2, b2;
};

// Hierarchical sequence encoder: summed token/age/segment/position
// embeddings, a windowed transformer feature extractor that keeps the first
// position of each window, and a transformer aggregator over the window
// vectors whose first position is the patient representation.
class Encoder {
 public:
  // Registers parameters under `prefix` in `store`.
  Encoder(const EncoderConfig& config, ParameterStore& store, const std::string& prefix, Rng& init);

  const EncoderConfig& config() const { return config_; }

  Var embed(Tape& tape, const ParameterStore& store, const TokenSequence& seq) const;
  // Row 0 of the last extractor layer (1 x hidden).
  Var extract_segment(Tape& tape, const ParameterStore& store, Var segment,
                      std::span<const std::uint8_t> mask, const ForwardMode& mode) const;
  // Row 0 of the last aggregator layer over the segment vectors (1 x hidden).
  // Inactive segments are masked; throws DataError when none is active.
  Var aggregate(Tape& tape, const ParameterStore& store, std::span<const Var> segment_vectors,
                std::span<const std::uint8_t> active, const ForwardMode& mode) const;
  // Full pass: embed -> windows -> extract -> aggregate.
  Var forward(Tape& tape, const ParameterStore& store, const TokenSequence& seq,
              const ForwardMode& mode) const;

 private:
  Var transformer_layer(Tape& tape, const ParameterStore& store, const TransformerLayerParams& p,
                        Var x, std::span<const std::uint8_t> mask, bool first_row_only,
                        const ForwardMode& mode) const;

  EncoderConfig config_;
  ParamId token_embedding_, age_embedding_, segment_embedding_, position_embedding_;
  ParamId window_position_embedding_;
  std::vector<TransformerLayerParams> extractor_;
  std::vector<TransformerLayerParams> aggregator_;
};

// Linear risk head of the black-box baseline: representation -> 1 logit.
struct LinearHead {
  ParamId weight, bias;

  LinearHead(ParameterStore& store, const std::string& prefix, int in, int out, Rng& init);
  Var operator()(Tape& tape, const ParameterStore& store, Var x) const;
};

}  // namespace pcb
