#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pcb {

using TokenId = std::int32_t;

enum class Channel { kSpecial, kDiagnosis, kMedication, kProcedure, kTest, kMeasurement, kLifestyle };

std::string_view channel_prefix(Channel channel);
// Channel is carried by the code prefix ("DX/", "RX/", ...); specials are "[...]".
Channel channel_of(std::string_view code);

struct VocabEntry {
  TokenId id;
  std::string code;
  Channel channel;
};

// Dense token dictionary. Ids are [0, size()); PAD is always 0.
class CodeVocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kCls = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr TokenId kSep = 3;

  CodeVocabulary();

  // Adds a code (prefix determines the channel); returns the existing id
  // if already present.
  TokenId add(const std::string& code);
  std::optional<TokenId> find(std::string_view code) const;
  // Throws DataError for unknown codes.
  TokenId id(std::string_view code) const;
  const VocabEntry& entry(TokenId id) const;
  std::size_t size() const { return entries_.size(); }
  const std::vector<VocabEntry>& entries() const { return entries_; }

  // Two-column text format: "# pcb-vocabulary v1" header, then "id\tcode".
  void write(std::ostream& out) const;
  static CodeVocabulary read(std::istream& in);

  bool operator==(const CodeVocabulary& other) const;

 private:
  std::vector<VocabEntry> entries_;
  std::unordered_map<std::string, TokenId> index_;
};

// ---- measurement bucketing ------------------------------------------------

enum class MeasurementKind { kSystolicBp, kDiastolicBp, kBmi };

// Throws UsageError for unrecognised names ("systolic-bp", "diastolic-bp", "bmi").
MeasurementKind parse_measurement_kind(std::string_view name);

struct MeasurementBucket {
  MeasurementKind kind;
  double lower;  // inclusive
  double upper;  // exclusive, except the top bucket which also holds the range maximum

  bool operator==(const MeasurementBucket&) const = default;
};

// Buckets a raw value; nullopt when the value is outside the accepted range
// (systolic [80, 200] by 5 mmHg, diastolic [50, 140] by 5 mmHg,
// BMI [16, 50] by 1 kg/m^2). Non-finite values raise UsageError.
std::optional<MeasurementBucket> measurement_bucket(double value, MeasurementKind kind);
std::string measurement_code(const MeasurementBucket& bucket);
// All bucket codes of a kind, in increasing order.
std::vector<std::string> measurement_codes(MeasurementKind kind);
// Token for a measurement, or nullopt when excluded.
std::optional<TokenId> categorize_measurement(double value, MeasurementKind kind,
                                              const CodeVocabulary& vocab);

}  // namespace pcb
