#include "pcb/vocabulary.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "pcb/error.hpp"

namespace pcb {

namespace {

constexpr std::string_view kVocabHeader = "# pcb-vocabulary v1";

struct MeasurementRange {
  double lo;
  double hi;
  double width;
  std::string_view tag;
};

MeasurementRange range_of(MeasurementKind kind) {
  switch (kind) {
    case MeasurementKind::kSystolicBp: return {80.0, 200.0, 5.0, "SBP"};
    case MeasurementKind::kDiastolicBp: return {50.0, 140.0, 5.0, "DBP"};
    case MeasurementKind::kBmi: return {16.0, 50.0, 1.0, "BMI"};
  }
  throw UsageError("unknown measurement kind");
}

}  // namespace

std::string_view channel_prefix(Channel channel) {
  switch (channel) {
    case Channel::kSpecial: return "[";
    case Channel::kDiagnosis: return "DX/";
    case Channel::kMedication: return "RX/";
    case Channel::kProcedure: return "PX/";
    case Channel::kTest: return "LAB/";
    case Channel::kMeasurement: return "MEAS/";
    case Channel::kLifestyle: return "LIFE/";
  }
  return "";
}

Channel channel_of(std::string_view code) {
  for (Channel c : {Channel::kDiagnosis, Channel::kMedication, Channel::kProcedure,
                    Channel::kTest, Channel::kMeasurement, Channel::kLifestyle}) {
    if (code.starts_with(channel_prefix(c))) return c;
  }
  if (code.starts_with("[") && code.ends_with("]")) return Channel::kSpecial;
  throw DataError("code '" + std::string(code) + "' has no channel prefix");
}

CodeVocabulary::CodeVocabulary() {
  for (const char* special : {"[PAD]", "[CLS]", "[UNK]", "[SEP]"}) add(special);
}

TokenId CodeVocabulary::add(const std::string& code) {
  if (auto it = index_.find(code); it != index_.end()) return it->second;
  const Channel channel = channel_of(code);
  const auto id = static_cast<TokenId>(entries_.size());
  entries_.push_back({id, code, channel});
  index_.emplace(code, id);
  return id;
}

std::optional<TokenId> CodeVocabulary::find(std::string_view code) const {
  auto it = index_.find(std::string(code));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId CodeVocabulary::id(std::string_view code) const {
  if (auto id = find(code)) return *id;
  throw DataError("unknown code '" + std::string(code) + "'");
}

const VocabEntry& CodeVocabulary::entry(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= entries_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of " +
                    std::to_string(entries_.size()));
  }
  return entries_[id];
}

void CodeVocabulary::write(std::ostream& out) const {
  out << kVocabHeader << '\n';
  for (const auto& e : entries_) out << e.id << '\t' << e.code << '\n';
}

CodeVocabulary CodeVocabulary::read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kVocabHeader) {
    throw DataError("vocabulary file lacks '" + std::string(kVocabHeader) + "' header");
  }
  CodeVocabulary vocab;
  vocab.entries_.clear();
  vocab.index_.clear();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("vocabulary line " + std::to_string(line_no) + " is not 'id<TAB>code'");
    }
    long long id = 0;
    try {
      id = std::stoll(line.substr(0, tab));
    } catch (const std::exception&) {
      throw DataError("vocabulary line " + std::to_string(line_no) + " has a bad id");
    }
    if (id != static_cast<long long>(vocab.entries_.size())) {
      throw DataError("vocabulary ids must be dense and ordered (line " +
                      std::to_string(line_no) + ")");
    }
    const std::string code = line.substr(tab + 1);
    if (vocab.index_.count(code)) throw DataError("duplicate vocabulary code '" + code + "'");
    vocab.add(code);
  }
  if (vocab.size() < 4 || vocab.entry(kPad).code != "[PAD]" || vocab.entry(kCls).code != "[CLS]") {
    throw DataError("vocabulary must start with the special tokens");
  }
  return vocab;
}

bool CodeVocabulary::operator==(const CodeVocabulary& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].code != other.entries_[i].code) return false;
  }
  return true;
}

MeasurementKind parse_measurement_kind(std::string_view name) {
  if (name == "systolic-bp") return MeasurementKind::kSystolicBp;
  if (name == "diastolic-bp") return MeasurementKind::kDiastolicBp;
  if (name == "bmi") return MeasurementKind::kBmi;
  throw UsageError("unknown measurement kind '" + std::string(name) + "'");
}

std::optional<MeasurementBucket> measurement_bucket(double value, MeasurementKind kind) {
  if (!std::isfinite(value)) throw UsageError("measurement value must be finite");
  const MeasurementRange r = range_of(kind);
  if (value < r.lo || value > r.hi) return std::nullopt;
  const double last_lower = r.hi - r.width;
  double lower = r.lo + std::floor((value - r.lo) / r.width) * r.width;
  if (lower > last_lower) lower = last_lower;  // range maximum folds into the top bucket
  return MeasurementBucket{kind, lower, lower + r.width};
}

std::string measurement_code(const MeasurementBucket& bucket) {
  const MeasurementRange r = range_of(bucket.kind);
  std::ostringstream out;
  out << "MEAS/" << r.tag << '_' << static_cast<long long>(std::llround(bucket.lower));
  return out.str();
}

std::vector<std::string> measurement_codes(MeasurementKind kind) {
  const MeasurementRange r = range_of(kind);
  std::vector<std::string> codes;
  for (double lower = r.lo; lower < r.hi; lower += r.width) {
    codes.push_back(measurement_code({kind, lower, lower + r.width}));
  }
  return codes;
}

std::optional<TokenId> categorize_measurement(double value, MeasurementKind kind,
                                              const CodeVocabulary& vocab) {
  const auto bucket = measurement_bucket(value, kind);
  if (!bucket) return std::nullopt;
  return vocab.id(measurement_code(*bucket));
}

}  // namespace pcb
