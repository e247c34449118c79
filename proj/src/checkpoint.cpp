#include "pcb/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pcb/error.hpp"
#include "pcb/json_io.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace pcb {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'P', 'C', 'B', 'C', 'K', 'P', 'T', '\0'};
constexpr std::size_t kPreambleSize = 8 + 4 + 8 + 4;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n) {
    need(n);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::kFormat, "checkpoint payload is inconsistent");
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < data.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, data.size() - off);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data.data() + off), static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string serialize_checkpoint(const RiskModel& model, const std::string& task,
                                 const CodeVocabulary& vocab,
                                 const std::vector<ConceptRule>& concepts) {
  const ParameterStore& params = model.parameters();
  json header;
  header["task"] = task;
  header["model"] = model_config_to_json(model.config());
  if (const auto* pcb = dynamic_cast<const PcbModel*>(&model)) {
    header["quantizer"] = quantizer_to_json(pcb->quantizer());
  }
  json codes = json::array();
  for (const auto& e : vocab.entries()) codes.push_back(e.code);
  header["vocabulary"] = codes;
  header["concepts"] = json::array();
  for (const auto& r : concepts) header["concepts"].push_back(concept_rule_to_json(r));
  header["parameters"] = params.size();

  std::string payload;
  const std::string header_text = header.dump();
  put<std::uint64_t>(payload, header_text.size());
  payload += header_text;
  for (ParamId id = 0; id < params.size(); ++id) {
    const std::string& name = params.name(id);
    const Tensor& t = params.value(id);
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(name.size()));
    payload += name;
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(payload, d);
    payload.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  }

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, payload.size());
  put<std::uint32_t>(out, crc_of(payload));
  out += payload;
  return out;
}

CheckpointBundle deserialize_checkpoint(std::string_view bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < sizeof(kMagic) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    if (bytes.size() < sizeof(kMagic) &&
        std::memcmp(bytes.data(), kMagic, bytes.size()) == 0) {
      throw CheckpointError(Kind::kTruncated, "checkpoint truncated inside the preamble");
    }
    throw CheckpointError(Kind::kFormat, "not a checkpoint file (bad magic)");
  }
  if (bytes.size() < kPreambleSize) {
    throw CheckpointError(Kind::kTruncated, "checkpoint truncated inside the preamble");
  }
  Reader pre(bytes.substr(sizeof(kMagic), kPreambleSize - sizeof(kMagic)));
  const auto version = pre.get<std::uint32_t>();
  const auto payload_size = pre.get<std::uint64_t>();
  const auto crc = pre.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::kUnsupportedVersion,
                          "checkpoint format version " + std::to_string(version) +
                              " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  const std::string_view payload = bytes.substr(kPreambleSize);
  if (payload.size() < payload_size) {
    throw CheckpointError(Kind::kTruncated, "checkpoint truncated: " +
                                                std::to_string(payload.size()) + " of " +
                                                std::to_string(payload_size) + " payload bytes");
  }
  if (payload.size() > payload_size) {
    throw CheckpointError(Kind::kFormat, "trailing bytes after checkpoint payload");
  }
  if (crc_of(payload) != crc) throw CheckpointError(Kind::kChecksum, "checkpoint checksum mismatch");

  Reader in(payload);
  CheckpointBundle bundle;
  json header;
  try {
    header = json::parse(in.take(in.get<std::uint64_t>()));
    bundle.task = header.at("task").get<std::string>();
    CodeVocabulary vocab;
    const auto codes = header.at("vocabulary").get<std::vector<std::string>>();
    std::ostringstream text;
    text << "# pcb-vocabulary v1\n";
    for (std::size_t i = 0; i < codes.size(); ++i) text << i << '\t' << codes[i] << '\n';
    std::istringstream vin(text.str());
    bundle.vocab = CodeVocabulary::read(vin);
    for (const auto& r : header.at("concepts")) bundle.concepts.push_back(concept_rule_from_json(r));
    bundle.model = make_model(model_config_from_json(header.at("model")));
    if (auto* pcb = dynamic_cast<PcbModel*>(bundle.model.get())) {
      pcb->set_quantizer(quantizer_from_json(header.at("quantizer")));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kFormat, std::string("bad checkpoint header: ") + e.what());
  } catch (const Error& e) {
    throw CheckpointError(Kind::kFormat, std::string("bad checkpoint header: ") + e.what());
  }

  ParameterStore& params = bundle.model->parameters();
  const auto count = header.at("parameters").get<std::size_t>();
  if (count != params.size()) {
    throw CheckpointError(Kind::kFormat, "checkpoint has " + std::to_string(count) +
                                             " parameters, model expects " +
                                             std::to_string(params.size()));
  }
  std::vector<bool> seen(params.size(), false);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name(in.take(in.get<std::uint32_t>()));
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    const auto id = params.find(name);
    if (!id) throw CheckpointError(Kind::kFormat, "unknown parameter '" + name + "'");
    Tensor& dst = params.value(*id);
    if (dst.shape() != shape) {
      throw CheckpointError(Kind::kFormat, "parameter '" + name + "' has shape " +
                                               shape_string(shape) + ", model expects " +
                                               shape_string(dst.shape()));
    }
    const std::string_view raw = in.take(dst.size() * sizeof(double));
    std::memcpy(dst.data(), raw.data(), raw.size());
    seen[*id] = true;
  }
  for (std::size_t id = 0; id < seen.size(); ++id) {
    if (!seen[id]) throw CheckpointError(Kind::kFormat, "missing parameter '" + params.name(id) + "'");
  }
  if (!in.done()) throw CheckpointError(Kind::kFormat, "unexpected bytes after parameters");
  return bundle;
}

void save_checkpoint(const std::string& path, const RiskModel& model, const std::string& task,
                     const CodeVocabulary& vocab, const std::vector<ConceptRule>& concepts) {
  const std::string bytes = serialize_checkpoint(model, task, vocab, concepts);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw CheckpointError(CheckpointError::Kind::kIo, "cannot move checkpoint into " + path);
  }
}

CheckpointBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace pcb
