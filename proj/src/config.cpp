#include "pcb/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <vector>

#include "pcb/error.hpp"

namespace pcb {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError(key + ": expected " + want + ", got '" + value + "'");
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  if (value.empty()) bad_value(key, value, "a number");
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || !std::isfinite(v)) bad_value(key, value, "a number");
  return v;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_integer<int>(key, trim(item)));
  if (out.empty()) bad_value(key, value, "a comma-separated integer list");
  return out;
}

std::string real_text(double v) {
  // Shortest of %.15g / %.17g that parses back to the same value.
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  if (std::strtod(buf, nullptr) != v) std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define PCB_INT_FIELD(KEY, MEMBER, TYPE)                                                        \
  Field {                                                                                       \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_integer<TYPE>(KEY, v); },    \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }                             \
  }
#define PCB_REAL_FIELD(KEY, MEMBER)                                                              \
  Field {                                                                                        \
    KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_real(KEY, v); },              \
        [](const RunConfig& c) { return real_text(c.MEMBER); }                                   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"task", [](RunConfig& c, const std::string& v) { c.task = v; },
       [](const RunConfig& c) { return c.task; }},
      {"model", [](RunConfig& c, const std::string& v) { c.model = parse_model_kind(v); },
       [](const RunConfig& c) { return model_kind_name(c.model); }},
      PCB_INT_FIELD("seed", seed, std::uint64_t),
      PCB_INT_FIELD("data.num_patients", num_patients, std::size_t),
      PCB_REAL_FIELD("data.split_train", split.train),
      PCB_REAL_FIELD("data.split_tune", split.tune),
      PCB_REAL_FIELD("data.split_valid", split.valid),
      PCB_INT_FIELD("encoder.extractor_layers", encoder.extractor_layers, int),
      PCB_INT_FIELD("encoder.aggregator_layers", encoder.aggregator_layers, int),
      PCB_INT_FIELD("encoder.hidden", encoder.hidden, int),
      PCB_INT_FIELD("encoder.heads", encoder.heads, int),
      PCB_INT_FIELD("encoder.intermediate", encoder.intermediate, int),
      PCB_REAL_FIELD("encoder.dropout", encoder.dropout),
      PCB_REAL_FIELD("encoder.attention_dropout", encoder.attention_dropout),
      PCB_INT_FIELD("encoder.max_len", encoder.max_len, std::size_t),
      PCB_INT_FIELD("encoder.window", encoder.window, std::size_t),
      PCB_INT_FIELD("encoder.stride", encoder.stride, std::size_t),
      PCB_INT_FIELD("bottleneck.latent_groups", bottleneck.latent_groups, int),
      PCB_INT_FIELD("bottleneck.concept_hidden", bottleneck.concept_hidden, int),
      {"bottleneck.classifier_hidden",
       [](RunConfig& c, const std::string& v) {
         c.bottleneck.classifier_hidden = parse_int_list("bottleneck.classifier_hidden", v);
       },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.bottleneck.classifier_hidden.size(); ++i) {
           if (i) s += ',';
           s += std::to_string(c.bottleneck.classifier_hidden[i]);
         }
         return s;
       }},
      {"bottleneck.tau_init",
       [](RunConfig& c, const std::string& v) {
         c.bottleneck.quantizer.initial = parse_real("bottleneck.tau_init", v);
         c.bottleneck.quantizer.temperature = c.bottleneck.quantizer.initial;
       },
       [](const RunConfig& c) { return real_text(c.bottleneck.quantizer.initial); }},
      PCB_REAL_FIELD("bottleneck.tau_min", bottleneck.quantizer.minimum),
      PCB_REAL_FIELD("bottleneck.tau_decay", bottleneck.quantizer.decay),
      PCB_REAL_FIELD("bottleneck.concept_loss_weight", bottleneck.concept_loss_weight),
      PCB_INT_FIELD("train.epochs", train.epochs, int),
      PCB_INT_FIELD("train.batch_size", train.batch_size, std::size_t),
      PCB_REAL_FIELD("train.base_lr", train.base_lr),
      PCB_REAL_FIELD("train.warmup_fraction", train.warmup_fraction),
      PCB_REAL_FIELD("train.hold_fraction", train.hold_fraction),
      PCB_REAL_FIELD("train.decay_fraction", train.decay_fraction),
      PCB_INT_FIELD("train.patience", train.patience, int),
      PCB_REAL_FIELD("analysis.coverage", coverage),
      PCB_REAL_FIELD("analysis.plausibility_min", plausibility.min_prevalence),
      PCB_REAL_FIELD("analysis.plausibility_max", plausibility.max_prevalence),
      {"analysis.exposure", [](RunConfig& c, const std::string& v) { c.exposure = v; },
       [](const RunConfig& c) { return c.exposure; }},
  };
  return table;
}

#undef PCB_INT_FIELD
#undef PCB_REAL_FIELD

}  // namespace

RunConfig::RunConfig() {
  encoder = EncoderConfig::desk(4);
  encoder.max_len = 40;
  train.epochs = 12;
  train.batch_size = 32;
  train.base_lr = 2e-3;
  train.patience = 5;
}

void RunConfig::validate() const {
  if (task != "af-hf" && task != "f-hf") throw ConfigError("task: expected 'af-hf' or 'f-hf', got '" + task + "'");
  if (num_patients < 10) throw ConfigError("data.num_patients: must be >= 10");
  for (auto [key, v] : {std::pair{"data.split_train", split.train}, std::pair{"data.split_tune", split.tune},
                        std::pair{"data.split_valid", split.valid}}) {
    if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string(key) + ": must lie in (0, 1)");
  }
  if (std::abs(split.train + split.tune + split.valid - 1.0) > 1e-9) {
    throw ConfigError("data.split_train: data.split_train + data.split_tune + data.split_valid must sum to 1");
  }
  EncoderConfig e = encoder;
  e.token_vocab = std::max(e.token_vocab, 4);
  e.validate();
  BottleneckConfig b = bottleneck;
  b.concepts = {ConceptSpec::binary("placeholder")};
  b.validate();
  train.validate();
  if (!(coverage > 0.0 && coverage <= 1.0)) throw ConfigError("analysis.coverage: must lie in (0, 1]");
  plausibility.validate();
}

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(text).substr(0, eq));
    const std::string value = trim(std::string_view(text).substr(eq + 1));
    bool known = false;
    for (const auto& f : fields()) {
      if (key == f.key) {
        f.set(config, value);
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(key + ": unknown configuration key (" + source + ":" +
                                  std::to_string(line_no) + ")");
  }
  config.validate();
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_run_config(in, path);
}

std::string render_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

}  // namespace pcb
