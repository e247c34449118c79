// pcb: generate cohorts, train and evaluate models, analyze clusters and
// serve the analysis over HTTP. All outputs of one pipeline live in a single
// run directory described by manifest.json.

#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pcb/checkpoint.hpp"
#include "pcb/cohort.hpp"
#include "pcb/config.hpp"
#include "pcb/counterfactual.hpp"
#include "pcb/error.hpp"
#include "pcb/model.hpp"
#include "pcb/service.hpp"
#include "pcb/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pcb;

namespace {

constexpr const char* kCohortFile = "cohort.jsonl";
constexpr const char* kVocabFile = "vocab.tsv";
constexpr const char* kCheckpointFile = "model.ckpt";

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::string data;  // defaults to out
  std::string checkpoint;  // defaults to out/model.ckpt
  std::string host = "127.0.0.1";
  int port = 8080;
  bool quiet = false;
};

RunConfig resolve_config(const Options& o) {
  RunConfig c;
  if (!o.config_path.empty()) {
    c = load_run_config(o.config_path);
  } else if (fs::exists(fs::path(o.out) / "config.txt")) {
    c = load_run_config((fs::path(o.out) / "config.txt").string());
  }
  if (o.seed) c.seed = *o.seed;
  return c;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw DataError("cannot write " + path.string());
  }
}

// Records a command and the files it produced. Entries carry size and CRC-32
// only, so identical runs produce identical manifests.
void update_manifest(const fs::path& run, const std::string& command, const RunConfig& config,
                     const std::vector<std::string>& files) {
  const fs::path path = run / "manifest.json";
  json m = fs::exists(path) ? json::parse(read_file(path)) : json{{"format", "pcb-run"}, {"version", 1}};
  json entry{{"seed", config.seed}, {"task", config.task}, {"files", json::object()}};
  for (const auto& name : files) {
    const std::string bytes = read_file(run / name);
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
                           static_cast<uInt>(bytes.size()));
    entry["files"][name] = {{"bytes", bytes.size()}, {"crc32", crc}};
  }
  m["commands"][command] = entry;
  write_file(path, m.dump(2) + "\n");
}

Dataset load_run_data(const Options& o) {
  const fs::path dir = o.data.empty() ? fs::path(o.out) : fs::path(o.data);
  return load_dataset((dir / kCohortFile).string(), (dir / kVocabFile).string());
}

struct Splits {
  std::vector<Example> train, tune, valid;
};

Splits make_splits(const Dataset& data, const RunConfig& config) {
  const DatasetSplit split = split_dataset(data.patients.size(), config.split, config.seed);
  return {make_examples(data, split.train, config.encoder.max_len),
          make_examples(data, split.tune, config.encoder.max_len),
          make_examples(data, split.valid, config.encoder.max_len)};
}

std::string checkpoint_path(const Options& o) {
  return o.checkpoint.empty() ? (fs::path(o.out) / kCheckpointFile).string() : o.checkpoint;
}

json metrics_json(const Metrics& m) {
  json concepts = json::object();
  for (std::size_t i = 0; i < m.concept_names.size(); ++i) concepts[m.concept_names[i]] = m.concept_f1[i];
  return {{"count", m.count}, {"auroc", m.auroc}, {"auprc", m.auprc}, {"loss", m.loss},
          {"concept_f1", concepts}};
}

std::shared_ptr<const PcbModel> load_pcb(const Options& o, CheckpointBundle& bundle) {
  const std::string path = checkpoint_path(o);
  if (!fs::exists(path)) throw DataError("no checkpoint at " + path + " (run 'pcb train' first)");
  bundle = load_checkpoint(path);
  auto* pcb = dynamic_cast<PcbModel*>(bundle.model.get());
  if (!pcb) throw DataError("checkpoint " + path + " holds a black-box model; cluster analysis needs a PCB model");
  bundle.model.release();
  return std::shared_ptr<const PcbModel>(pcb);
}

int cmd_gen(const Options& o) {
  const RunConfig config = resolve_config(o);
  config.validate();
  const Dataset data = generate_cohort(task_template(config.task, config.num_patients, config.seed));
  fs::create_directories(o.out);
  save_dataset((fs::path(o.out) / kCohortFile).string(), (fs::path(o.out) / kVocabFile).string(), data);
  write_file(fs::path(o.out) / "config.txt", render_run_config(config));
  update_manifest(o.out, "gen", config, {kCohortFile, kVocabFile, "config.txt"});
  if (!o.quiet) std::cout << "generated " << data.patients.size() << " patients into " << o.out << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  const RunConfig config = resolve_config(o);
  config.validate();
  const Dataset data = load_run_data(o);
  if (data.task != config.task) {
    throw ConfigError("task: config says '" + config.task + "' but the dataset is '" + data.task + "'");
  }
  const Splits s = make_splits(data, config);

  ModelConfig mc;
  mc.kind = config.model;
  mc.encoder = config.encoder;
  mc.encoder.token_vocab = static_cast<int>(data.vocab.size());
  mc.bottleneck = config.bottleneck;
  mc.bottleneck.concepts = data.specs();
  mc.init_seed = config.seed;
  auto model = make_model(mc);

  TrainConfig tc = config.train;
  tc.seed = config.seed;
  const TrainHistory history = train(*model, s.train, s.tune, tc, [&](const EpochRecord& e) {
    if (!o.quiet) {
      std::cout << "epoch " << e.epoch << " train " << e.train_loss << " tune " << e.tune_loss
                << " lr " << e.lr << "\n";
    }
  });

  fs::create_directories(o.out);
  std::ostringstream hist;
  write_history(hist, history);
  write_file(fs::path(o.out) / "history.tsv", hist.str());
  save_checkpoint(checkpoint_path(o), *model, data.task, data.vocab, data.concepts);
  write_file(fs::path(o.out) / "config.txt", render_run_config(config));
  std::vector<std::string> files = {"history.tsv", "config.txt"};
  if (o.checkpoint.empty()) files.push_back(kCheckpointFile);
  update_manifest(o.out, "train", config, files);
  if (!o.quiet) {
    std::cout << "best epoch " << history.best_epoch << " tune loss " << history.best_tune_loss << "\n";
  }
  return 0;
}

int cmd_eval(const Options& o) {
  const RunConfig config = resolve_config(o);
  config.validate();
  const std::string path = checkpoint_path(o);
  if (!fs::exists(path)) throw DataError("no checkpoint at " + path + " (run 'pcb train' first)");
  const CheckpointBundle bundle = load_checkpoint(path);
  const Dataset data = load_run_data(o);
  const Splits s = make_splits(data, config);
  const Metrics m = evaluate(*bundle.model, s.valid);
  json report = metrics_json(m);
  report["split"] = "valid";
  report["model"] = model_kind_name(bundle.model->config().kind);
  fs::create_directories(o.out);
  write_file(fs::path(o.out) / "metrics.json", report.dump(2) + "\n");
  update_manifest(o.out, "eval", config, {"metrics.json"});
  if (!o.quiet) std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_analyze(const Options& o) {
  const RunConfig config = resolve_config(o);
  config.validate();
  CheckpointBundle bundle;
  const auto model = load_pcb(o, bundle);
  const Dataset data = load_run_data(o);
  const Splits s = make_splits(data, config);

  ServiceOptions so{config.coverage, config.plausibility, config.exposure};
  const ApiService service(model, data.task, s.valid, so);
  const ClusterAnalysis& a = service.analysis();

  const fs::path dir = fs::path(o.out);
  fs::create_directories(dir / "upset");
  std::vector<std::string> files = {"clusters.tsv"};
  {
    std::ostringstream out;
    write_cluster_table(out, a);
    write_file(dir / "clusters.tsv", out.str());
  }
  for (const auto& [id, table] : a.upsets) {
    std::ostringstream out;
    write_upset_table(out, table, a.specs);
    const std::string name = "upset/cluster_" + std::to_string(id) + ".tsv";
    write_file(dir / name, out.str());
    files.push_back(name);
  }
  {
    std::ostringstream out;
    write_sanity_table(out, service.sanity_data(), a.latent_groups);
    write_file(dir / "sanity.tsv", out.str());
    files.push_back("sanity.tsv");
  }
  update_manifest(o.out, "analyze", config, files);
  if (!o.quiet) {
    std::size_t major = 0;
    for (const auto& c : a.summaries) major += c.major ? 1 : 0;
    std::cout << a.summaries.size() << " clusters, " << major << " major; spearman "
              << service.sanity().body["spearman"].dump() << "\n";
  }
  return 0;
}

int cmd_serve(const Options& o) {
  const RunConfig config = resolve_config(o);
  config.validate();
  CheckpointBundle bundle;
  const auto model = load_pcb(o, bundle);
  const Dataset data = load_run_data(o);
  const Splits s = make_splits(data, config);
  const ApiService service(model, data.task, s.valid,
                           ServiceOptions{config.coverage, config.plausibility, config.exposure});
  std::cout << "serving on http://" << o.host << ":" << o.port << "/api/meta" << std::endl;
  service.serve(o.host, o.port);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partial concept bottleneck risk models on synthetic EHR cohorts"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "key = value config file (default: <out>/config.txt if present)");
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out", o.out, "run directory")->capture_default_str();
    sub->add_flag("-q,--quiet", o.quiet, "suppress progress output");
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", o.data, "directory holding cohort.jsonl and vocab.tsv (default: --out)");
  };
  auto add_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint file (default: <out>/model.ckpt)");
  };

  auto* gen = app.add_subcommand("gen", "generate a synthetic cohort");
  add_common(gen);
  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(tr);
  add_data(tr);
  add_checkpoint(tr);
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
  add_common(ev);
  add_data(ev);
  add_checkpoint(ev);
  auto* an = app.add_subcommand("analyze", "cluster, UpSet and sanity reports");
  add_common(an);
  add_data(an);
  add_checkpoint(an);
  auto* sv = app.add_subcommand("serve", "serve the analysis over HTTP/JSON");
  add_common(sv);
  add_data(sv);
  add_checkpoint(sv);
  sv->add_option("--host", o.host, "bind address")->capture_default_str();
  sv->add_option("--port", o.port, "port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen(o);
    if (tr->parsed()) return cmd_train(o);
    if (ev->parsed()) return cmd_eval(o);
    if (an->parsed()) return cmd_analyze(o);
    if (sv->parsed()) return cmd_serve(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const TrainingAborted& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
