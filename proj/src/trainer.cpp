#include "pcb/trainer.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

#include "pcb/error.hpp"
#include "pcb/metrics.hpp"
#include "pcb/optim.hpp"

namespace pcb {

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("train." + key + ": " + why);
  };
  if (epochs < 1) fail("epochs", "must be >= 1");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) fail("base_lr", "must be finite and > 0");
  for (auto [key, v] : {std::pair{"warmup_fraction", warmup_fraction},
                        std::pair{"hold_fraction", hold_fraction},
                        std::pair{"decay_fraction", decay_fraction}}) {
    if (!(v >= 0.0 && v <= 1.0)) fail(key, "must lie in [0, 1]");
  }
  const double sum = warmup_fraction + hold_fraction + decay_fraction;
  if (std::abs(sum - 1.0) > 1e-9) {
    fail("warmup_fraction", "warmup_fraction + hold_fraction + decay_fraction must sum to 1 (got " +
                                std::to_string(sum) + ")");
  }
  if (patience < 1) fail("patience", "must be >= 1");
}

double lr_at(double step, double total, const TrainConfig& config) {
  if (!(total > 0.0)) throw UsageError("lr_at: total steps must be > 0");
  if (!(step >= 0.0 && step <= total)) {
    throw UsageError("lr_at: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(total) + "]");
  }
  const double base = config.base_lr;
  const double warm_end = config.warmup_fraction * total;
  const double hold_end = (config.warmup_fraction + config.hold_fraction) * total;
  if (step < warm_end) return base * step / warm_end;
  if (step <= hold_end) return base;
  const double u = (step - hold_end) / (total - hold_end);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * u));
}

EarlyStopping::EarlyStopping(int patience)
    : patience_(patience), best_loss_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ConfigError("train.patience: must be >= 1");
}

bool EarlyStopping::update(double loss) {
  ++epoch_;
  if (loss < best_loss_) {
    best_loss_ = loss;
    best_epoch_ = epoch_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

void write_history(std::ostream& out, const TrainHistory& history) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out.precision(10);
  out << "epoch\ttrain_loss\ttune_loss\tlr\ttau\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << '\t' << e.train_loss << '\t' << e.tune_loss << '\t' << e.lr << '\t' << e.tau
        << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

double mean_evaluation_loss(const RiskModel& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw UsageError("evaluation set is empty");
  double total = 0.0;
  for (const auto& ex : examples) total += model.evaluation_loss(ex);
  return total / static_cast<double>(examples.size());
}

namespace {

double current_tau(const RiskModel& model) {
  if (const auto* pcb = dynamic_cast<const PcbModel*>(&model)) return pcb->quantizer().temperature;
  return 0.0;
}

struct Snapshot {
  ParameterStore params;
  QuantizerState quantizer;
};

Snapshot take_snapshot(const RiskModel& model) {
  Snapshot s{model.parameters(), {}};
  if (const auto* pcb = dynamic_cast<const PcbModel*>(&model)) s.quantizer = pcb->quantizer();
  return s;
}

void restore_snapshot(RiskModel& model, const Snapshot& s) {
  model.parameters() = s.params;
  if (auto* pcb = dynamic_cast<PcbModel*>(&model)) pcb->set_quantizer(s.quantizer);
}

constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kSampleStream = 0x73616d70;

}  // namespace

TrainHistory train(RiskModel& model, const std::vector<Example>& train_set,
                   const std::vector<Example>& tune_set, const TrainConfig& config,
                   const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_set.empty()) throw UsageError("training set is empty");
  if (tune_set.empty()) throw UsageError("tuning set is empty");

  const std::size_t n = train_set.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  const double total_steps = static_cast<double>(batches) * config.epochs;

  AdamState adam = AdamState::for_parameters(model.parameters());
  EarlyStopping stopper(config.patience);
  Snapshot best = take_snapshot(model);
  TrainHistory history;
  std::vector<std::size_t> order(n);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = Rng::derive(config.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(n, begin + config.batch_size);
      Gradients grads = model.parameters().zero_gradients();
      const double weight = 1.0 / static_cast<double>(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        Rng rng = Rng::derive(config.seed, {kSampleStream, static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(k)});
        Tape tape;
        Var loss = model.training_loss(tape, train_set[order[k]], rng);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw TrainingAborted("non-finite training loss at epoch " + std::to_string(epoch) +
                                ", batch " + std::to_string(b) + ", patient " +
                                std::to_string(train_set[order[k]].patient_id));
        }
        epoch_loss += value;
        tape.backward(loss);
        tape.accumulate_parameter_grads(grads, weight);
      }
      lr = lr_at(static_cast<double>(history.steps) + 0.5, total_steps, config);
      adam_step(model.parameters(), grads, adam, lr);
      model.on_optimizer_step();
      ++history.steps;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(n);
    record.tune_loss = mean_evaluation_loss(model, tune_set);
    record.lr = lr;
    record.tau = current_tau(model);
    if (!std::isfinite(record.tune_loss)) {
      throw TrainingAborted("non-finite tuning loss at epoch " + std::to_string(epoch));
    }
    history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (stopper.update(record.tune_loss)) best = take_snapshot(model);
    if (stopper.should_stop()) {
      history.stopped_early = true;
      break;
    }
  }

  restore_snapshot(model, best);
  history.best_epoch = stopper.best_epoch();
  history.best_tune_loss = stopper.best_loss();
  return history;
}

Metrics evaluate(const RiskModel& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw UsageError("evaluation set is empty");
  Metrics m;
  m.count = examples.size();
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(examples.size());
  labels.reserve(examples.size());

  const auto* pcb = dynamic_cast<const PcbModel*>(&model);
  std::vector<std::vector<int>> predicted, truth;
  if (pcb) {
    predicted.resize(pcb->specs().size());
    truth.resize(pcb->specs().size());
  }
  double loss = 0.0;
  for (const auto& ex : examples) {
    labels.push_back(ex.label);
    loss += model.evaluation_loss(ex);
    if (pcb) {
      PcbPrediction p = pcb->predict(ex);
      scores.push_back(p.risk);
      for (std::size_t c = 0; c < predicted.size(); ++c) {
        predicted[c].push_back(p.predicted_concepts[c]);
        truth[c].push_back(ex.concepts[c]);
      }
    } else {
      scores.push_back(model.predict_risk(ex));
    }
  }
  m.loss = loss / static_cast<double>(examples.size());
  m.auroc = auroc(scores, labels);
  m.auprc = auprc(scores, labels);
  if (pcb) {
    for (std::size_t c = 0; c < predicted.size(); ++c) {
      const auto& spec = pcb->specs()[c];
      m.concept_names.push_back(spec.name);
      m.concept_f1.push_back(spec.kind == ConceptKind::kBinary
                                 ? f1_binary(predicted[c], truth[c])
                                 : macro_f1(predicted[c], truth[c], spec.categories));
    }
  }
  return m;
}

}  // namespace pcb
