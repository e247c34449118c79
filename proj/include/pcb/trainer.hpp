#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pcb/model.hpp"

namespace pcb {

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 256;
  double base_lr = 5e-5;
  double warmup_fraction = 0.1;
  double hold_fraction = 0.4;
  double decay_fraction = 0.5;
  int patience = 10;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending key.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Linear warm-up to base_lr, constant hold, then cosine decay to zero.
// Throws UsageError unless 0 <= step <= total.
double lr_at(double step, double total, const TrainConfig& config);

// Tracks the best tuning loss; should_stop() once `patience` consecutive
// epochs fail to improve on it.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  // Returns true when `loss` is a new best (strictly lower).
  bool update(double loss);
  bool should_stop() const { return stale_ >= patience_; }
  int best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int epoch_ = 0;
  int stale_ = 0;
  int best_epoch_ = 0;
  double best_loss_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double tune_loss = 0.0;
  double lr = 0.0;   // learning rate of the epoch's last step
  double tau = 0.0;  // temperature after the epoch (0 for the black box)
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_tune_loss = 0.0;
  bool stopped_early = false;
  std::int64_t steps = 0;
};

// Columnar log: header "epoch\ttrain_loss\ttune_loss\tlr\ttau", one row per epoch.
void write_history(std::ostream& out, const TrainHistory& history);

// Minibatch Adam with lr_at, temperature stepping and early stopping on the
// tuning loss. Per-sample gradients are summed in batch order, so results are
// deterministic for a given seed. On return the model holds the parameters of
// the best tuning-loss epoch. Throws TrainingAborted on a non-finite loss.
TrainHistory train(RiskModel& model, const std::vector<Example>& train_set,
                   const std::vector<Example>& tune_set, const TrainConfig& config,
                   const std::function<void(const EpochRecord&)>& on_epoch = {});

double mean_evaluation_loss(const RiskModel& model, const std::vector<Example>& examples);

struct Metrics {
  std::size_t count = 0;
  double auroc = 0.0;
  double auprc = 0.0;
  double loss = 0.0;
  std::vector<std::string> concept_names;
  std::vector<double> concept_f1;  // binary F1 or macro-F1; PCB only
};

// Risk metrics use the test-time contract (predicted concepts feed f).
Metrics evaluate(const RiskModel& model, const std::vector<Example>& examples);

}  // namespace pcb
