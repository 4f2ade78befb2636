#ifndef RAAT_TRAINER_HPP
#define RAAT_TRAINER_HPP

#include "raat/attacks.hpp"
#include "raat/common.hpp"
#include "raat/data.hpp"
#include "raat/losses.hpp"
#include "raat/model.hpp"

#include <json.hpp>

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace raat {

/// Attack budget applied to one partition subset.
enum class Budget { Full, Threshold, Zero };

std::string to_string(Budget b);
Budget budget_from_string(const std::string& s);

/// Per-subset budgets for boundary ablations. Misclassified examples are
/// always trained on clean inputs.
struct SubsetBudgets {
  Budget non_boundary = Budget::Full;
  Budget boundary = Budget::Full;
  double threshold = 0.8 / 255.0;

  friend bool operator==(const SubsetBudgets&, const SubsetBudgets&) = default;
};

struct TrainConfig {
  int epochs = 10;
  Index batch_size = 128;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double learning_rate = 0.1;
  std::vector<int> decay_epochs{8, 9};
  double decay_factor = 0.1;
  std::uint64_t seed = 0;
  bool ema = false;
  double ema_decay = 0.999;
  ObjectiveConfig objective;
  AttackConfig attack;
  AugmentationPolicy augmentation;
  /// Replaces the variant's attack recipe with partition-driven budgets
  /// and a plain CE objective.
  std::optional<SubsetBudgets> subset_budgets;
  /// Evaluate on at most this many leading eval examples (0 = all).
  Index eval_limit = 0;
  /// When set, latest.ckpt and best.ckpt are written here every epoch.
  std::string checkpoint_dir;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// 110 epochs with decay at 100 and 105.
TrainConfig paper_schedule(TrainConfig base = {});

/// buffer <- momentum * buffer + (grad + weight_decay * param);
/// param <- param - lr * buffer.
void sgd_step(Vector& params, const Vector& grads, Vector& buffer, double lr, double momentum,
              double weight_decay);

double lr_at(int epoch, const TrainConfig& cfg);

/// avg <- decay * avg + (1 - decay) * params.
void ema_update(Vector& average, const Vector& params, double decay);

struct SubsetCounts {
  Index non_boundary = 0;
  Index boundary = 0;
  Index misclassified = 0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double clean_acc = 0;
  double pgd10_acc = 0;
  std::optional<SubsetCounts> subset_counts;
  /// Attack radius used per subset (budget ablations only).
  std::optional<std::array<double, 3>> subset_budgets;
};

nlohmann::json to_json(const EpochRecord& r);

struct CheckpointRecord {
  int epoch = -1;
  double clean_acc = 0;
  double pgd10_acc = 0;
  Vector parameters;
  std::string variant;
};

struct TrainResult {
  CheckpointRecord best;
  std::vector<EpochRecord> log;
  /// Objective value of every mini-batch, in order.
  std::vector<double> batch_losses;
  Vector final_parameters;
  std::optional<Vector> ema_parameters;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Called per batch with (epoch, batch, counts) for RAAT variants.
  std::function<void(int, int, const SubsetCounts&)> on_partition;
};

/// Trains `model` in place. The model must already be initialised.
TrainResult fit(const TrainConfig& cfg, Classifier& model, const Dataset& train,
                const Dataset& eval, const TrainHooks& hooks = {});

}  // namespace raat

#endif  // RAAT_TRAINER_HPP
