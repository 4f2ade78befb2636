#include "raat/trainer.hpp"

#include "raat/checkpoint.hpp"
#include "raat/evaluation.hpp"
#include "raat/partition.hpp"

#include <filesystem>

namespace raat {

std::string to_string(Budget b) {
  switch (b) {
    case Budget::Full: return "full";
    case Budget::Threshold: return "threshold";
    case Budget::Zero: return "zero";
  }
  return "full";
}

Budget budget_from_string(const std::string& s) {
  if (s == "full") return Budget::Full;
  if (s == "threshold") return Budget::Threshold;
  if (s == "zero") return Budget::Zero;
  throw ConfigError("unknown budget '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  for (int e : decay_epochs) {
    if (e < 0 || e >= epochs) throw ConfigError("decay epochs must lie in [0, epochs)");
  }
  if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0) || !(decay_factor >= 0.0)) {
    throw ConfigError("learning rate, weight decay and decay factor must be >= 0");
  }
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("momentum must lie in [0, 1]");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("EMA decay must lie in [0, 1]");
  if (eval_limit < 0) throw ConfigError("eval limit must be >= 0");
  objective.validate();
  attack.validate();
  augmentation.validate();
  if (subset_budgets) {
    if (!(subset_budgets->threshold > 0.0 && subset_budgets->threshold <= attack.epsilon)) {
      throw ConfigError("budget threshold must lie in (0, epsilon]");
    }
  }
}

TrainConfig paper_schedule(TrainConfig base) {
  base.epochs = 110;
  base.decay_epochs = {100, 105};
  return base;
}

void sgd_step(Vector& params, const Vector& grads, Vector& buffer, double lr, double momentum,
              double weight_decay) {
  if (grads.size() != params.size() || buffer.size() != params.size()) {
    throw InputContractError("sgd_step operands differ in length");
  }
  if (!all_finite(grads)) throw NumericError("non-finite gradient");
  buffer = momentum * buffer + (grads + weight_decay * params);
  params -= lr * buffer;
  if (!all_finite(params)) throw NumericError("parameters became non-finite");
}

double lr_at(int epoch, const TrainConfig& cfg) {
  double lr = cfg.learning_rate;
  for (int e : cfg.decay_epochs) {
    if (epoch >= e) lr *= cfg.decay_factor;
  }
  return lr;
}

void ema_update(Vector& average, const Vector& params, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw ConfigError("EMA decay must lie in [0, 1]");
  if (average.size() != params.size()) throw InputContractError("EMA operands differ in length");
  if (decay == 0.0) {
    average = params;
  } else if (decay != 1.0) {
    average = decay * average + (1.0 - decay) * params;
  }
}

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch},
                   {"lr", r.lr},
                   {"train_loss", r.train_loss},
                   {"clean_acc", r.clean_acc},
                   {"pgd10_acc", r.pgd10_acc},
                   {"subset_counts", nullptr}};
  if (r.subset_counts) {
    j["subset_counts"] = {{"non_boundary", r.subset_counts->non_boundary},
                          {"boundary", r.subset_counts->boundary},
                          {"misclassified", r.subset_counts->misclassified}};
  }
  if (r.subset_budgets) {
    j["subset_budgets"] = {{"non_boundary", (*r.subset_budgets)[0]},
                           {"boundary", (*r.subset_budgets)[1]},
                           {"misclassified", (*r.subset_budgets)[2]}};
  }
  return j;
}

namespace {

double radius(Budget b, const SubsetBudgets& budgets, const AttackConfig& attack) {
  switch (b) {
    case Budget::Full: return attack.epsilon;
    case Budget::Threshold: return budgets.threshold;
    case Budget::Zero: return 0.0;
  }
  return attack.epsilon;
}

// Attacks each row with the radius of its subset; the step size scales with
// the radius.
Batch budgeted_attack(const Classifier& frozen, const Batch& inputs, const Labels& labels,
                      const PartitionMasks& masks, const SubsetBudgets& budgets,
                      const AttackConfig& attack, Rng& rng) {
  Batch out = inputs;
  for (Budget level : {Budget::Full, Budget::Threshold}) {
    std::vector<Index> rows;
    for (Index i = 0; i < inputs.rows(); ++i) {
      if ((masks.non_boundary(i) && budgets.non_boundary == level) ||
          (masks.boundary(i) && budgets.boundary == level)) {
        rows.push_back(i);
      }
    }
    if (rows.empty()) continue;
    Batch part(static_cast<Index>(rows.size()), inputs.cols());
    Labels part_labels;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      part.row(static_cast<Index>(r)) = inputs.row(rows[r]);
      part_labels.push_back(labels[static_cast<std::size_t>(rows[r])]);
    }
    AttackConfig cfg = pgd_config(attack, attack.steps);
    const double eps = radius(level, budgets, attack);
    cfg.step_size = attack.epsilon > 0.0 ? attack.step_size * eps / attack.epsilon : 0.0;
    cfg.epsilon = eps;
    const Batch adv = pgd(frozen, part, part_labels, cfg, rng);
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(rows[r]) = adv.row(static_cast<Index>(r));
  }
  return out;
}

void require_unit_range(const Batch& b) {
  if (b.size() > 0 && (b.minCoeff() < 0.0 || b.maxCoeff() > 1.0)) {
    throw ValidationError("training batch left [0, 1]");
  }
}

Dataset eval_slice(const Dataset& eval, Index limit) {
  if (limit == 0 || limit >= eval.size()) return eval;
  std::vector<Index> rows(static_cast<std::size_t>(limit));
  for (Index i = 0; i < limit; ++i) rows[static_cast<std::size_t>(i)] = i;
  return eval.subset(rows);
}

}  // namespace

TrainResult fit(const TrainConfig& cfg, Classifier& model, const Dataset& train,
                const Dataset& eval, const TrainHooks& hooks) {
  cfg.validate();
  train.validate();
  eval.validate();
  if (train.size() == 0 || eval.size() == 0) throw ValidationError("empty dataset");
  if (train.dim() != model.input_dim() || eval.dim() != model.input_dim()) {
    throw InputContractError("dataset width does not match the model input");
  }
  if (train.num_classes != model.num_classes()) {
    throw InputContractError("dataset class count does not match the model");
  }
  const Dataset eval_set = eval_slice(eval, cfg.eval_limit);
  const Variant variant = cfg.objective.variant;
  const bool budgeted = cfg.subset_budgets.has_value();
  const bool partitioned = budgeted || uses_partition(variant);
  const bool paired = !budgeted && uses_augmented_pair(variant);
  const bool augmented_branch = cfg.objective.supervised_branch == SupervisedBranch::Augmented;
  const bool augment = train.is_image() && cfg.augmentation.enabled;
  const double partition_eta =
      budgeted ? cfg.subset_budgets->threshold / cfg.attack.epsilon : cfg.objective.eta;

  ObjectiveConfig objective = cfg.objective;
  if (budgeted) {
    objective.variant = Variant::PgdAt;
  }

  TrainResult result;
  Vector buffer = Vector::Zero(model.parameter_count());
  if (cfg.ema) result.ema_parameters = model.parameters();
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    model.set_mode(Mode::Train);
    const double lr = lr_at(epoch, cfg);
    Rng order_rng = substream(cfg.seed, "data", static_cast<std::uint64_t>(epoch));
    const auto batches = epoch_batches(train.size(), cfg.batch_size, order_rng);
    double loss_sum = 0.0;
    SubsetCounts counts;

    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      const auto rows = static_cast<Index>(idx.size());
      const auto e = static_cast<std::uint64_t>(epoch);
      Batch clean(rows, train.dim());
      Batch first(rows, train.dim());
      Batch second(rows, train.dim());
      Labels labels(idx.size());
      for (Index i = 0; i < rows; ++i) {
        const Index g = idx[static_cast<std::size_t>(i)];
        clean.row(i) = train.inputs.row(g);
        labels[static_cast<std::size_t>(i)] = train.labels[static_cast<std::size_t>(g)];
        if (augment) {
          auto [a, c] = augment_pair(train.inputs.row(g), train.shape, cfg.augmentation, cfg.seed,
                                     static_cast<std::uint64_t>(g), e);
          first.row(i) = a;
          second.row(i) = c;
        } else {
          first.row(i) = clean.row(i);
          second.row(i) = clean.row(i);
        }
      }
      require_unit_range(first);
      require_unit_range(second);

      // Frozen snapshot for the attacks and the partition gates.
      const Classifier frozen = model;
      Rng attack_rng = substream(cfg.seed, "attack", e, b);
      Rng partition_rng = substream(cfg.seed, "partition", e, b);
      Rng beta_rng = substream(cfg.seed, "beta", e, b);
      const AttackConfig ce_attack = pgd_config(cfg.attack, cfg.attack.steps);

      ObjectiveBatch batch;
      batch.labels = labels;
      batch.natural = augmented_branch ? first : clean;
      std::optional<PartitionMasks> masks;
      if (partitioned) {
        masks = partition_batch(frozen, batch.natural, labels, partition_eta, cfg.attack,
                                partition_rng);
        counts.non_boundary += masks->count_non_boundary();
        counts.boundary += masks->count_boundary();
        counts.misclassified += masks->count_misclassified();
        if (hooks.on_partition) {
          hooks.on_partition(epoch, static_cast<int>(b),
                             {masks->count_non_boundary(), masks->count_boundary(),
                              masks->count_misclassified()});
        }
      }

      if (budgeted) {
        batch.adversarial = budgeted_attack(frozen, batch.natural, labels, *masks,
                                            *cfg.subset_budgets, cfg.attack, attack_rng);
      } else if (paired) {
        batch.first_view = first;
        batch.second_view = second;
        batch.first_adversarial = pgd(frozen, first, labels, ce_attack, attack_rng);
        batch.second_adversarial = pgd(frozen, second, labels, ce_attack, attack_rng);
        batch.adversarial = augmented_branch
                                ? batch.first_adversarial
                                : pgd(frozen, batch.natural, labels, ce_attack, attack_rng);
        if (uses_partition(variant)) {
          batch.beta.resize(rows);
          for (Index i = 0; i < rows; ++i) {
            batch.beta(i) = objective.half_beta ? 0.5 : sample_beta(objective.gamma, beta_rng);
          }
        }
      } else if (variant == Variant::Trades) {
        batch.adversarial = trades_inner(frozen, batch.natural, cfg.attack, attack_rng);
      } else {
        batch.adversarial = pgd(frozen, batch.natural, labels, ce_attack, attack_rng);
      }

      const ObjectiveResult obj = composite_objective(
          objective, model, masks ? &*masks : nullptr, batch, /*want_gradient=*/true);
      sgd_step(model.parameters(), obj.gradient, buffer, lr, cfg.momentum, cfg.weight_decay);
      if (result.ema_parameters) ema_update(*result.ema_parameters, model.parameters(), cfg.ema_decay);
      result.batch_losses.push_back(obj.report.total);
      loss_sum += obj.report.total * static_cast<double>(rows);
    }

    model.set_mode(Mode::Eval);
    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr;
    record.train_loss = loss_sum / static_cast<double>(train.size());
    record.clean_acc = accuracy(model, eval_set, std::nullopt);
    record.pgd10_acc = accuracy(model, eval_set, pgd_config(cfg.attack, 10),
                                substream(cfg.seed, "eval-seed", static_cast<std::uint64_t>(epoch))());
    if (partitioned) record.subset_counts = counts;
    if (budgeted) {
      record.subset_budgets = std::array<double, 3>{
          radius(cfg.subset_budgets->non_boundary, *cfg.subset_budgets, cfg.attack),
          radius(cfg.subset_budgets->boundary, *cfg.subset_budgets, cfg.attack), 0.0};
    }
    result.log.push_back(record);

    const bool improved = result.best.epoch < 0 || record.pgd10_acc > result.best.pgd10_acc;
    if (improved) {
      result.best = {epoch, record.clean_acc, record.pgd10_acc, model.parameters(),
                     to_string(variant)};
    }
    if (!cfg.checkpoint_dir.empty()) {
      CheckpointMeta meta;
      meta.epoch = epoch;
      meta.seed = cfg.seed;
      meta.variant = to_string(variant);
      meta.metrics = {{"clean_acc", record.clean_acc}, {"pgd10_acc", record.pgd10_acc}};
      const auto dir = std::filesystem::path(cfg.checkpoint_dir);
      save_checkpoint((dir / "latest.ckpt").string(), model, meta);
      if (improved) save_checkpoint((dir / "best.ckpt").string(), model, meta);
    }
    if (hooks.on_epoch) hooks.on_epoch(record);
  }
  result.final_parameters = model.parameters();
  return result;
}

}  // namespace raat
