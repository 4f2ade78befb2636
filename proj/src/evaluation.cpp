#include "raat/evaluation.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace raat {

AccuracyCount count_correct(const Classifier& model, const Dataset& data,
                            const std::optional<AttackConfig>& attack, std::uint64_t seed,
                            Index batch_size) {
  if (data.size() == 0) throw ValidationError("accuracy on an empty dataset");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  AccuracyCount count;
  std::uint64_t batch = 0;
  for (Index start = 0; start < data.size(); start += batch_size, ++batch) {
    const Index rows = std::min(batch_size, data.size() - start);
    Batch inputs = data.inputs.middleRows(start, rows);
    const Labels labels(data.labels.begin() + start, data.labels.begin() + start + rows);
    if (attack) {
      Rng rng = substream(seed, "eval", batch);
      inputs = pgd(model, inputs, labels, *attack, rng);
    }
    const Labels predicted = predict_labels(logits(model, inputs));
    for (std::size_t i = 0; i < labels.size(); ++i) count.correct += predicted[i] == labels[i];
    count.total += rows;
  }
  return count;
}

double accuracy(const Classifier& model, const Dataset& data,
                const std::optional<AttackConfig>& attack, std::uint64_t seed) {
  return count_correct(model, data, attack, seed).percent();
}

double nrr(double clean, double robust) {
  if (clean == 0.0 && robust == 0.0) return 0.0;
  return 2.0 * clean * robust / (clean + robust);
}

double mean_score(double clean, double robust) { return (clean + robust) / 2.0; }

double round2(double value) { return std::round(value * 100.0) / 100.0; }

std::vector<NamedAttack> standard_attacks(const AttackConfig& threat) {
  return {{"PGD-10", pgd_config(threat, 10)},
          {"PGD-100", pgd_config(threat, 100)},
          {"CW", cw_config(threat)}};
}

void EvalReport::finalize() {
  double robust_value = clean;
  if (aa) {
    tradeoff_source = "AA";
    robust_value = *aa;
  } else if (!robust.empty()) {
    robust_value = std::numeric_limits<double>::infinity();
    for (const auto& [name, value] : robust) {
      if (value < robust_value) {
        robust_value = value;
        tradeoff_source = name;
      }
    }
  } else {
    tradeoff_source = "clean";
  }
  nrr = raat::nrr(clean, robust_value);
  mean = mean_score(clean, robust_value);
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j{{"samples", r.samples},
                   {"clean_acc", r.clean},
                   {"robust_acc", r.robust},
                   {"aa_acc", nullptr},
                   {"tradeoff_source", r.tradeoff_source},
                   {"nrr", r.nrr},
                   {"mean", r.mean}};
  if (r.aa) j["aa_acc"] = *r.aa;
  return j;
}

EvalReport evaluate(const Classifier& model, const Dataset& data,
                    const std::vector<NamedAttack>& attacks, std::uint64_t seed,
                    std::optional<double> aa) {
  EvalReport r;
  r.samples = data.size();
  r.clean = round2(accuracy(model, data, std::nullopt));
  for (const auto& a : attacks) r.robust[a.name] = round2(accuracy(model, data, a.config, seed));
  r.aa = aa;
  r.finalize();
  return r;
}

AlignmentProfile alignment_profile(const Classifier& model, const Batch& probes,
                                   const Labels& labels, const AttackConfig& attack,
                                   const std::vector<double>& mu_grid, std::uint64_t seed) {
  if (probes.rows() == 0) throw ValidationError("alignment profile needs probes");
  bool has0 = false, has1 = false;
  for (double mu : mu_grid) {
    if (!(mu >= 0.0 && mu <= 1.0)) throw ConfigError("mu values must lie in [0, 1]");
    has0 |= mu == 0.0;
    has1 |= mu == 1.0;
  }
  if (!has0 || !has1) throw ConfigError("mu grid must contain 0 and 1");

  Rng rng = substream(seed, "alignment");
  const Batch adversarial = pgd(model, probes, labels, attack, rng);
  const auto start = hidden_activations(model, probes);
  const auto end = hidden_activations(model, adversarial);

  AlignmentProfile p;
  p.mu = mu_grid;
  p.deviation.assign(start.size(), std::vector<double>(mu_grid.size(), 0.0));
  for (std::size_t k = 0; k < mu_grid.size(); ++k) {
    const double mu = mu_grid[k];
    const Batch mixed = (1.0 - mu) * probes + mu * adversarial;
    const auto h = hidden_activations(model, mixed);
    for (std::size_t layer = 0; layer < h.size(); ++layer) {
      const Batch target = (1.0 - mu) * start[layer] + mu * end[layer];
      const Batch gap = h[layer] - target;
      double total = 0.0;
      for (Index i = 0; i < gap.rows(); ++i) total += gap.row(i).norm();
      p.deviation[layer][k] = total / static_cast<double>(gap.rows());
    }
  }
  return p;
}

nlohmann::json to_json(const AlignmentProfile& p) {
  return {{"mu", p.mu}, {"deviation", p.deviation}};
}

std::string to_string(Figure2Strategy s) {
  switch (s) {
    case Figure2Strategy::Baseline: return "baseline";
    case Figure2Strategy::BoundaryToThreshold: return "boundary-to-threshold";
    case Figure2Strategy::BoundaryToZero: return "boundary-to-zero";
    case Figure2Strategy::NonBoundaryToThreshold: return "nonboundary-to-threshold";
    case Figure2Strategy::NonBoundaryToZero: return "nonboundary-to-zero";
  }
  return "baseline";
}

Figure2Strategy figure2_strategy_from_string(const std::string& s) {
  for (Figure2Strategy f : kFigure2Strategies) {
    if (to_string(f) == s) return f;
  }
  throw ConfigError("unknown strategy '" + s + "'");
}

SubsetBudgets budgets_for(Figure2Strategy s, double threshold) {
  SubsetBudgets b;
  b.threshold = threshold;
  switch (s) {
    case Figure2Strategy::Baseline: break;
    case Figure2Strategy::BoundaryToThreshold: b.boundary = Budget::Threshold; break;
    case Figure2Strategy::BoundaryToZero: b.boundary = Budget::Zero; break;
    case Figure2Strategy::NonBoundaryToThreshold: b.non_boundary = Budget::Threshold; break;
    case Figure2Strategy::NonBoundaryToZero: b.non_boundary = Budget::Zero; break;
  }
  return b;
}

Figure2Run figure2_protocol(const TrainConfig& base, const Classifier& initial, const Dataset& train,
                            const Dataset& eval, double threshold, Figure2Strategy strategy,
                            const TrainHooks& hooks) {
  TrainConfig cfg = base;
  cfg.subset_budgets = budgets_for(strategy, threshold);
  Classifier model = initial;
  return {strategy, fit(cfg, model, train, eval, hooks)};
}

std::string figure2_csv(const std::vector<Figure2Run>& runs) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,clean_acc,robust_acc,strategy\n";
  for (const auto& run : runs) {
    for (const auto& r : run.result.log) {
      out << r.epoch << ',' << r.clean_acc << ',' << r.pgd10_acc << ',' << to_string(run.strategy)
          << '\n';
    }
  }
  return out.str();
}

}  // namespace raat
