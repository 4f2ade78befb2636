#include "raat/partition.hpp"

namespace raat {

bool PartitionMasks::is_partition() const {
  const Index n = size();
  if (boundary.size() != n || misclassified.size() != n) return false;
  for (Index i = 0; i < n; ++i) {
    const int hits = int(non_boundary(i)) + int(boundary(i)) + int(misclassified(i));
    if (hits != 1) return false;
  }
  return true;
}

PartitionMasks masks_from_predictions(const Labels& labels, const Labels& clean_prediction,
                                      const Labels& reduced_prediction) {
  const std::size_t n = labels.size();
  if (clean_prediction.size() != n || reduced_prediction.size() != n) {
    throw InputContractError("prediction vectors do not match the labels");
  }
  const auto rows = static_cast<Index>(n);
  PartitionMasks m;
  m.non_boundary = Mask::Constant(rows, false);
  m.boundary = Mask::Constant(rows, false);
  m.misclassified = Mask::Constant(rows, false);
  m.clean_prediction = clean_prediction;
  m.reduced_prediction = reduced_prediction;
  for (std::size_t s = 0; s < n; ++s) {
    const auto i = static_cast<Index>(s);
    if (clean_prediction[s] != labels[s]) m.misclassified(i) = true;
    else if (reduced_prediction[s] != labels[s]) m.boundary(i) = true;
    else m.non_boundary(i) = true;
  }
  return m;
}

PartitionMasks partition_batch(const Classifier& frozen, const Batch& inputs,
                               const Labels& labels, double eta, const AttackConfig& cfg,
                               Rng& rng) {
  check_inputs(frozen, inputs);
  check_labels(frozen, labels, inputs.rows());
  // Gates come from the CE attack regardless of the training recipe.
  const AttackConfig attack = pgd_config(cfg, cfg.steps);
  Batch reduced = reduced_pgd(frozen, inputs, labels, attack, eta, rng);
  const Labels clean = predict_labels(logits(frozen, inputs));
  const Labels shrunk = predict_labels(logits(frozen, reduced));
  PartitionMasks m = masks_from_predictions(labels, clean, shrunk);
  m.reduced = std::move(reduced);
  return m;
}

}  // namespace raat
