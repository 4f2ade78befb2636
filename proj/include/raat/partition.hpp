#ifndef RAAT_PARTITION_HPP
#define RAAT_PARTITION_HPP

#include "raat/attacks.hpp"
#include "raat/common.hpp"
#include "raat/model.hpp"

namespace raat {

/// Split of a batch into non-boundary (S.), boundary (So) and misclassified
/// (S-) examples against a frozen parameter snapshot.
struct PartitionMasks {
  Mask non_boundary;
  Mask boundary;
  Mask misclassified;
  Batch reduced;           // reduced-budget adversarial batch x''
  Labels clean_prediction;  // frozen prediction on x
  Labels reduced_prediction;  // frozen prediction on x''

  Index size() const { return non_boundary.size(); }
  Index count_non_boundary() const { return non_boundary.count(); }
  Index count_boundary() const { return boundary.count(); }
  Index count_misclassified() const { return misclassified.count(); }
  /// Pairwise disjoint and covering every example.
  bool is_partition() const;
};

PartitionMasks partition_batch(const Classifier& frozen, const Batch& inputs,
                               const Labels& labels, double eta, const AttackConfig& cfg, Rng& rng);

/// Builds masks from given predictions; reduced is left empty.
PartitionMasks masks_from_predictions(const Labels& labels, const Labels& clean_prediction,
                                      const Labels& reduced_prediction);

}  // namespace raat

#endif  // RAAT_PARTITION_HPP
