#ifndef RAAT_LOSSES_HPP
#define RAAT_LOSSES_HPP

#include "raat/common.hpp"
#include "raat/model.hpp"
#include "raat/partition.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace raat {

/// Floor applied to every probability before a logarithm.
inline constexpr double kProbabilityFloor = 1e-12;

// ---------------------------------------------------------------------------
// Surrogate losses on probability rows. All values are in nats.
// ---------------------------------------------------------------------------

template <typename Derived>
void check_class(const Eigen::MatrixBase<Derived>& p, int y) {
  if (y < 0 || y >= p.size()) {
    throw ValidationError("label " + std::to_string(y) + " outside [0, " +
                          std::to_string(p.size()) + ")");
  }
}

/// Cross-entropy -log p_y.
template <typename Derived>
typename Derived::Scalar ce(const Eigen::MatrixBase<Derived>& p, int y) {
  check_class(p, y);
  using S = typename Derived::Scalar;
  return -std::log(std::max<S>(p(y), S(kProbabilityFloor)));
}

/// Largest probability among the classes other than y (lowest index on ties).
template <typename Derived>
Index runner_up(const Eigen::MatrixBase<Derived>& p, int y) {
  Index best = -1;
  for (Index k = 0; k < p.size(); ++k) {
    if (k == y) continue;
    if (best < 0 || p(k) > p(best)) best = k;
  }
  return best;
}

/// Boosted cross-entropy: CE plus the margin term -log(1 - max_{k != y} p_k).
template <typename Derived>
typename Derived::Scalar bce(const Eigen::MatrixBase<Derived>& p, int y) {
  using S = typename Derived::Scalar;
  const S other = p(runner_up(p, y));
  return ce(p, y) - std::log(std::max<S>(S(1) - other, S(kProbabilityFloor)));
}

/// KL(p || q) = sum_k p_k (log p_k - log q_k), both logs floored.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl(const Eigen::MatrixBase<DerivedP>& p,
                             const Eigen::MatrixBase<DerivedQ>& q) {
  using S = typename DerivedP::Scalar;
  S total = 0;
  for (Index k = 0; k < p.size(); ++k) {
    if (p(k) == S(0)) continue;
    total += p(k) * (std::log(std::max<S>(p(k), S(kProbabilityFloor))) -
                     std::log(std::max<S>(q(k), S(kProbabilityFloor))));
  }
  return total;
}

/// Jensen-Shannon divergence against the even mixture m = (a + b) / 2.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar js_consistency(const Eigen::MatrixBase<DerivedA>& a,
                                         const Eigen::MatrixBase<DerivedB>& b) {
  using S = typename DerivedA::Scalar;
  using Column = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  const Column ac = a;
  const Column bc = b;
  const Column m = (ac + bc) / S(2);
  return (kl(ac, m) + kl(bc, m)) / S(2);
}

// Gradients with respect to the probability arguments.

Vector ce_gradient(const Vector& p, int y);
Vector bce_gradient(const Vector& p, int y);

struct PairGradient {
  Vector first;
  Vector second;
};

PairGradient kl_gradient(const Vector& p, const Vector& q);
PairGradient js_gradient(const Vector& a, const Vector& b);

/// One draw of Beta(gamma, gamma), strictly inside (0, 1).
double sample_beta(double gamma, Rng& rng);

// ---------------------------------------------------------------------------
// Composite objectives.
// ---------------------------------------------------------------------------

enum class Variant { PgdAt, Trades, Mart, ConsAt, Raat, RaatPlusPlus };
enum class MisclassifiedMode { Table5Literal, Standard, MmaClean, MartStyle };
enum class SupervisedBranch { RawInput, Augmented };

std::string to_string(Variant v);
std::string to_string(MisclassifiedMode m);
std::string to_string(SupervisedBranch s);
Variant variant_from_string(const std::string& s);
MisclassifiedMode misclassified_mode_from_string(const std::string& s);
SupervisedBranch supervised_branch_from_string(const std::string& s);

bool uses_partition(Variant v);
bool uses_augmented_pair(Variant v);

struct ObjectiveConfig {
  Variant variant = Variant::Raat;
  double lambda = 1.0;
  double eta = 0.1;
  double gamma = 0.75;
  MisclassifiedMode misclassified_mode = MisclassifiedMode::Table5Literal;
  SupervisedBranch supervised_branch = SupervisedBranch::Augmented;
  /// RAAT variants only: when false every correctly classified example is
  /// trained on the full-budget sample (the DICAR-only ablation arm).
  bool boundary_reduction = true;
  /// Use beta = 1/2 for every example instead of Beta(gamma, gamma) draws.
  bool half_beta = false;

  void validate() const;
  friend bool operator==(const ObjectiveConfig&, const ObjectiveConfig&) = default;
};

/// Default lambda per variant: 6 for TRADES and MART, 1 otherwise.
double default_lambda(Variant v);

/// Inputs to one objective evaluation. Which members are required depends on
/// the variant; unused members may stay empty.
struct ObjectiveBatch {
  Batch natural;      // x as seen by the supervised branch
  Labels labels;
  Batch adversarial;  // full-budget sample from the variant's attack recipe
  Batch first_view;   // first augmentation
  Batch second_view;  // second augmentation
  Batch first_adversarial;
  Batch second_adversarial;
  Vector beta;        // one interpolation coefficient per example
};

struct SubsetContributions {
  double non_boundary = 0;
  double boundary = 0;
  double misclassified = 0;
};

struct BatchLossReport {
  double total = 0;
  double supervised = 0;
  /// Unweighted regularizer; total = supervised + lambda * regularizer.
  double regularizer = 0;
  /// DICAR part of the regularizer (already averaged over the batch).
  double dicar = 0;
  std::optional<SubsetContributions> subsets;
};

struct ObjectiveResult {
  BatchLossReport report;
  Vector gradient;  // empty unless requested
};

/// Mean over included examples of the DICAR consistency between the
/// prediction at the beta-interpolated adversarial pair and the
/// beta-interpolated clean-view predictions. Returns 0 for an empty mask.
double dicar_term(const Classifier& model, const Batch& first_view, const Batch& second_view,
                  const Batch& first_adversarial, const Batch& second_adversarial,
                  const Vector& beta, const Mask& include);

/// Evaluates one batch of the chosen objective. masks are required for the
/// RAAT variants and ignored otherwise. The gradient is with respect to the
/// model parameters with the gates, adversarial inputs and beta held fixed.
ObjectiveResult composite_objective(const ObjectiveConfig& cfg, const Classifier& model,
                                    const PartitionMasks* masks, const ObjectiveBatch& batch,
                                    bool want_gradient);

}  // namespace raat

#endif  // RAAT_LOSSES_HPP
