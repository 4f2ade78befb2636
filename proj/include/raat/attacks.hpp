#ifndef RAAT_ATTACKS_HPP
#define RAAT_ATTACKS_HPP

#include "raat/common.hpp"
#include "raat/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace raat {

enum class Norm { Linf, L2 };
enum class InnerLoss { CrossEntropy, KlTrades, CwMargin };

std::string to_string(Norm n);
std::string to_string(InnerLoss l);
Norm norm_from_string(const std::string& s);
InnerLoss inner_loss_from_string(const std::string& s);

struct AttackConfig {
  Norm norm = Norm::Linf;
  double epsilon = 8.0 / 255.0;
  double step_size = 2.0 / 255.0;
  int steps = 10;
  bool random_start = true;
  InnerLoss inner_loss = InnerLoss::CrossEntropy;
  bool clip = true;

  void validate() const;
  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

/// l_inf threat model: eps = 8/255, alpha = 2/255, 10 steps.
AttackConfig linf_defaults();
/// l_2 threat model: eps = 128/255, alpha = 32/255, 10 steps.
AttackConfig l2_defaults();
/// Margin attack used for the C&W column: 30 steps on the CW margin with the
/// threat model's eps and alpha.
AttackConfig cw_config(const AttackConfig& threat);
AttackConfig pgd_config(const AttackConfig& threat, int steps);

nlohmann::json to_json(const AttackConfig& cfg);
AttackConfig attack_config_from_json(const nlohmann::json& j, AttackConfig base = {});

/// Projection of a perturbation onto the eps-ball of the given norm.
template <typename Derived>
typename Derived::PlainObject project(const Eigen::MatrixBase<Derived>& delta, Norm norm,
                                      double epsilon) {
  using Plain = typename Derived::PlainObject;
  using S = typename Derived::Scalar;
  if (norm == Norm::Linf) {
    return delta.derived().cwiseMax(S(-epsilon)).cwiseMin(S(epsilon));
  }
  const S length = delta.norm();
  if (length > S(epsilon)) {
    return Plain(delta * (S(epsilon) / length));
  }
  return delta;
}

/// max_{k != y} z_k - z_y.
template <typename Derived>
typename Derived::Scalar cw_margin(const Eigen::MatrixBase<Derived>& logits, int y) {
  if (logits.size() < 2) throw ValidationError("cw_margin needs at least two classes");
  if (y < 0 || y >= logits.size()) throw ValidationError("cw_margin label out of range");
  Index best = -1;
  for (Index k = 0; k < logits.size(); ++k) {
    if (k == y) continue;
    if (best < 0 || logits(k) > logits(best)) best = k;
  }
  return logits(best) - logits(y);
}

/// Random start: uniform per coordinate in [-eps, eps] (l_inf) or uniform in
/// the l_2 ball. Not clipped.
Batch initial_perturbation(const Batch& inputs, const AttackConfig& cfg, Rng& rng);

/// Projected gradient ascent on the configured inner loss. Each step moves
/// by step_size along sign(grad) (l_inf) or grad/|grad| (l_2), projects the
/// total perturbation back onto the eps-ball and clips to [0, 1].
Batch pgd(const Classifier& model, const Batch& inputs, const Labels& labels,
          const AttackConfig& cfg, Rng& rng);

/// pgd with budget eta*eps and step eta*alpha, same step count.
Batch reduced_pgd(const Classifier& model, const Batch& inputs, const Labels& labels,
                  const AttackConfig& cfg, double eta, Rng& rng);

/// TRADES inner maximization: ascent on KL(p(x) || p(x')) with p(x) frozen.
Batch trades_inner(const Classifier& model, const Batch& inputs, const AttackConfig& cfg,
                   Rng& rng);

/// Largest per-row perturbation norm of (adversarial - natural).
double max_perturbation(const Batch& natural, const Batch& adversarial, Norm norm);

}  // namespace raat

#endif  // RAAT_ATTACKS_HPP
