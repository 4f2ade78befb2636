#ifndef RAAT_EVALUATION_HPP
#define RAAT_EVALUATION_HPP

#include "raat/attacks.hpp"
#include "raat/common.hpp"
#include "raat/data.hpp"
#include "raat/model.hpp"
#include "raat/trainer.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace raat {

struct AccuracyCount {
  Index correct = 0;
  Index total = 0;
  double percent() const { return total == 0 ? 0.0 : 100.0 * double(correct) / double(total); }
};

/// Correct predictions on clean inputs (no attack) or on attacked inputs.
/// Attack randomness comes from substream(seed, "eval", batch).
AccuracyCount count_correct(const Classifier& model, const Dataset& data,
                            const std::optional<AttackConfig>& attack, std::uint64_t seed = 0,
                            Index batch_size = 256);

double accuracy(const Classifier& model, const Dataset& data,
                const std::optional<AttackConfig>& attack = std::nullopt, std::uint64_t seed = 0);

/// Harmonic mean 2ab/(a+b); 0 when both are 0.
double nrr(double clean, double robust);
double mean_score(double clean, double robust);

/// Rounds a percentage to two decimals.
double round2(double value);

struct NamedAttack {
  std::string name;
  AttackConfig config;
};

/// PGD-10, PGD-100 and the margin attack for one threat model.
std::vector<NamedAttack> standard_attacks(const AttackConfig& threat);

struct EvalReport {
  Index samples = 0;
  double clean = 0;
  std::map<std::string, double> robust;
  /// External AutoAttack accuracy, when supplied.
  std::optional<double> aa;
  /// Robust number used for nrr and mean: aa if given, else the lowest
  /// internal robust accuracy.
  std::string tradeoff_source;
  double nrr = 0;
  double mean = 0;

  /// Recomputes tradeoff_source, nrr and mean from the stored accuracies.
  void finalize();
};

nlohmann::json to_json(const EvalReport& r);

EvalReport evaluate(const Classifier& model, const Dataset& data,
                    const std::vector<NamedAttack>& attacks, std::uint64_t seed,
                    std::optional<double> aa = std::nullopt);

struct AlignmentProfile {
  std::vector<double> mu;
  /// deviation[layer][k]: mean over probes of the l2 deviation at mu[k].
  std::vector<std::vector<double>> deviation;
};

inline const std::vector<double> kDefaultMuGrid{0.0, 0.25, 0.5, 0.75, 1.0};

/// Hidden representations along x_mu = (1 - mu) x + mu x' against the
/// matching interpolation of the endpoint representations.
AlignmentProfile alignment_profile(const Classifier& model, const Batch& probes,
                                   const Labels& labels, const AttackConfig& attack,
                                   const std::vector<double>& mu_grid, std::uint64_t seed);

nlohmann::json to_json(const AlignmentProfile& p);

enum class Figure2Strategy {
  Baseline,
  BoundaryToThreshold,
  BoundaryToZero,
  NonBoundaryToThreshold,
  NonBoundaryToZero
};

inline constexpr std::array<Figure2Strategy, 5> kFigure2Strategies{
    Figure2Strategy::Baseline, Figure2Strategy::BoundaryToThreshold,
    Figure2Strategy::BoundaryToZero, Figure2Strategy::NonBoundaryToThreshold,
    Figure2Strategy::NonBoundaryToZero};

std::string to_string(Figure2Strategy s);
Figure2Strategy figure2_strategy_from_string(const std::string& s);
SubsetBudgets budgets_for(Figure2Strategy s, double threshold);

struct Figure2Run {
  Figure2Strategy strategy;
  TrainResult result;
};

/// Trains from `initial` with per-subset budgets for the strategy. The
/// partition uses the reduced attack at `threshold`.
Figure2Run figure2_protocol(const TrainConfig& base, const Classifier& initial, const Dataset& train,
                            const Dataset& eval, double threshold, Figure2Strategy strategy,
                            const TrainHooks& hooks = {});

/// Header `epoch,clean_acc,robust_acc,strategy`.
std::string figure2_csv(const std::vector<Figure2Run>& runs);

}  // namespace raat

#endif  // RAAT_EVALUATION_HPP
