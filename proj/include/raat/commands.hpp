#ifndef RAAT_COMMANDS_HPP
#define RAAT_COMMANDS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

namespace raat {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

struct CommandOptions {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string study;
  std::optional<double> aa_accuracy;
  std::optional<double> clean_accuracy;
};

/// Runs `body`, mapping NumericError to 3 and any other failure to 2.
int guarded(const std::function<int()>& body, std::ostream& err);

/// Writes train_log.jsonl, checkpoints/{latest,best}.ckpt, final.ckpt,
/// eval_report.json and the resolved config.
int cmd_train(const CommandOptions& opt, std::ostream& out, std::ostream& err);
/// Writes eval_report.json for a checkpoint.
int cmd_eval(const CommandOptions& opt, std::ostream& out, std::ostream& err);
/// Studies: fig2, eta-sweep, lambda-sweep, two-ideas. Writes <study>.csv.
int cmd_ablate(const CommandOptions& opt, std::ostream& out, std::ostream& err);
/// Studies: gaussian-sweep, taylor.
int cmd_theory(const CommandOptions& opt, std::ostream& out, std::ostream& err);
/// NRR and mean from a clean accuracy and a robust accuracy.
int cmd_report(const CommandOptions& opt, std::ostream& out, std::ostream& err);

}  // namespace raat

#endif  // RAAT_COMMANDS_HPP
