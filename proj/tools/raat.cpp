#include "raat/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Attack loops allocate and free the same large buffers; keep them on the heap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Adversarial training lab: train, evaluate, ablate and run theory checks"};
  app.require_subcommand(1);

  raat::CommandOptions opt;
  std::uint64_t seed = 0;
  double aa = 0.0;
  double clean = 0.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", seed, "Root seed (overrides the config)");
  };

  auto* train = app.add_subcommand("train", "Train a classifier");
  train->add_option("--config", opt.config, "Experiment config")->required();
  train->add_option("--aa-accuracy", aa, "External AutoAttack accuracy for the report");
  add_common(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--config", opt.config, "Experiment config")->required();
  eval->add_option("--checkpoint", opt.checkpoint, "Checkpoint blob")->required();
  eval->add_option("--aa-accuracy", aa, "External AutoAttack accuracy");
  add_common(eval);

  auto* ablate = app.add_subcommand("ablate", "Run an ablation study");
  ablate->add_option("--config", opt.config, "Experiment config")->required();
  ablate->add_option("--study", opt.study, "fig2 | eta-sweep | lambda-sweep | two-ideas")->required();
  add_common(ablate);

  auto* theory = app.add_subcommand("theory", "Gaussian-model and Taylor-oracle studies");
  theory->add_option("--config", opt.config, "Optional config with a [theory] section");
  theory->add_option("--study", opt.study, "gaussian-sweep | taylor")->required();
  add_common(theory);

  auto* report = app.add_subcommand("report", "NRR and mean from supplied accuracies");
  report->add_option("--clean-accuracy", clean, "Clean accuracy (%)");
  report->add_option("--aa-accuracy", aa, "Robust (AutoAttack) accuracy (%)");
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : raat::kExitConfig;
  }

  for (auto* sub : app.get_subcommands()) {
    const auto given = [sub](const char* name) {
      const CLI::Option* o = sub->get_option_no_throw(name);
      return o != nullptr && o->count() > 0;
    };
    if (given("--seed")) opt.seed = seed;
    if (given("--aa-accuracy")) opt.aa_accuracy = aa;
    if (given("--clean-accuracy")) opt.clean_accuracy = clean;
  }

  if (train->parsed()) return raat::cmd_train(opt, std::cout, std::cerr);
  if (eval->parsed()) return raat::cmd_eval(opt, std::cout, std::cerr);
  if (ablate->parsed()) return raat::cmd_ablate(opt, std::cout, std::cerr);
  if (theory->parsed()) return raat::cmd_theory(opt, std::cout, std::cerr);
  return raat::cmd_report(opt, std::cout, std::cerr);
}
