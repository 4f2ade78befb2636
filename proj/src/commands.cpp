#include "raat/commands.hpp"

#include "raat/checkpoint.hpp"
#include "raat/config.hpp"
#include "raat/evaluation.hpp"
#include "raat/theory.hpp"
#include "raat/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace raat {

namespace fs = std::filesystem;
using nlohmann::json;

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

namespace {

ExperimentConfig load_experiment(const CommandOptions& opt, bool required) {
  ExperimentConfig cfg;
  if (!opt.config.empty()) {
    cfg = experiment_from_json(read_config_file(opt.config));
  } else if (required) {
    throw ConfigError("--config is required");
  }
  if (opt.seed) cfg.set_seed(*opt.seed);
  return cfg;
}

fs::path prepare_out(const CommandOptions& opt) {
  const fs::path out = opt.out.empty() ? fs::path("out") : fs::path(opt.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw ConfigError("cannot create output directory " + out.string());
  return out;
}

Classifier initial_model(const ExperimentConfig& cfg, const Dataset& train) {
  Classifier model(build_architecture(cfg.model, train));
  Rng rng = substream(cfg.seed, "init");
  model.initialize(rng);
  return model;
}

json report_json(const ExperimentConfig& cfg, const Classifier& model, const Dataset& test,
                 std::optional<double> aa) {
  const EvalReport report =
      evaluate(model, test, resolve_attacks(cfg.eval.attacks, cfg.train.attack), cfg.seed, aa);
  json j = to_json(report);
  const Index probes = std::min(cfg.eval.probes, test.size());
  const Batch x = test.inputs.topRows(probes);
  const Labels y(test.labels.begin(), test.labels.begin() + probes);
  j["alignment"] = to_json(
      alignment_profile(model, x, y, pgd_config(cfg.train.attack, 10), cfg.eval.mu_grid, cfg.seed));
  return j;
}

std::string number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::string run_summary(const TrainResult& r) {
  const EpochRecord& last = r.log.back();
  return std::to_string(r.best.epoch) + ',' + number(r.best.clean_acc) + ',' +
         number(r.best.pgd10_acc) + ',' + number(last.clean_acc) + ',' + number(last.pgd10_acc);
}

constexpr const char* kSummaryColumns =
    "best_epoch,best_clean_acc,best_pgd10_acc,final_clean_acc,final_pgd10_acc";

TrainConfig partitioned(TrainConfig t) {
  if (!uses_partition(t.objective.variant)) {
    t.objective.variant = Variant::Raat;
    t.objective.lambda = default_lambda(Variant::Raat);
  }
  return t;
}

}  // namespace

int cmd_train(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        ExperimentConfig cfg = load_experiment(opt, true);
        const auto [train, test] = load_datasets(cfg.dataset, cfg.seed);
        Classifier model = initial_model(cfg, train);
        const fs::path dir = prepare_out(opt);
        write_file_atomic((dir / "config.toml").string(), to_toml_lite(to_json(cfg)));

        TrainConfig tc = cfg.train;
        tc.checkpoint_dir = (dir / "checkpoints").string();
        std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
        std::ofstream partition_log;
        TrainHooks hooks;
        hooks.on_epoch = [&](const EpochRecord& r) {
          log << to_json(r).dump() << '\n' << std::flush;
          out << "epoch " << r.epoch << " loss " << r.train_loss << " clean " << r.clean_acc
              << " pgd10 " << r.pgd10_acc << '\n';
        };
        if (uses_partition(tc.objective.variant)) {
          partition_log.open(dir / "partition_log.jsonl", std::ios::trunc);
          hooks.on_partition = [&](int epoch, int batch, const SubsetCounts& c) {
            partition_log << json{{"epoch", epoch},
                                  {"batch", batch},
                                  {"non_boundary", c.non_boundary},
                                  {"boundary", c.boundary},
                                  {"misclassified", c.misclassified}}
                                 .dump()
                          << '\n';
          };
        }
        const TrainResult result = fit(tc, model, train, test, hooks);

        CheckpointMeta meta;
        meta.epoch = tc.epochs - 1;
        meta.seed = cfg.seed;
        meta.variant = to_string(tc.objective.variant);
        meta.metrics = {{"clean_acc", result.log.back().clean_acc},
                        {"pgd10_acc", result.log.back().pgd10_acc}};
        save_checkpoint((dir / "final.ckpt").string(), model, meta);
        if (result.ema_parameters) {
          Classifier ema = model;
          ema.set_parameters(*result.ema_parameters);
          save_checkpoint((dir / "ema.ckpt").string(), ema, meta);
        }

        Classifier best = model;
        best.set_parameters(result.best.parameters);
        json report = report_json(cfg, best, test, opt.aa_accuracy);
        report["best_epoch"] = result.best.epoch;
        write_file_atomic((dir / "eval_report.json").string(), report.dump(2) + "\n");
        out << "best epoch " << result.best.epoch << " pgd10 " << result.best.pgd10_acc << '\n';
        return kExitOk;
      },
      err);
}

int cmd_eval(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        if (opt.checkpoint.empty()) throw ConfigError("--checkpoint is required");
        LoadedCheckpoint loaded = load_checkpoint(opt.checkpoint);
        ExperimentConfig cfg = load_experiment(opt, true);
        const auto [train, test] = load_datasets(cfg.dataset, cfg.seed);
        if (!(build_architecture(cfg.model, train) == loaded.model.architecture())) {
          throw ConfigError("checkpoint architecture does not match the config");
        }
        const fs::path dir = prepare_out(opt);
        json report = report_json(cfg, loaded.model, test, opt.aa_accuracy);
        report["checkpoint_epoch"] = loaded.meta.epoch;
        write_file_atomic((dir / "eval_report.json").string(), report.dump(2) + "\n");
        out << report.dump(2) << '\n';
        return kExitOk;
      },
      err);
}

int cmd_ablate(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const std::string& study = opt.study;
        if (study != "fig2" && study != "eta-sweep" && study != "lambda-sweep" &&
            study != "two-ideas") {
          throw ConfigError("unknown ablation study '" + study + "'");
        }
        ExperimentConfig cfg = load_experiment(opt, true);
        const auto [train, test] = load_datasets(cfg.dataset, cfg.seed);
        const Classifier initial = initial_model(cfg, train);
        const fs::path dir = prepare_out(opt);
        std::ostringstream csv;

        const auto run = [&](const TrainConfig& t) {
          Classifier model = initial;
          return fit(t, model, train, test);
        };

        if (study == "fig2") {
          std::vector<Figure2Run> runs;
          for (Figure2Strategy s : kFigure2Strategies) {
            runs.push_back(figure2_protocol(cfg.train, initial, train, test, cfg.ablation.threshold, s));
            out << to_string(s) << " done\n";
          }
          csv << figure2_csv(runs);
        } else if (study == "eta-sweep") {
          csv << "eta," << kSummaryColumns << '\n';
          for (double eta : cfg.ablation.eta_values) {
            TrainConfig t = partitioned(cfg.train);
            t.objective.eta = eta;
            csv << number(eta) << ',' << run_summary(run(t)) << '\n';
            out << "eta " << eta << " done\n";
          }
        } else if (study == "lambda-sweep") {
          csv << "lambda," << kSummaryColumns << '\n';
          for (double lambda : cfg.ablation.lambda_values) {
            TrainConfig t = partitioned(cfg.train);
            t.objective.lambda = lambda;
            csv << number(lambda) << ',' << run_summary(run(t)) << '\n';
            out << "lambda " << lambda << " done\n";
          }
        } else {
          const TrainConfig base = partitioned(cfg.train);
          const double lambda = base.objective.lambda > 0.0 ? base.objective.lambda : 1.0;
          struct Arm {
            const char* name;
            bool bound;
            bool dicar;
          };
          csv << "arm,boundary_reduction,lambda," << kSummaryColumns << '\n';
          for (const Arm arm : {Arm{"neither", false, false}, Arm{"bound-only", true, false},
                                Arm{"dicar-only", false, true}, Arm{"both", true, true}}) {
            TrainConfig t = base;
            t.objective.boundary_reduction = arm.bound;
            t.objective.lambda = arm.dicar ? lambda : 0.0;
            csv << arm.name << ',' << (arm.bound ? "true" : "false") << ','
                << number(t.objective.lambda) << ',' << run_summary(run(t)) << '\n';
            out << arm.name << " done\n";
          }
        }
        write_file_atomic((dir / (study + ".csv")).string(), csv.str());
        return kExitOk;
      },
      err);
}

int cmd_theory(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        if (opt.study != "gaussian-sweep" && opt.study != "taylor") {
          throw ConfigError("unknown theory study '" + opt.study + "'");
        }
        ExperimentConfig cfg = load_experiment(opt, false);
        const fs::path dir = prepare_out(opt);
        if (opt.study == "gaussian-sweep") {
          const std::string csv = sweep_csv(complexity_sweep(cfg.theory.sweep));
          write_file_atomic((dir / "gaussian_sweep.csv").string(), csv);
          out << csv;
          return kExitOk;
        }
        const auto cases = taylor_suite(cfg.seed, cfg.theory.taylor_points);
        std::ostringstream csv;
        csv << "case,points,max_abs_diff\n";
        double worst = 0.0;
        for (const auto& c : cases) {
          csv << c.name << ',' << c.points << ',' << number(c.max_abs_diff) << '\n';
          worst = std::max(worst, c.max_abs_diff);
        }
        write_file_atomic((dir / "taylor.csv").string(), csv.str());
        out << csv.str() << "max |lhs - rhs| = " << worst << '\n';
        if (worst > cfg.theory.taylor_tolerance) {
          err << "taylor oracle exceeded tolerance " << cfg.theory.taylor_tolerance << '\n';
          return kExitNumeric;
        }
        return kExitOk;
      },
      err);
}

int cmd_report(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(
      [&] {
        const fs::path dir = opt.out.empty() ? fs::path("out") : fs::path(opt.out);
        EvalReport report;
        if (opt.clean_accuracy) {
          report.clean = *opt.clean_accuracy;
        } else {
          const fs::path existing = dir / "eval_report.json";
          std::ifstream in(existing);
          if (!in) throw ConfigError("need --clean-accuracy or " + existing.string());
          const json j = json::parse(in);
          report.clean = j.at("clean_acc").get<double>();
          report.robust = j.at("robust_acc").get<std::map<std::string, double>>();
        }
        report.aa = opt.aa_accuracy;
        if (!report.aa && report.robust.empty()) {
          throw ConfigError("need --aa-accuracy or an eval report with robust accuracies");
        }
        for (double v : {report.clean, report.aa.value_or(0.0)}) {
          if (!(v >= 0.0 && v <= 100.0)) throw ConfigError("accuracies must lie in [0, 100]");
        }
        report.finalize();
        const json j = to_json(report);
        prepare_out(opt);
        write_file_atomic((dir / "tradeoff.json").string(), j.dump(2) + "\n");
        out << j.dump(2) << '\n';
        return kExitOk;
      },
      err);
}

}  // namespace raat
