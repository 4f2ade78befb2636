#include "raat/attacks.hpp"

#include <random>

namespace raat {

std::string to_string(Norm n) { return n == Norm::Linf ? "linf" : "l2"; }

std::string to_string(InnerLoss l) {
  switch (l) {
    case InnerLoss::CrossEntropy: return "ce";
    case InnerLoss::KlTrades: return "kl";
    case InnerLoss::CwMargin: return "cw";
  }
  return "ce";
}

Norm norm_from_string(const std::string& s) {
  if (s == "linf" || s == "Linf" || s == "inf") return Norm::Linf;
  if (s == "l2" || s == "L2") return Norm::L2;
  throw ConfigError("unknown norm '" + s + "'");
}

InnerLoss inner_loss_from_string(const std::string& s) {
  if (s == "ce") return InnerLoss::CrossEntropy;
  if (s == "kl") return InnerLoss::KlTrades;
  if (s == "cw") return InnerLoss::CwMargin;
  throw ConfigError("unknown inner loss '" + s + "'");
}

void AttackConfig::validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0.0) throw ConfigError("attack epsilon must be >= 0");
  if (!std::isfinite(step_size) || step_size < 0.0) {
    throw ConfigError("attack step size must be >= 0");
  }
  if (steps < 0) throw ConfigError("attack steps must be >= 0");
}

AttackConfig linf_defaults() { return {}; }

AttackConfig l2_defaults() {
  AttackConfig cfg;
  cfg.norm = Norm::L2;
  cfg.epsilon = 128.0 / 255.0;
  cfg.step_size = 32.0 / 255.0;
  return cfg;
}

AttackConfig cw_config(const AttackConfig& threat) {
  AttackConfig cfg = threat;
  cfg.steps = 30;
  cfg.inner_loss = InnerLoss::CwMargin;
  return cfg;
}

AttackConfig pgd_config(const AttackConfig& threat, int steps) {
  AttackConfig cfg = threat;
  cfg.steps = steps;
  cfg.inner_loss = InnerLoss::CrossEntropy;
  return cfg;
}

nlohmann::json to_json(const AttackConfig& cfg) {
  return {{"norm", to_string(cfg.norm)},         {"epsilon", cfg.epsilon},
          {"step_size", cfg.step_size},          {"steps", cfg.steps},
          {"random_start", cfg.random_start},    {"inner_loss", to_string(cfg.inner_loss)},
          {"clip", cfg.clip}};
}

AttackConfig attack_config_from_json(const nlohmann::json& j, AttackConfig base) {
  if (!j.is_object()) throw ConfigError("attack section must be a table");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "norm") {
        const Norm n = norm_from_string(value.get<std::string>());
        if (n != base.norm) {
          const AttackConfig preset = n == Norm::Linf ? linf_defaults() : l2_defaults();
          base.norm = n;
          base.epsilon = preset.epsilon;
          base.step_size = preset.step_size;
        }
      }
    }
    for (const auto& [key, value] : j.items()) {
      if (key == "norm") continue;
      if (key == "epsilon") base.epsilon = value.get<double>();
      else if (key == "step_size") base.step_size = value.get<double>();
      else if (key == "steps") base.steps = value.get<int>();
      else if (key == "random_start") base.random_start = value.get<bool>();
      else if (key == "inner_loss") base.inner_loss = inner_loss_from_string(value.get<std::string>());
      else if (key == "clip") base.clip = value.get<bool>();
      else throw ConfigError("unknown attack key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad attack value: ") + e.what());
  }
  base.validate();
  return base;
}

namespace {

void clip_unit(Batch& x) { x = x.cwiseMax(0.0).cwiseMin(1.0); }

}  // namespace

Batch initial_perturbation(const Batch& inputs, const AttackConfig& cfg, Rng& rng) {
  Batch delta(inputs.rows(), inputs.cols());
  if (cfg.norm == Norm::Linf) {
    std::uniform_real_distribution<double> u(-cfg.epsilon, cfg.epsilon);
    for (Index i = 0; i < delta.rows(); ++i)
      for (Index j = 0; j < delta.cols(); ++j) delta(i, j) = u(rng);
    return delta;
  }
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double dim = static_cast<double>(inputs.cols());
  for (Index i = 0; i < delta.rows(); ++i) {
    for (Index j = 0; j < delta.cols(); ++j) delta(i, j) = g(rng);
    const double length = delta.row(i).norm();
    const double radius = cfg.epsilon * std::pow(u(rng), 1.0 / dim);
    if (length > 0.0) delta.row(i) *= radius / length;
  }
  return delta;
}

namespace {

LossKind loss_kind(InnerLoss l) {
  switch (l) {
    case InnerLoss::CrossEntropy: return LossKind::CrossEntropy;
    case InnerLoss::KlTrades: return LossKind::KlToReference;
    case InnerLoss::CwMargin: return LossKind::CwMargin;
  }
  return LossKind::CrossEntropy;
}

}  // namespace

Batch pgd(const Classifier& model, const Batch& inputs, const Labels& labels,
          const AttackConfig& cfg, Rng& rng) {
  cfg.validate();
  check_inputs(model, inputs);
  const bool kl_inner = cfg.inner_loss == InnerLoss::KlTrades;
  if (!kl_inner) check_labels(model, labels, inputs.rows());
  // A zero-step attack returns the clean batch; random starts need steps >= 1.
  if (cfg.epsilon == 0.0 || cfg.steps == 0) return inputs;

  Batch reference;
  if (kl_inner) reference = forward(model, inputs).probabilities;

  Batch adv = inputs;
  if (cfg.random_start) {
    adv += initial_perturbation(inputs, cfg, rng);
    if (cfg.clip) clip_unit(adv);
  }
  const LossKind kind = loss_kind(cfg.inner_loss);
  for (int step = 0; step < cfg.steps; ++step) {
    const Batch grad = input_gradient(model, adv, labels, kind, kl_inner ? &reference : nullptr);
    if (!all_finite(grad)) throw NumericError("non-finite input gradient during attack");
    for (Index i = 0; i < adv.rows(); ++i) {
      if (cfg.norm == Norm::Linf) {
        adv.row(i) += cfg.step_size * grad.row(i).array().sign().matrix();
      } else {
        const double length = grad.row(i).norm();
        if (length > 0.0) adv.row(i) += (cfg.step_size / length) * grad.row(i);
      }
      const Eigen::RowVectorXd delta = adv.row(i) - inputs.row(i);
      adv.row(i) = inputs.row(i) + project(delta, cfg.norm, cfg.epsilon);
    }
    if (cfg.clip) clip_unit(adv);
  }
  return adv;
}

Batch reduced_pgd(const Classifier& model, const Batch& inputs, const Labels& labels,
                  const AttackConfig& cfg, double eta, Rng& rng) {
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
  AttackConfig reduced = cfg;
  reduced.epsilon = eta * cfg.epsilon;
  reduced.step_size = eta * cfg.step_size;
  return pgd(model, inputs, labels, reduced, rng);
}

Batch trades_inner(const Classifier& model, const Batch& inputs, const AttackConfig& cfg,
                   Rng& rng) {
  AttackConfig inner = cfg;
  inner.inner_loss = InnerLoss::KlTrades;
  return pgd(model, inputs, {}, inner, rng);
}

double max_perturbation(const Batch& natural, const Batch& adversarial, Norm norm) {
  if (natural.rows() != adversarial.rows() || natural.cols() != adversarial.cols()) {
    throw InputContractError("perturbation operands differ in shape");
  }
  double worst = 0.0;
  for (Index i = 0; i < natural.rows(); ++i) {
    const Eigen::RowVectorXd delta = adversarial.row(i) - natural.row(i);
    const double size = norm == Norm::Linf ? delta.cwiseAbs().maxCoeff() : delta.norm();
    worst = std::max(worst, size);
  }
  return worst;
}

}  // namespace raat
