#include "raat/losses.hpp"

#include <cmath>
#include <optional>

namespace raat {

Vector ce_gradient(const Vector& p, int y) {
  check_class(p, y);
  Vector g = Vector::Zero(p.size());
  if (p(y) > kProbabilityFloor) g(y) = -1.0 / p(y);
  return g;
}

Vector bce_gradient(const Vector& p, int y) {
  Vector g = ce_gradient(p, y);
  const Index other = runner_up(p, y);
  const double rest = 1.0 - p(other);
  if (rest > kProbabilityFloor) g(other) += 1.0 / rest;
  return g;
}

PairGradient kl_gradient(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw InputContractError("kl arguments differ in length");
  PairGradient g{Vector::Zero(p.size()), Vector::Zero(p.size())};
  for (Index k = 0; k < p.size(); ++k) {
    const double pc = std::max(p(k), kProbabilityFloor);
    const double qc = std::max(q(k), kProbabilityFloor);
    g.first(k) = std::log(pc) - std::log(qc) + (p(k) > kProbabilityFloor ? 1.0 : 0.0);
    if (q(k) > kProbabilityFloor) g.second(k) = -p(k) / q(k);
  }
  return g;
}

PairGradient js_gradient(const Vector& a, const Vector& b) {
  const Vector m = (a + b) / 2.0;
  const PairGradient ga = kl_gradient(a, m);
  const PairGradient gb = kl_gradient(b, m);
  const Vector through_mixture = (ga.second + gb.second) / 2.0;
  return {(ga.first + through_mixture) / 2.0, (gb.first + through_mixture) / 2.0};
}

double sample_beta(double gamma, Rng& rng) {
  if (!(gamma > 0.0)) throw ConfigError("Beta parameter gamma must be positive");
  std::gamma_distribution<double> draw(gamma, 1.0);
  for (;;) {
    const double a = draw(rng);
    const double b = draw(rng);
    const double sum = a + b;
    if (!(sum > 0.0)) continue;
    const double beta = a / sum;
    if (beta > 0.0 && beta < 1.0) return beta;
  }
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::PgdAt: return "PGD-AT";
    case Variant::Trades: return "TRADES";
    case Variant::Mart: return "MART";
    case Variant::ConsAt: return "Cons-AT";
    case Variant::Raat: return "RAAT";
    case Variant::RaatPlusPlus: return "RAAT++";
  }
  return "RAAT";
}

std::string to_string(MisclassifiedMode m) {
  switch (m) {
    case MisclassifiedMode::Table5Literal: return "table5-literal";
    case MisclassifiedMode::Standard: return "standard";
    case MisclassifiedMode::MmaClean: return "MMA-clean";
    case MisclassifiedMode::MartStyle: return "MART-style";
  }
  return "table5-literal";
}

std::string to_string(SupervisedBranch s) {
  return s == SupervisedBranch::RawInput ? "raw-input" : "augmented";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::PgdAt, Variant::Trades, Variant::Mart, Variant::ConsAt, Variant::Raat,
                    Variant::RaatPlusPlus}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown objective variant '" + s + "'");
}

MisclassifiedMode misclassified_mode_from_string(const std::string& s) {
  for (MisclassifiedMode m : {MisclassifiedMode::Table5Literal, MisclassifiedMode::Standard,
                              MisclassifiedMode::MmaClean, MisclassifiedMode::MartStyle}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown misclassified mode '" + s + "'");
}

SupervisedBranch supervised_branch_from_string(const std::string& s) {
  if (s == "raw-input") return SupervisedBranch::RawInput;
  if (s == "augmented") return SupervisedBranch::Augmented;
  throw ConfigError("unknown supervised branch '" + s + "'");
}

bool uses_partition(Variant v) { return v == Variant::Raat || v == Variant::RaatPlusPlus; }

bool uses_augmented_pair(Variant v) {
  return v == Variant::ConsAt || v == Variant::Raat || v == Variant::RaatPlusPlus;
}

double default_lambda(Variant v) {
  return v == Variant::Trades || v == Variant::Mart ? 6.0 : 1.0;
}

void ObjectiveConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be > 0");
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
}

namespace {

// One forward pass over a batch plus the accumulated dL/dprobabilities.
struct Pass {
  ForwardTrace trace;
  Batch probs;
  Batch dprob;
  bool active = false;

  Pass(const Classifier& model, const Batch& inputs)
      : trace(trace_forward(model, inputs)), probs(softmax(trace.logits())),
        dprob(Batch::Zero(probs.rows(), probs.cols())) {}

  Vector p(Index i) const { return probs.row(i).transpose(); }

  void add(Index i, const Vector& g, double weight) {
    if (weight == 0.0) return;
    dprob.row(i) += weight * g.transpose();
    active = true;
  }
};

void require_rows(const Batch& b, Index rows, Index cols, const char* what) {
  if (b.rows() != rows || b.cols() != cols) {
    throw ValidationError(std::string("objective input '") + what + "' has wrong shape");
  }
}

void check_masks(const PartitionMasks* masks, const Labels& labels) {
  if (masks == nullptr) throw ValidationError("RAAT variants need partition masks");
  const auto rows = static_cast<Index>(labels.size());
  if (masks->size() != rows || masks->boundary.size() != rows ||
      masks->misclassified.size() != rows ||
      static_cast<Index>(masks->reduced_prediction.size()) != rows ||
      static_cast<Index>(masks->clean_prediction.size()) != rows) {
    throw ValidationError("partition masks do not match the batch");
  }
  if (!masks->is_partition()) throw ValidationError("partition masks are not a disjoint cover");
  for (Index i = 0; i < rows; ++i) {
    const auto s = static_cast<std::size_t>(i);
    if (masks->misclassified(i) != (masks->clean_prediction[s] != labels[s])) {
      throw ValidationError("misclassified mask disagrees with the frozen prediction");
    }
  }
}

// sum(values) / n with a fixed left-to-right order.
double batch_mean(const Vector& values) {
  double total = 0.0;
  for (Index i = 0; i < values.size(); ++i) total += values(i);
  return total / static_cast<double>(values.size());
}

// KL(p(x) || p(x')) * (1 - p_y(x)) and its gradients.
double mart_kl_term(Pass& natural, Pass& adversarial, Index i, int y, double weight) {
  const Vector pn = natural.p(i);
  const Vector pa = adversarial.p(i);
  const double divergence = kl(pn, pa);
  const double scale = 1.0 - pn(y);
  const PairGradient g = kl_gradient(pn, pa);
  Vector dn = scale * g.first;
  dn(y) -= divergence;
  natural.add(i, dn, weight);
  adversarial.add(i, scale * g.second, weight);
  return divergence * scale;
}

}  // namespace

double dicar_term(const Classifier& model, const Batch& first_view, const Batch& second_view,
                  const Batch& first_adversarial, const Batch& second_adversarial,
                  const Vector& beta, const Mask& include) {
  const Index rows = first_view.rows();
  const Index d = model.input_dim();
  require_rows(first_view, rows, d, "first_view");
  require_rows(second_view, rows, d, "second_view");
  require_rows(first_adversarial, rows, d, "first_adversarial");
  require_rows(second_adversarial, rows, d, "second_adversarial");
  if (beta.size() != rows || include.size() != rows) {
    throw ValidationError("beta/include length does not match the batch");
  }
  if (include.count() == 0) return 0.0;
  Batch mixed(rows, d);
  for (Index i = 0; i < rows; ++i) {
    mixed.row(i) = beta(i) * first_adversarial.row(i) + (1.0 - beta(i)) * second_adversarial.row(i);
  }
  const Batch p_mixed = forward(model, mixed).probabilities;
  const Batch p_first = forward(model, first_view).probabilities;
  const Batch p_second = forward(model, second_view).probabilities;
  double total = 0.0;
  for (Index i = 0; i < rows; ++i) {
    if (!include(i)) continue;
    const Vector target = beta(i) * p_first.row(i).transpose() +
                          (1.0 - beta(i)) * p_second.row(i).transpose();
    total += js_consistency(p_mixed.row(i), target);
  }
  return total / static_cast<double>(include.count());
}

ObjectiveResult composite_objective(const ObjectiveConfig& cfg, const Classifier& model,
                                    const PartitionMasks* masks, const ObjectiveBatch& batch,
                                    bool want_gradient) {
  cfg.validate();
  const Labels& labels = batch.labels;
  const auto rows = static_cast<Index>(labels.size());
  if (rows == 0) throw ValidationError("empty objective batch");
  check_labels(model, labels, rows);
  const Index d = model.input_dim();
  const double inv = 1.0 / static_cast<double>(rows);
  const double lambda = cfg.lambda;
  const Variant variant = cfg.variant;
  const bool raat = uses_partition(variant);
  const bool bce_supervised =
      variant == Variant::Mart || variant == Variant::RaatPlusPlus;

  require_rows(batch.adversarial, rows, d, "adversarial");
  const bool needs_natural = variant == Variant::Trades || variant == Variant::Mart ||
                             variant == Variant::RaatPlusPlus ||
                             (raat && (cfg.misclassified_mode == MisclassifiedMode::MmaClean ||
                                       cfg.misclassified_mode == MisclassifiedMode::MartStyle));
  if (needs_natural) require_rows(batch.natural, rows, d, "natural");
  if (uses_augmented_pair(variant)) {
    require_rows(batch.first_adversarial, rows, d, "first_adversarial");
    require_rows(batch.second_adversarial, rows, d, "second_adversarial");
  }
  if (raat) {
    check_masks(masks, labels);
    require_rows(batch.first_view, rows, d, "first_view");
    require_rows(batch.second_view, rows, d, "second_view");
    if (batch.beta.size() != rows) throw ValidationError("beta length does not match the batch");
  }

  // Supervised branch: choose the input row per example.
  enum class Source { Adversarial, Reduced, Natural };
  std::vector<Source> source(static_cast<std::size_t>(rows), Source::Adversarial);
  if (variant == Variant::Trades) {
    std::fill(source.begin(), source.end(), Source::Natural);
  } else if (raat) {
    for (Index i = 0; i < rows; ++i) {
      const auto s = static_cast<std::size_t>(i);
      if (masks->misclassified(i) && cfg.misclassified_mode != MisclassifiedMode::Table5Literal) {
        source[s] = cfg.misclassified_mode == MisclassifiedMode::MmaClean ? Source::Natural
                                                                          : Source::Adversarial;
      } else if (cfg.boundary_reduction && masks->reduced_prediction[s] != labels[s]) {
        source[s] = Source::Reduced;
      }
    }
    const bool any_reduced = std::any_of(source.begin(), source.end(),
                                         [](Source s) { return s == Source::Reduced; });
    if (any_reduced) require_rows(masks->reduced, rows, d, "reduced");
  }

  const bool all_adversarial = std::all_of(source.begin(), source.end(),
                                           [](Source s) { return s == Source::Adversarial; });
  const bool all_natural = std::all_of(source.begin(), source.end(),
                                       [](Source s) { return s == Source::Natural; });
  Batch selected;
  const Batch* supervised_inputs = &batch.adversarial;
  if (all_natural) {
    supervised_inputs = &batch.natural;
  } else if (!all_adversarial) {
    selected.resize(rows, d);
    for (Index i = 0; i < rows; ++i) {
      switch (source[static_cast<std::size_t>(i)]) {
        case Source::Adversarial: selected.row(i) = batch.adversarial.row(i); break;
        case Source::Reduced: selected.row(i) = masks->reduced.row(i); break;
        case Source::Natural: selected.row(i) = batch.natural.row(i); break;
      }
    }
    supervised_inputs = &selected;
  }

  Vector supervised = Vector::Zero(rows);
  Vector regularizer = Vector::Zero(rows);
  Vector dicar = Vector::Zero(rows);

  Pass sup(model, *supervised_inputs);
  for (Index i = 0; i < rows; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const Vector p = sup.p(i);
    supervised(i) = bce_supervised ? bce(p, y) : ce(p, y);
    sup.add(i, bce_supervised ? bce_gradient(p, y) : ce_gradient(p, y), inv);
  }

  std::optional<Pass> natural;
  std::optional<Pass> adversarial;
  std::optional<Pass> first_adv;
  std::optional<Pass> second_adv;
  std::optional<Pass> first_view;
  std::optional<Pass> second_view;
  std::optional<Pass> mixed;
  const double reg_weight = lambda * inv;

  auto natural_pass = [&]() -> Pass& {
    if (variant == Variant::Trades) return sup;
    if (!natural) natural.emplace(model, batch.natural);
    return *natural;
  };
  auto adversarial_pass = [&]() -> Pass& {
    if (variant == Variant::Mart) return sup;
    if (!adversarial) adversarial.emplace(model, batch.adversarial);
    return *adversarial;
  };

  switch (variant) {
    case Variant::PgdAt: break;
    case Variant::Trades: {
      Pass& nat = natural_pass();
      Pass& adv = adversarial_pass();
      for (Index i = 0; i < rows; ++i) {
        const Vector pn = nat.p(i), pa = adv.p(i);
        regularizer(i) = kl(pn, pa);
        const PairGradient g = kl_gradient(pn, pa);
        nat.add(i, g.first, reg_weight);
        adv.add(i, g.second, reg_weight);
      }
      break;
    }
    case Variant::Mart: {
      Pass& nat = natural_pass();
      Pass& adv = adversarial_pass();
      for (Index i = 0; i < rows; ++i) {
        regularizer(i) = mart_kl_term(nat, adv, i, labels[static_cast<std::size_t>(i)], reg_weight);
      }
      break;
    }
    case Variant::ConsAt: {
      first_adv.emplace(model, batch.first_adversarial);
      second_adv.emplace(model, batch.second_adversarial);
      for (Index i = 0; i < rows; ++i) {
        const Vector a = first_adv->p(i), b = second_adv->p(i);
        regularizer(i) = js_consistency(a, b);
        const PairGradient g = js_gradient(a, b);
        first_adv->add(i, g.first, reg_weight);
        second_adv->add(i, g.second, reg_weight);
      }
      break;
    }
    case Variant::Raat:
    case Variant::RaatPlusPlus: {
      Batch interpolated(rows, d);
      for (Index i = 0; i < rows; ++i) {
        interpolated.row(i) = batch.beta(i) * batch.first_adversarial.row(i) +
                              (1.0 - batch.beta(i)) * batch.second_adversarial.row(i);
      }
      mixed.emplace(model, interpolated);
      first_view.emplace(model, batch.first_view);
      second_view.emplace(model, batch.second_view);
      for (Index i = 0; i < rows; ++i) {
        if (masks->misclassified(i)) continue;
        const double beta = batch.beta(i);
        const Vector target = beta * first_view->p(i) + (1.0 - beta) * second_view->p(i);
        const Vector pm = mixed->p(i);
        dicar(i) = js_consistency(pm, target);
        const PairGradient g = js_gradient(pm, target);
        mixed->add(i, g.first, reg_weight);
        first_view->add(i, beta * g.second, reg_weight);
        second_view->add(i, (1.0 - beta) * g.second, reg_weight);
      }
      regularizer = dicar;
      const bool mart_rows = cfg.misclassified_mode == MisclassifiedMode::MartStyle;
      if (variant == Variant::RaatPlusPlus || mart_rows) {
        Pass& nat = natural_pass();
        Pass& adv = adversarial_pass();
        for (Index i = 0; i < rows; ++i) {
          if (variant == Variant::Raat && !masks->misclassified(i)) continue;
          regularizer(i) +=
              mart_kl_term(nat, adv, i, labels[static_cast<std::size_t>(i)], reg_weight);
        }
      }
      break;
    }
  }

  ObjectiveResult result;
  BatchLossReport& report = result.report;
  report.supervised = batch_mean(supervised);
  report.regularizer = batch_mean(regularizer);
  report.dicar = batch_mean(dicar);
  report.total = report.supervised + lambda * report.regularizer;
  if (!std::isfinite(report.total)) throw NumericError("objective is not finite");
  if (raat) {
    SubsetContributions c;
    for (Index i = 0; i < rows; ++i) {
      const double share = (supervised(i) + lambda * regularizer(i)) * inv;
      if (masks->non_boundary(i)) c.non_boundary += share;
      else if (masks->boundary(i)) c.boundary += share;
      else c.misclassified += share;
    }
    report.subsets = c;
  }

  if (want_gradient) {
    result.gradient = Vector::Zero(model.parameter_count());
    auto accumulate = [&](Pass& pass) {
      if (!pass.active) return;
      const Batch dz = softmax_backward(pass.probs, pass.dprob);
      result.gradient += backward(model, pass.trace, dz, true, false).parameters;
    };
    accumulate(sup);
    for (auto* pass : {&natural, &adversarial, &first_adv, &second_adv, &first_view, &second_view,
                       &mixed}) {
      if (*pass) accumulate(**pass);
    }
    if (!all_finite(result.gradient)) throw NumericError("objective gradient is not finite");
  }
  return result;
}

}  // namespace raat
