#include "helpers.hpp"

#include "raat/checkpoint.hpp"
#include "raat/data.hpp"
#include "raat/trainer.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>

using namespace raat;
using namespace raat::testing;

namespace {

TrainConfig quick(Variant v) {
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 32;
  c.learning_rate = 0.05;
  c.decay_epochs = {2};
  c.seed = 17;
  c.objective.variant = v;
  c.objective.lambda = default_lambda(v);
  c.attack.steps = 3;
  c.attack.step_size = 4.0 / 255;
  return c;
}

struct Run {
  TrainResult result;
  Vector parameters;
};

Run run(const TrainConfig& cfg, const Dataset& train, const Dataset& test, std::uint64_t init = 3) {
  Classifier m = initialized(mlp_architecture(2, 2, {8}), init);
  TrainResult r = fit(cfg, m, train, test);
  return {std::move(r), m.parameters()};
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("sgd step by hand") {
    Vector p(2), g(2), buf = Vector::Zero(2);
    p << 1.0, -2.0;
    g << 0.5, 0.5;
    Vector q = p;
    sgd_step(q, g, buf, 0.0, 0.9, 5e-4);
    CHECK(q == p);

    q = p;
    buf.setZero();
    sgd_step(q, Vector::Zero(2), buf, 0.1, 0.9, 0.01);
    CHECK(q(0) == doctest::Approx(1.0 * (1 - 0.1 * 0.01)).epsilon(1e-15));
    CHECK(q(1) == doctest::Approx(-2.0 * (1 - 0.1 * 0.01)).epsilon(1e-15));

    q = p;
    buf.setZero();
    sgd_step(q, g, buf, 0.1, 0.9, 0.0);
    const Vector after_first = q;
    sgd_step(q, g, buf, 0.1, 0.9, 0.0);
    CHECK((after_first - q)(0) == doctest::Approx(0.1 * 0.5 * 1.9).epsilon(1e-12));

    Vector bad = g;
    bad(0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(sgd_step(q, bad, buf, 0.1, 0.9, 0.0), NumericError);
  }

  TEST_CASE("learning-rate schedule") {
    const TrainConfig paper = paper_schedule();
    CHECK(paper.epochs == 110);
    CHECK(lr_at(0, paper) == doctest::Approx(0.1));
    CHECK(lr_at(99, paper) == doctest::Approx(0.1));
    CHECK(lr_at(100, paper) == doctest::Approx(0.01));
    CHECK(lr_at(104, paper) == doctest::Approx(0.01));
    CHECK(lr_at(105, paper) == doctest::Approx(0.001));
    const TrainConfig desk;
    CHECK(lr_at(7, desk) == doctest::Approx(0.1));
    CHECK(lr_at(8, desk) == doctest::Approx(0.01));
    CHECK(lr_at(9, desk) == doctest::Approx(0.001));
  }

  TEST_CASE("ema update by hand") {
    Vector avg = Vector::Zero(2), p = Vector::Constant(2, 2.0);
    ema_update(avg, p, 0.5);
    CHECK(avg(0) == 1.0);
    ema_update(avg, p, 1.0);
    CHECK(avg(0) == 1.0);
    ema_update(avg, p, 0.0);
    CHECK(avg == p);
  }

  TEST_CASE("config validation") {
    TrainConfig c;
    c.decay_epochs = {10};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.learning_rate = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("degenerate RAAT reduces to clean training bitwise") {
    const Dataset train = two_gaussians(96, 1), test = two_gaussians(40, 2);
    TrainConfig raat = quick(Variant::Raat);
    raat.epochs = 1;
    raat.decay_epochs = {};
    raat.attack.steps = 0;
    raat.objective.lambda = 0.0;
    TrainConfig clean = raat;
    clean.objective.variant = Variant::PgdAt;
    const Run a = run(raat, train, test);
    const Run b = run(clean, train, test);
    CHECK(same_bits(a.result.batch_losses, b.result.batch_losses));
    CHECK(a.parameters == b.parameters);
  }

  TEST_CASE("identical seeds give identical runs") {
    const Dataset train = two_gaussians(96, 1), test = two_gaussians(40, 2);
    for (Variant v : {Variant::PgdAt, Variant::Trades, Variant::Mart, Variant::ConsAt, Variant::Raat,
                      Variant::RaatPlusPlus}) {
      CAPTURE(to_string(v));
      const TrainConfig cfg = quick(v);
      const Run a = run(cfg, train, test);
      const Run b = run(cfg, train, test);
      CHECK(same_bits(a.result.batch_losses, b.result.batch_losses));
      CHECK(a.parameters == b.parameters);
      CHECK(all_finite(a.parameters));
      REQUIRE(a.result.log.size() == 3);
      for (std::size_t e = 0; e < 3; ++e) {
        CHECK(nlohmann::json(to_json(a.result.log[e])) == nlohmann::json(to_json(b.result.log[e])));
      }
      CHECK(a.result.log[0].subset_counts.has_value() == uses_partition(v));
    }
  }

  TEST_CASE("different seeds give different runs") {
    const Dataset train = two_gaussians(96, 1), test = two_gaussians(40, 2);
    TrainConfig cfg = quick(Variant::Raat);
    const Run a = run(cfg, train, test);
    cfg.seed = 18;
    const Run b = run(cfg, train, test);
    CHECK(!same_bits(a.result.batch_losses, b.result.batch_losses));
  }

  TEST_CASE("EMA does not touch the training trace") {
    const Dataset train = two_gaussians(96, 1), test = two_gaussians(40, 2);
    TrainConfig cfg = quick(Variant::Raat);
    const Run plain = run(cfg, train, test);
    cfg.ema = true;
    cfg.ema_decay = 0.9;
    const Run averaged = run(cfg, train, test);
    CHECK(same_bits(plain.result.batch_losses, averaged.result.batch_losses));
    CHECK(plain.parameters == averaged.parameters);
    REQUIRE(averaged.result.ema_parameters);
    CHECK(*averaged.result.ema_parameters != averaged.parameters);
    CHECK(!plain.result.ema_parameters);
  }

  TEST_CASE("best checkpoint is the first maximum of the robust series") {
    const Dataset train = two_gaussians(128, 4), test = two_gaussians(64, 5);
    TrainConfig cfg = quick(Variant::PgdAt);
    cfg.epochs = 5;
    cfg.decay_epochs = {4};
    const Run r = run(cfg, train, test);
    int best = 0;
    for (std::size_t e = 1; e < r.result.log.size(); ++e)
      if (r.result.log[e].pgd10_acc > r.result.log[static_cast<std::size_t>(best)].pgd10_acc)
        best = static_cast<int>(e);
    CHECK(r.result.best.epoch == best);
    CHECK(r.result.best.pgd10_acc == r.result.log[static_cast<std::size_t>(best)].pgd10_acc);
    CHECK(r.result.final_parameters == r.parameters);
    for (const EpochRecord& rec : r.result.log) {
      CHECK(rec.clean_acc >= 0.0);
      CHECK(rec.clean_acc <= 100.0);
      CHECK(rec.lr == doctest::Approx(lr_at(rec.epoch, cfg)));
    }
  }

  TEST_CASE("checkpoints on disk") {
    const auto dir = std::filesystem::temp_directory_path() / "raat_test_trainer_ckpt";
    std::filesystem::remove_all(dir);
    const Dataset train = two_gaussians(64, 1), test = two_gaussians(32, 2);
    TrainConfig cfg = quick(Variant::Raat);
    cfg.checkpoint_dir = dir.string();
    const Run r = run(cfg, train, test);
    const LoadedCheckpoint latest = load_checkpoint((dir / "latest.ckpt").string());
    CHECK(latest.model.parameters() == r.parameters);
    CHECK(latest.meta.epoch == 2);
    const LoadedCheckpoint best = load_checkpoint((dir / "best.ckpt").string());
    CHECK(best.model.parameters() == r.result.best.parameters);
    CHECK(best.meta.epoch == r.result.best.epoch);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("image training with paired augmentations is reproducible") {
    const Dataset train = synthetic_images(24, 2, 1), test = synthetic_images(8, 2, 2);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.decay_epochs = {};
    cfg.batch_size = 12;
    cfg.learning_rate = 0.01;
    cfg.attack.steps = 1;
    cfg.seed = 5;
    for (Variant v : {Variant::Raat, Variant::ConsAt}) {
      cfg.objective.variant = v;
      Classifier a = initialized(cnn_architecture(2, {2, 2, 2, 2}, 4), 1);
      Classifier b = a;
      const TrainResult ra = fit(cfg, a, train, test);
      const TrainResult rb = fit(cfg, b, train, test);
      CHECK(same_bits(ra.batch_losses, rb.batch_losses));
      CHECK(a.parameters() == b.parameters());
    }
  }

  TEST_CASE("partition hook sees every batch") {
    const Dataset train = two_gaussians(64, 1), test = two_gaussians(32, 2);
    TrainConfig cfg = quick(Variant::Raat);
    Classifier m = initialized(mlp_architecture(2, 2, {8}), 3);
    int calls = 0;
    Index seen = 0;
    TrainHooks hooks;
    hooks.on_partition = [&](int, int, const SubsetCounts& c) {
      ++calls;
      seen += c.non_boundary + c.boundary + c.misclassified;
    };
    fit(cfg, m, train, test, hooks);
    CHECK(calls == 3 * 2);
    CHECK(seen == 3 * 64);
  }

  TEST_CASE("mismatched data is rejected") {
    Classifier m = initialized(mlp_architecture(3, 2, {4}), 1);
    const Dataset d = two_gaussians(16, 1);
    CHECK_THROWS_AS(fit(quick(Variant::PgdAt), m, d, d), InputContractError);
  }
}
