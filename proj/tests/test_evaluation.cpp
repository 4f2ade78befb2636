#include "helpers.hpp"

#include "raat/evaluation.hpp"

#include <doctest.h>

#include <sstream>

using namespace raat;
using namespace raat::testing;

namespace {

Dataset planar_set(Index n, std::uint64_t seed) { return two_gaussians(n, seed, 0.15); }

}  // namespace

TEST_SUITE("evaluation") {
  TEST_CASE("trade-off metrics") {
    CHECK(std::abs(nrr(82.76, 51.65) - 63.605) < 1e-3);
    CHECK(std::abs(mean_score(82.76, 51.65) - 67.205) < 1e-3);
    CHECK(std::abs(mean_score(58.53, 25.65) - 42.09) < 1e-3);
    CHECK(nrr(40.0, 40.0) == doctest::Approx(40.0));
    CHECK(nrr(70.0, 0.0) == 0.0);
    CHECK(nrr(0.0, 0.0) == 0.0);
    CHECK(mean_score(33.0, 33.0) == 33.0);
    Rng rng(1);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int i = 0; i < 1000; ++i) {
      const double a = u(rng), b = u(rng);
      CHECK(nrr(a, b) <= mean_score(a, b) + 1e-12);
    }
    CHECK(round2(12.3456) == doctest::Approx(12.35));
  }

  TEST_CASE("constant classifier on a balanced set") {
    Classifier m(linear_architecture(2, 2));
    Dataset d = planar_set(100, 1);
    for (Index i = 0; i < 100; ++i) d.labels[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
    CHECK(accuracy(m, d) == 50.0);
  }

  TEST_CASE("zero-budget attack matches clean accuracy exactly") {
    const Classifier m = initialized(mlp_architecture(2, 2, {6}), 2);
    const Dataset d = planar_set(200, 3);
    AttackConfig cfg = linf_defaults();
    cfg.epsilon = 0.0;
    CHECK(accuracy(m, d, cfg) == accuracy(m, d));
  }

  TEST_CASE("linear robust accuracy matches the closed form") {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix w = random_batch(2, 2, rng, -3, 3);
      const Vector b = row(random_batch(1, 2, rng, -0.5, 0.5), 0);
      const Classifier m = linear_model(w, b);
      const Dataset d = planar_set(200, static_cast<std::uint64_t>(trial));
      AttackConfig cfg = linf_defaults();
      cfg.epsilon = 0.05;
      cfg.step_size = 0.02;
      Index expected = 0;
      for (Index i = 0; i < d.size(); ++i) {
        const int y = d.labels[static_cast<std::size_t>(i)];
        const Eigen::RowVector2d dw = w.row(y) - w.row(1 - y);
        const double g = dw.dot(d.inputs.row(i)) + b(y) - b(1 - y);
        // the clip to [0,1] can only shrink the usable box
        Eigen::RowVector2d corner = d.inputs.row(i);
        for (int k = 0; k < 2; ++k)
          corner(k) = std::clamp(corner(k) - cfg.epsilon * (dw(k) > 0 ? 1 : -1), 0.0, 1.0);
        const double worst = dw.dot(corner) + b(y) - b(1 - y);
        expected += g > 0 && worst > 0;
      }
      const AccuracyCount c = count_correct(m, d, cfg, 9);
      CHECK(c.correct == expected);
    }
  }

  TEST_CASE("evaluation leaves parameters alone and reports consistently") {
    const Classifier m = initialized(mlp_architecture(2, 2, {6}), 5);
    const std::uint64_t before = checksum(m.parameters());
    const Dataset d = planar_set(64, 6);
    EvalReport r = evaluate(m, d, standard_attacks(linf_defaults()), 3);
    CHECK(checksum(m.parameters()) == before);
    CHECK(r.samples == 64);
    CHECK(r.robust.size() == 3);
    double lowest = 100.0;
    for (const auto& [name, acc] : r.robust) lowest = std::min(lowest, acc);
    CHECK(r.nrr == doctest::Approx(nrr(r.clean, lowest)));
    CHECK(r.mean == doctest::Approx(mean_score(r.clean, lowest)));
    const EvalReport again = evaluate(m, d, standard_attacks(linf_defaults()), 3);
    CHECK(to_json(again) == to_json(r));
    r.aa = 10.0;
    r.finalize();
    CHECK(r.tradeoff_source == "AA");
    CHECK(r.nrr == doctest::Approx(nrr(r.clean, 10.0)));
    const nlohmann::json j = to_json(r);
    for (const char* key : {"samples", "clean_acc", "robust_acc", "aa_acc", "nrr", "mean"})
      CHECK(j.contains(key));
  }

  TEST_CASE("empty data is rejected") {
    const Classifier m(linear_architecture(2, 2));
    Dataset d = planar_set(4, 1).subset({});
    CHECK_THROWS_AS(accuracy(m, d), ValidationError);
  }

  TEST_CASE("alignment profile") {
    Rng rng(7);
    const Batch x = random_batch(8, 4, rng, 0.2, 0.8);
    const Labels y = random_labels(8, 3, rng);
    SUBCASE("endpoints vanish exactly") {
      const Classifier m = initialized(mlp_architecture(4, 3, {6, 5}), 8);
      const AlignmentProfile p = alignment_profile(m, x, y, linf_defaults(), kDefaultMuGrid, 1);
      REQUIRE(p.deviation.size() == 3);
      for (const auto& layer : p.deviation) {
        CHECK(layer.front() == 0.0);
        CHECK(layer.back() == 0.0);
        for (double v : layer) CHECK(v >= 0.0);
      }
      bool any_positive = false;
      for (const auto& layer : p.deviation) any_positive |= layer[2] > 0.0;
      CHECK(any_positive);
    }
    SUBCASE("affine networks are aligned everywhere") {
      const Classifier m = initialized(mlp_architecture(4, 3, {6}, Activation::Identity), 9);
      const AlignmentProfile p = alignment_profile(m, x, y, linf_defaults(), kDefaultMuGrid, 1);
      for (const auto& layer : p.deviation)
        for (double v : layer) CHECK(v < 1e-6);
    }
  }

  TEST_CASE("figure-2 strategies") {
    CHECK(budgets_for(Figure2Strategy::Baseline, 0.01) == SubsetBudgets{Budget::Full, Budget::Full, 0.01});
    const SubsetBudgets bz = budgets_for(Figure2Strategy::BoundaryToZero, 0.01);
    CHECK(bz.boundary == Budget::Zero);
    CHECK(bz.non_boundary == Budget::Full);
    for (Figure2Strategy s : kFigure2Strategies)
      CHECK(figure2_strategy_from_string(to_string(s)) == s);

    const Dataset train = planar_set(64, 1), test = planar_set(32, 2);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.decay_epochs = {};
    cfg.batch_size = 32;
    cfg.learning_rate = 0.05;
    cfg.attack.steps = 2;
    const Classifier init = initialized(mlp_architecture(2, 2, {8}), 1);
    std::vector<Figure2Run> runs;
    for (Figure2Strategy s : kFigure2Strategies)
      runs.push_back(figure2_protocol(cfg, init, train, test, 0.8 / 255, s));
    const auto& zero_log = runs[2].result.log;
    REQUIRE(zero_log[0].subset_budgets);
    CHECK((*zero_log[0].subset_budgets)[0] == cfg.attack.epsilon);
    CHECK((*zero_log[0].subset_budgets)[1] == 0.0);
    CHECK((*zero_log[0].subset_budgets)[2] == 0.0);
    const auto& thr_log = runs[3].result.log;
    CHECK((*thr_log[0].subset_budgets)[0] == doctest::Approx(0.8 / 255));

    // the baseline equals a direct run with full budgets
    TrainConfig direct = cfg;
    direct.subset_budgets = budgets_for(Figure2Strategy::Baseline, 0.8 / 255);
    Classifier m = init;
    const TrainResult r = fit(direct, m, train, test);
    CHECK(r.batch_losses == runs[0].result.batch_losses);

    const std::string csv = figure2_csv(runs);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,clean_acc,robust_acc,strategy");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 10);
  }
}
