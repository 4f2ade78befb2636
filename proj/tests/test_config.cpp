#include "helpers.hpp"

#include "raat/checkpoint.hpp"
#include "raat/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace raat;
using namespace raat::testing;
using nlohmann::json;

namespace {

const char* kDocument = R"(# experiment
seed = 3

[dataset]
source = "two-gaussians"
train_size = 64
test_size = 32

[model]
architecture = "mlp"
hidden = [8, 4]

[train]
epochs = 2
decay_epochs = [1]
learning_rate = 0.05

[objective]
variant = "TRADES"

[attack]
epsilon = 8/255   # fraction
steps = 3

[eval]
attacks = ["PGD-10", "CW"]
)";

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("toml-lite values") {
    const json j = parse_toml_lite(kDocument);
    CHECK(j["seed"] == 3);
    CHECK(j["attack"]["epsilon"].get<double>() == doctest::Approx(8.0 / 255));
    CHECK(j["model"]["hidden"] == json::array({8, 4}));
    CHECK(j["eval"]["attacks"][1] == "CW");
    CHECK(parse_toml_lite("a = true\nb = -1.5e-3\n") == json{{"a", true}, {"b", -1.5e-3}});
  }

  TEST_CASE("toml-lite errors") {
    CHECK_THROWS_AS(parse_toml_lite("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_toml_lite("a = \n"), ConfigError);
    CHECK_THROWS_AS(parse_toml_lite("[open\n"), ConfigError);
    CHECK_THROWS_AS(parse_toml_lite("a = \"unterminated\n"), ConfigError);
    CHECK_THROWS_AS(parse_toml_lite("a = 1/0\n"), ConfigError);
  }

  TEST_CASE("experiment parsing") {
    const ExperimentConfig cfg = experiment_from_json(parse_config_text(kDocument));
    CHECK(cfg.seed == 3);
    CHECK(cfg.train.seed == 3);
    CHECK(cfg.train.objective.variant == Variant::Trades);
    CHECK(cfg.train.objective.lambda == 6.0);
    CHECK(cfg.train.attack.steps == 3);
    CHECK(cfg.model.hidden == std::vector<int>{8, 4});
    CHECK(cfg.eval.attacks == std::vector<std::string>{"PGD-10", "CW"});
  }

  TEST_CASE("json documents are accepted") {
    const ExperimentConfig a = experiment_from_json(parse_config_text(kDocument));
    const ExperimentConfig b = experiment_from_json(parse_config_text(to_json(a).dump()));
    CHECK(to_json(a) == to_json(b));
  }

  TEST_CASE("round trip through the text format") {
    const ExperimentConfig a = experiment_from_json(parse_config_text(kDocument));
    const std::string text = to_toml_lite(to_json(a));
    const ExperimentConfig b = experiment_from_json(parse_toml_lite(text));
    CHECK(to_json(a) == to_json(b));
    CHECK(to_toml_lite(to_json(b)) == text);
    CHECK(b.train == a.train);
    CHECK(b.dataset == a.dataset);
  }

  TEST_CASE("unknown keys and bad values") {
    CHECK_THROWS_AS(experiment_from_json(parse_toml_lite("bogus = 1\n")), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(parse_toml_lite("[train]\nbogus = 1\n")), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(parse_toml_lite("[objective]\nvariant = \"X\"\n")),
                    ConfigError);
    CHECK_THROWS_AS(experiment_from_json(parse_toml_lite("[objective]\neta = 1.5\n")), Error);
    CHECK_THROWS_AS(experiment_from_json(parse_toml_lite("[train]\nepochs = 0\n")), ConfigError);
    CHECK_THROWS_AS(experiment_from_json(parse_toml_lite("[eval]\nattacks = [\"AA\"]\n")),
                    ConfigError);
  }

  TEST_CASE("datasets and architectures") {
    ExperimentConfig cfg = experiment_from_json(parse_config_text(kDocument));
    const auto [train, test] = load_datasets(cfg.dataset, cfg.seed);
    CHECK(train.size() == 64);
    CHECK(test.size() == 32);
    CHECK(train.inputs != test.inputs.topRows(32));
    const Architecture arch = build_architecture(cfg.model, train);
    CHECK(arch.input_dim() == 2);
    CHECK(arch.layers.size() == 3);
    DatasetConfig missing;
    missing.source = "cifar10";
    missing.path = "/nonexistent/cifar";
    CHECK_THROWS(load_datasets(missing, 0));
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save and load") {
    const auto dir = std::filesystem::temp_directory_path() / "raat_test_ckpt";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "m.ckpt").string();
    const Classifier m = initialized(mlp_architecture(3, 2, {4}), 1);
    CheckpointMeta meta;
    meta.epoch = 4;
    meta.seed = 9;
    meta.variant = "RAAT";
    meta.metrics = {{"clean_acc", 90.0}};
    save_checkpoint(path, m, meta);
    const LoadedCheckpoint loaded = load_checkpoint(path);
    CHECK(loaded.model.parameters() == m.parameters());
    CHECK(loaded.model.architecture() == m.architecture());
    CHECK(loaded.meta.epoch == 4);
    CHECK(loaded.meta.variant == "RAAT");
    CHECK(loaded.meta.checksum == checksum(m.parameters()));

    std::string blob;
    {
      std::ifstream in(path, std::ios::binary);
      blob.assign(std::istreambuf_iterator<char>(in), {});
    }
    CHECK(blob.rfind("RAATCKPT", 0) == 0);
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << blob.substr(0, blob.size() - 5);
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    {
      std::string flipped = blob;
      flipped[flipped.size() - 1] = static_cast<char>(flipped.back() ^ 1);
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << flipped;
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      out << "NOTACKPT" << blob.substr(8);
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    CHECK_THROWS_AS(load_checkpoint((dir / "missing.ckpt").string()), FormatError);
    std::filesystem::remove_all(dir);
  }
}
