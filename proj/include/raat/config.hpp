#ifndef RAAT_CONFIG_HPP
#define RAAT_CONFIG_HPP

#include "raat/data.hpp"
#include "raat/evaluation.hpp"
#include "raat/model.hpp"
#include "raat/theory.hpp"
#include "raat/trainer.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace raat {

// Config files are flat TOML-style documents:
//
//   seed = 3
//   [attack]
//   epsilon = 8/255          # fractions are allowed
//   [eval]
//   attacks = ["PGD-10", "CW"]
//
// Values are strings, booleans, numbers, fractions and flat arrays of those.
// A document starting with '{' is read as JSON instead.

nlohmann::json parse_toml_lite(const std::string& text);
std::string to_toml_lite(const nlohmann::json& document);
/// Dispatches on the first non-blank character.
nlohmann::json parse_config_text(const std::string& text);
nlohmann::json read_config_file(const std::string& path);

struct DatasetConfig {
  std::string source = "two-gaussians";  // two-gaussians | synthetic-images | cifar10
  std::string path;                      // cifar10 directory
  std::vector<int> classes{0, 1};
  int per_class = 1000;
  int test_per_class = 1000;
  Index train_size = 512;
  Index test_size = 256;
  int num_classes = 2;
  double noise = 0.1;
  AugmentationPolicy augmentation;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct ModelConfig {
  std::string architecture = "mlp";  // linear | mlp | cnn
  std::vector<int> hidden{64, 64};
  std::vector<int> channels{8, 8, 16, 16};
  int dense_units = 64;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EvalConfig {
  std::vector<std::string> attacks{"PGD-10", "PGD-100", "CW"};
  std::vector<double> mu_grid = kDefaultMuGrid;
  Index probes = 64;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct AblationConfig {
  std::vector<double> eta_values{0.05, 0.1, 0.2};
  std::vector<double> lambda_values{0.0, 0.5, 1.0, 2.0};
  double threshold = 0.8 / 255.0;

  friend bool operator==(const AblationConfig&, const AblationConfig&) = default;
};

struct TheoryConfig {
  SweepConfig sweep;
  int taylor_points = 100;
  double taylor_tolerance = 1e-10;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  AblationConfig ablation;
  TheoryConfig theory;

  /// Propagates the root seed into the sections that carry one.
  void set_seed(std::uint64_t value);
  void validate() const;
};

/// Unknown sections or keys raise ConfigError.
ExperimentConfig experiment_from_json(const nlohmann::json& document);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Train and test splits for the configured source.
std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& cfg, std::uint64_t seed);

Architecture build_architecture(const ModelConfig& cfg, const Dataset& data);

/// Named attacks from the eval section ("PGD-10", "PGD-100", "CW").
std::vector<NamedAttack> resolve_attacks(const std::vector<std::string>& names,
                                         const AttackConfig& threat);

}  // namespace raat

#endif  // RAAT_CONFIG_HPP
