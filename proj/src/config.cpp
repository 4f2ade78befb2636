#include "raat/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

namespace raat {

namespace {

using nlohmann::json;

struct Cursor {
  const std::string& line;
  std::size_t pos = 0;
  int number;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(number) + ": " + what);
  }
  void skip_space() {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
  }
  bool done() {
    skip_space();
    return pos >= line.size() || line[pos] == '#';
  }
  char peek() {
    skip_space();
    return pos < line.size() ? line[pos] : '\0';
  }
};

json parse_number(Cursor& c) {
  const std::size_t start = c.pos;
  while (c.pos < c.line.size() &&
         (std::isalnum(static_cast<unsigned char>(c.line[c.pos])) || c.line[c.pos] == '.' ||
          c.line[c.pos] == '+' || c.line[c.pos] == '-' || c.line[c.pos] == '/' ||
          c.line[c.pos] == '_')) {
    ++c.pos;
  }
  const std::string token = c.line.substr(start, c.pos - start);
  if (token == "true") return true;
  if (token == "false") return false;
  const auto to_double = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) c.fail("bad number '" + token + "'");
    return v;
  };
  const auto slash = token.find('/');
  if (slash != std::string::npos) {
    const double den = to_double(token.substr(slash + 1));
    if (den == 0.0) c.fail("zero denominator in '" + token + "'");
    return to_double(token.substr(0, slash)) / den;
  }
  if (token.find_first_of(".eEn") != std::string::npos) return to_double(token);
  char* end = nullptr;
  const long long v = std::strtoll(token.c_str(), &end, 10);
  if (token.empty() || end != token.c_str() + token.size()) c.fail("bad value '" + token + "'");
  return v;
}

json parse_value(Cursor& c, bool allow_array) {
  const char first = c.peek();
  if (first == '"') {
    std::string out;
    ++c.pos;
    while (c.pos < c.line.size() && c.line[c.pos] != '"') {
      if (c.line[c.pos] == '\\' && c.pos + 1 < c.line.size()) ++c.pos;
      out += c.line[c.pos++];
    }
    if (c.pos >= c.line.size()) c.fail("unterminated string");
    ++c.pos;
    return out;
  }
  if (first == '[') {
    if (!allow_array) c.fail("nested arrays are not supported");
    ++c.pos;
    json arr = json::array();
    if (c.peek() == ']') {
      ++c.pos;
      return arr;
    }
    for (;;) {
      arr.push_back(parse_value(c, false));
      const char next = c.peek();
      ++c.pos;
      if (next == ']') return arr;
      if (next != ',') c.fail("expected ',' or ']' in array");
    }
  }
  if (first == '\0') c.fail("missing value");
  return parse_number(c);
}

std::string format_scalar(const json& v) {
  if (v.is_string()) return json(v).dump();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return v.dump();
  if (v.is_number_float()) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v.get<double>());
    std::string s = buf;
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
  }
  throw ConfigError("value cannot be written as TOML: " + v.dump());
}

std::string format_value(const json& v) {
  if (!v.is_array()) return format_scalar(v);
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ", ";
    out += format_scalar(v[i]);
  }
  return out + "]";
}

}  // namespace

nlohmann::json parse_toml_lite(const std::string& text) {
  json root = json::object();
  json* section = &root;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    Cursor c{raw, 0, number};
    if (c.done()) continue;
    if (c.peek() == '[') {
      const auto close = raw.find(']', c.pos);
      if (close == std::string::npos) c.fail("unterminated section header");
      std::string name = raw.substr(c.pos + 1, close - c.pos - 1);
      name.erase(0, name.find_first_not_of(" \t"));
      name.erase(name.find_last_not_of(" \t") + 1);
      if (name.empty()) c.fail("empty section name");
      if (root.contains(name)) c.fail("duplicate section [" + name + "]");
      root[name] = json::object();
      section = &root[name];
      c.pos = close + 1;
      if (!c.done()) c.fail("trailing text after section header");
      continue;
    }
    const auto eq = raw.find('=', c.pos);
    if (eq == std::string::npos) c.fail("expected 'key = value'");
    std::string key = raw.substr(c.pos, eq - c.pos);
    key.erase(key.find_last_not_of(" \t") + 1);
    if (key.empty()) c.fail("empty key");
    for (char ch : key) {
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-') {
        c.fail("bad key '" + key + "'");
      }
    }
    if (section->contains(key)) c.fail("duplicate key '" + key + "'");
    c.pos = eq + 1;
    (*section)[key] = parse_value(c, true);
    if (!c.done()) c.fail("trailing text after value");
  }
  return root;
}

std::string to_toml_lite(const nlohmann::json& document) {
  if (!document.is_object()) throw ConfigError("config document must be a table");
  std::string out;
  for (const auto& [key, value] : document.items()) {
    if (value.is_object() || value.is_null()) continue;
    out += key + " = " + format_value(value) + "\n";
  }
  for (const auto& [key, value] : document.items()) {
    if (!value.is_object()) continue;
    out += "\n[" + key + "]\n";
    for (const auto& [k, v] : value.items()) {
      if (v.is_object()) throw ConfigError("nested tables are not supported");
      if (v.is_null()) continue;
      out += k + " = " + format_value(v) + "\n";
    }
  }
  return out;
}

nlohmann::json parse_config_text(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("bad JSON config: ") + e.what());
    }
  }
  return parse_toml_lite(text);
}

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  return parse_config_text({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

void ExperimentConfig::set_seed(std::uint64_t value) {
  seed = value;
  train.seed = value;
  theory.sweep.seed = value;
}

void ExperimentConfig::validate() const {
  train.validate();
  theory.sweep.validate();
  dataset.augmentation.validate();
  if (dataset.source != "two-gaussians" && dataset.source != "synthetic-images" &&
      dataset.source != "cifar10") {
    throw ConfigError("unknown dataset source '" + dataset.source + "'");
  }
  if (model.architecture != "linear" && model.architecture != "mlp" && model.architecture != "cnn") {
    throw ConfigError("unknown architecture '" + model.architecture + "'");
  }
  if (dataset.train_size < 1 || dataset.test_size < 1) throw ConfigError("dataset sizes must be >= 1");
  if (eval.probes < 1) throw ConfigError("eval probes must be >= 1");
  resolve_attacks(eval.attacks, train.attack);
  for (double eta : ablation.eta_values) {
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta values must lie in (0, 1]");
  }
  for (double lambda : ablation.lambda_values) {
    if (!(lambda >= 0.0)) throw ConfigError("lambda values must be >= 0");
  }
  if (!(ablation.threshold > 0.0)) throw ConfigError("threshold must be > 0");
  if (theory.taylor_points < 1) throw ConfigError("taylor points must be >= 1");
}

namespace {

template <typename T>
T get(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + key + "': " + v.dump());
  }
}

const json& section(const json& doc, const char* name) {
  static const json empty = json::object();
  if (!doc.contains(name)) return empty;
  const json& s = doc.at(name);
  if (!s.is_object()) throw ConfigError(std::string("[") + name + "] must be a table");
  return s;
}

void unknown(const std::string& where, const std::string& key) {
  throw ConfigError("unknown key '" + key + "' in " + where);
}

}  // namespace

ExperimentConfig experiment_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a table");
  static const std::vector<std::string> known{"seed",  "dataset", "augmentation", "model",
                                              "train", "objective", "attack",     "eval",
                                              "ablation", "theory"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) unknown("config", key);
  }
  ExperimentConfig cfg;

  for (const auto& [k, v] : section(doc, "dataset").items()) {
    auto& d = cfg.dataset;
    if (k == "source") d.source = get<std::string>(v, k);
    else if (k == "path") d.path = get<std::string>(v, k);
    else if (k == "classes") d.classes = get<std::vector<int>>(v, k);
    else if (k == "per_class") d.per_class = get<int>(v, k);
    else if (k == "test_per_class") d.test_per_class = get<int>(v, k);
    else if (k == "train_size") d.train_size = get<Index>(v, k);
    else if (k == "test_size") d.test_size = get<Index>(v, k);
    else if (k == "num_classes") d.num_classes = get<int>(v, k);
    else if (k == "noise") d.noise = get<double>(v, k);
    else unknown("[dataset]", k);
  }
  for (const auto& [k, v] : section(doc, "augmentation").items()) {
    auto& a = cfg.dataset.augmentation;
    if (k == "padding") a.padding = get<int>(v, k);
    else if (k == "flip_probability") a.flip_probability = get<double>(v, k);
    else if (k == "enabled") a.enabled = get<bool>(v, k);
    else unknown("[augmentation]", k);
  }
  cfg.train.augmentation = cfg.dataset.augmentation;

  for (const auto& [k, v] : section(doc, "model").items()) {
    auto& m = cfg.model;
    if (k == "architecture") m.architecture = get<std::string>(v, k);
    else if (k == "hidden") m.hidden = get<std::vector<int>>(v, k);
    else if (k == "channels") m.channels = get<std::vector<int>>(v, k);
    else if (k == "dense_units") m.dense_units = get<int>(v, k);
    else unknown("[model]", k);
  }

  for (const auto& [k, v] : section(doc, "train").items()) {
    auto& t = cfg.train;
    if (k == "epochs") t.epochs = get<int>(v, k);
    else if (k == "batch_size") t.batch_size = get<Index>(v, k);
    else if (k == "momentum") t.momentum = get<double>(v, k);
    else if (k == "weight_decay") t.weight_decay = get<double>(v, k);
    else if (k == "learning_rate") t.learning_rate = get<double>(v, k);
    else if (k == "decay_epochs") t.decay_epochs = get<std::vector<int>>(v, k);
    else if (k == "decay_factor") t.decay_factor = get<double>(v, k);
    else if (k == "ema") t.ema = get<bool>(v, k);
    else if (k == "ema_decay") t.ema_decay = get<double>(v, k);
    else if (k == "eval_limit") t.eval_limit = get<Index>(v, k);
    else unknown("[train]", k);
  }

  const json& obj = section(doc, "objective");
  auto& o = cfg.train.objective;
  if (obj.contains("variant")) o.variant = variant_from_string(get<std::string>(obj["variant"], "variant"));
  o.lambda = default_lambda(o.variant);
  for (const auto& [k, v] : obj.items()) {
    if (k == "variant") continue;
    if (k == "lambda") o.lambda = get<double>(v, k);
    else if (k == "eta") o.eta = get<double>(v, k);
    else if (k == "gamma") o.gamma = get<double>(v, k);
    else if (k == "misclassified_mode") o.misclassified_mode = misclassified_mode_from_string(get<std::string>(v, k));
    else if (k == "supervised_branch") o.supervised_branch = supervised_branch_from_string(get<std::string>(v, k));
    else if (k == "boundary_reduction") o.boundary_reduction = get<bool>(v, k);
    else if (k == "half_beta") o.half_beta = get<bool>(v, k);
    else unknown("[objective]", k);
  }

  cfg.train.attack = attack_config_from_json(section(doc, "attack"));

  for (const auto& [k, v] : section(doc, "eval").items()) {
    if (k == "attacks") cfg.eval.attacks = get<std::vector<std::string>>(v, k);
    else if (k == "mu_grid") cfg.eval.mu_grid = get<std::vector<double>>(v, k);
    else if (k == "probes") cfg.eval.probes = get<Index>(v, k);
    else unknown("[eval]", k);
  }

  for (const auto& [k, v] : section(doc, "ablation").items()) {
    if (k == "eta_values") cfg.ablation.eta_values = get<std::vector<double>>(v, k);
    else if (k == "lambda_values") cfg.ablation.lambda_values = get<std::vector<double>>(v, k);
    else if (k == "threshold") cfg.ablation.threshold = get<double>(v, k);
    else unknown("[ablation]", k);
  }

  for (const auto& [k, v] : section(doc, "theory").items()) {
    auto& s = cfg.theory.sweep;
    if (k == "dims") s.dims = get<std::vector<int>>(v, k);
    else if (k == "labeled") s.labeled = get<int>(v, k);
    else if (k == "m_constant") s.m_constant = get<double>(v, k);
    else if (k == "epsilon") s.epsilon = get<double>(v, k);
    else if (k == "trials") s.trials = get<int>(v, k);
    else if (k == "sigma_scale") s.sigma_scale = get<double>(v, k);
    else if (k == "sigma") s.sigma = get<double>(v, k);
    else if (k == "paper_regime") {
      if (get<bool>(v, k)) s.sigma_scale = kPaperSigmaScale;
    } else if (k == "taylor_points") cfg.theory.taylor_points = get<int>(v, k);
    else if (k == "taylor_tolerance") cfg.theory.taylor_tolerance = get<double>(v, k);
    else unknown("[theory]", k);
  }

  cfg.set_seed(doc.contains("seed") ? get<std::uint64_t>(doc["seed"], "seed") : 0);
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  const auto& t = cfg.train;
  const auto& o = t.objective;
  const auto& s = cfg.theory.sweep;
  json doc{
      {"seed", cfg.seed},
      {"dataset",
       {{"source", d.source},
        {"path", d.path},
        {"classes", d.classes},
        {"per_class", d.per_class},
        {"test_per_class", d.test_per_class},
        {"train_size", d.train_size},
        {"test_size", d.test_size},
        {"num_classes", d.num_classes},
        {"noise", d.noise}}},
      {"augmentation",
       {{"padding", d.augmentation.padding},
        {"flip_probability", d.augmentation.flip_probability},
        {"enabled", d.augmentation.enabled}}},
      {"model",
       {{"architecture", cfg.model.architecture},
        {"hidden", cfg.model.hidden},
        {"channels", cfg.model.channels},
        {"dense_units", cfg.model.dense_units}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"learning_rate", t.learning_rate},
        {"decay_epochs", t.decay_epochs},
        {"decay_factor", t.decay_factor},
        {"ema", t.ema},
        {"ema_decay", t.ema_decay},
        {"eval_limit", t.eval_limit}}},
      {"objective",
       {{"variant", to_string(o.variant)},
        {"lambda", o.lambda},
        {"eta", o.eta},
        {"gamma", o.gamma},
        {"misclassified_mode", to_string(o.misclassified_mode)},
        {"supervised_branch", to_string(o.supervised_branch)},
        {"boundary_reduction", o.boundary_reduction},
        {"half_beta", o.half_beta}}},
      {"attack", to_json(t.attack)},
      {"eval",
       {{"attacks", cfg.eval.attacks}, {"mu_grid", cfg.eval.mu_grid}, {"probes", cfg.eval.probes}}},
      {"ablation",
       {{"eta_values", cfg.ablation.eta_values},
        {"lambda_values", cfg.ablation.lambda_values},
        {"threshold", cfg.ablation.threshold}}},
      {"theory",
       {{"dims", s.dims},
        {"labeled", s.labeled},
        {"m_constant", s.m_constant},
        {"epsilon", s.epsilon},
        {"trials", s.trials},
        {"sigma_scale", s.sigma_scale},
        {"taylor_points", cfg.theory.taylor_points},
        {"taylor_tolerance", cfg.theory.taylor_tolerance}}}};
  if (s.sigma) doc["theory"]["sigma"] = *s.sigma;
  return doc;
}

std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& cfg, std::uint64_t seed) {
  const std::uint64_t train_seed = substream(seed, "dataset", 0)();
  const std::uint64_t test_seed = substream(seed, "dataset", 1)();
  if (cfg.source == "two-gaussians") {
    return {two_gaussians(cfg.train_size, train_seed, cfg.noise),
            two_gaussians(cfg.test_size, test_seed, cfg.noise)};
  }
  if (cfg.source == "synthetic-images") {
    return {synthetic_images(cfg.train_size, cfg.num_classes, train_seed, cfg.noise),
            synthetic_images(cfg.test_size, cfg.num_classes, test_seed, cfg.noise)};
  }
  if (cfg.source == "cifar10") {
    std::string dir = cfg.path;
    if (dir.empty()) {
      if (const char* env = std::getenv("RAAT_CIFAR10_DIR")) dir = env;
    }
    if (dir.empty()) throw ConfigError("cifar10 source needs [dataset] path or RAAT_CIFAR10_DIR");
    return {load_cifar_directory(dir, true, cfg.classes, cfg.per_class),
            load_cifar_directory(dir, false, cfg.classes, cfg.test_per_class)};
  }
  throw ConfigError("unknown dataset source '" + cfg.source + "'");
}

Architecture build_architecture(const ModelConfig& cfg, const Dataset& data) {
  if (cfg.architecture == "cnn") {
    if (!(data.shape == kCifarShape)) throw ConfigError("cnn needs 3x32x32 image inputs");
    return cnn_architecture(data.num_classes, cfg.channels, cfg.dense_units);
  }
  const int d = static_cast<int>(data.dim());
  Architecture arch = cfg.architecture == "linear" ? linear_architecture(d, data.num_classes)
                                                   : mlp_architecture(d, data.num_classes, cfg.hidden);
  if (cfg.architecture != "linear" && cfg.architecture != "mlp") {
    throw ConfigError("unknown architecture '" + cfg.architecture + "'");
  }
  return arch;
}

std::vector<NamedAttack> resolve_attacks(const std::vector<std::string>& names,
                                         const AttackConfig& threat) {
  const auto all = standard_attacks(threat);
  std::vector<NamedAttack> out;
  for (const auto& name : names) {
    const auto it = std::find_if(all.begin(), all.end(), [&](const NamedAttack& a) { return a.name == name; });
    if (it == all.end()) throw ConfigError("unknown eval attack '" + name + "'");
    out.push_back(*it);
  }
  return out;
}

}  // namespace raat
