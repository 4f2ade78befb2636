#include "raat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace raat {

namespace {

constexpr char kMagic[8] = {'R', 'A', 'A', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume little-endian");

template <typename T>
void put(std::string& out, const T& value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw FormatError("checkpoint blob is truncated");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw ConfigError("failed writing '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json to_json(const CheckpointMeta& meta) {
  return {{"architecture", to_json(meta.architecture)},
          {"epoch", meta.epoch},
          {"seed", meta.seed},
          {"variant", meta.variant},
          {"metrics", meta.metrics},
          {"checksum", meta.checksum}};
}

CheckpointMeta checkpoint_meta_from_json(const nlohmann::json& j) {
  try {
    CheckpointMeta m;
    m.architecture = architecture_from_json(j.at("architecture"));
    m.epoch = j.at("epoch").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.variant = j.at("variant").get<std::string>();
    m.metrics = j.value("metrics", nlohmann::json::object());
    m.checksum = j.at("checksum").get<std::uint64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Classifier& model, CheckpointMeta meta) {
  const Vector& theta = model.parameters();
  if (!all_finite(theta)) throw NumericError("refusing to save non-finite parameters");
  meta.architecture = model.architecture();
  meta.checksum = checksum(theta);
  std::string blob(kMagic, sizeof(kMagic));
  put(blob, kVersion);
  put(blob, static_cast<std::uint64_t>(theta.size()));
  blob.append(reinterpret_cast<const char*>(theta.data()),
              static_cast<std::size_t>(theta.size()) * sizeof(double));
  write_file_atomic(path, blob);
  write_file_atomic(path + ".json", to_json(meta).dump(2) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const std::string blob = read_file(path);
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(read_file(path + ".json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("bad checkpoint sidecar: ") + e.what());
  }
  CheckpointMeta meta = checkpoint_meta_from_json(sidecar);

  if (blob.size() < sizeof(kMagic) || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("'" + path + "' is not a checkpoint blob");
  }
  std::size_t pos = sizeof(kMagic);
  if (take<std::uint32_t>(blob, pos) != kVersion) throw FormatError("unsupported checkpoint version");
  const auto count = take<std::uint64_t>(blob, pos);
  if (blob.size() - pos != count * sizeof(double)) throw FormatError("checkpoint blob is truncated");
  Vector theta(static_cast<Index>(count));
  std::memcpy(theta.data(), blob.data() + pos, count * sizeof(double));
  if (checksum(theta) != meta.checksum) throw FormatError("checkpoint checksum mismatch");

  Classifier model(meta.architecture);
  if (model.parameter_count() != theta.size()) {
    throw FormatError("checkpoint size does not match its architecture");
  }
  model.set_parameters(theta);
  return {std::move(model), std::move(meta)};
}

}  // namespace raat
