#ifndef RAAT_CHECKPOINT_HPP
#define RAAT_CHECKPOINT_HPP

#include "raat/common.hpp"
#include "raat/model.hpp"

#include <json.hpp>

#include <string>

namespace raat {

struct CheckpointMeta {
  Architecture architecture;
  int epoch = -1;
  std::uint64_t seed = 0;
  std::string variant;
  nlohmann::json metrics = nlohmann::json::object();
  std::uint64_t checksum = 0;  // filled in on save
};

/// Writes the parameter blob to `path` and the metadata to `path + ".json"`.
/// Blob layout: "RAATCKPT", uint32 version, uint64 count, count little-endian
/// doubles.
void save_checkpoint(const std::string& path, const Classifier& model, CheckpointMeta meta);

struct LoadedCheckpoint {
  Classifier model;
  CheckpointMeta meta;
};

/// Throws FormatError on a missing, truncated or checksum-mismatched file.
LoadedCheckpoint load_checkpoint(const std::string& path);

nlohmann::json to_json(const CheckpointMeta& meta);
CheckpointMeta checkpoint_meta_from_json(const nlohmann::json& j);

/// Replaces `path` atomically by writing to a sibling temporary first.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace raat

#endif  // RAAT_CHECKPOINT_HPP
