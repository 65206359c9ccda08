#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "dirinet/model.hpp"

namespace dirinet {

/// Format tag written as the first line of every checkpoint.
inline constexpr const char* kCheckpointVersion = "dirinet-ckpt-1";

/// Checkpoint layout:
///
///   dirinet-ckpt-1
///   config window_len=12 hidden=64 ...
///   norm mean=<double> std=<double>
///   array <name> <rows> <cols> f32 <fnv1a-64 of the array bytes>
///   ... one line per array, canonical order
///   end
///   <raw little-endian float32 data, arrays in manifest order, row-major>
///
/// The graph is not stored: a checkpoint can be run against any graph.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
std::string serialize_checkpoint(const ModelParams& params);

/// Throws CheckpointError on a bad version, a manifest that does not match
/// the embedded config, truncated data, or (when `expected` is given) a
/// config whose array shapes differ from the expected ones.
ModelParams load_checkpoint(const std::filesystem::path& path,
                            const std::optional<ModelConfig>& expected = std::nullopt);
ModelParams deserialize_checkpoint(const std::string& bytes,
                                   const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace dirinet
