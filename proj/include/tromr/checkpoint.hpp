#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tromr/common.hpp"

namespace tromr {

inline constexpr const char* kCheckpointVersion = "tromr-v1";

using NamedTensor = std::pair<std::string, Eigen::MatrixXf>;

struct CheckpointMeta {
  std::string version = kCheckpointVersion;
  std::string kind;  // "recognizer" | "detector"
  nlohmann::json config;
};

// Single-file archive: magic, length-prefixed JSON header (version, kind,
// config, tensor directory), then raw float32 tensor data column-major in
// directory order.
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<NamedTensor>& tensors);

std::pair<CheckpointMeta, std::vector<NamedTensor>> load_checkpoint(const std::string& path);

// Throws LoadError unless version and kind match.
std::pair<CheckpointMeta, std::vector<NamedTensor>> load_checkpoint(const std::string& path,
                                                                    const std::string& expect_kind);

}  // namespace tromr
