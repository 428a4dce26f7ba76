#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dlm/model.hpp"

namespace dlm {

// Versioned binary container: magic "TDLM", u32 version, an integer config
// echo, a named-section index, float32 little-endian blobs (column-major),
// and a trailing 64-bit FNV checksum over all preceding bytes. The loader
// rejects version or checksum mismatches.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  std::map<std::string, std::int64_t> meta;
  std::vector<std::pair<std::string, Eigen::MatrixXf>> sections;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

// Model <-> container bridges. Dimensions travel in the config echo and are
// authoritative on load.
CheckpointData model_to_checkpoint(const Model<float>& model, std::uint64_t train_seed);
Model<float> model_from_checkpoint(const CheckpointData& data);

// Digest of the model's parameter bytes; the frozen-base contract compares
// this before and after every fine-tune.
std::uint64_t base_checksum(const Model<float>& model);

}  // namespace dlm
