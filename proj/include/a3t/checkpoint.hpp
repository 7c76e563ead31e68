#pragma once

#include "a3t/model.hpp"
#include "a3t/training.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace a3t {

/// On-disk layout: "A3TC", u32 version, u64 header length, JSON header
/// (configs, step, seed, data cursor, tensor index), then every tensor as
/// little-endian float64 in index order.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  long step = 0;
  long epoch = 0;
  long batch_index = 0;
  long adam_steps = 0;
  std::vector<std::pair<std::string, Matrix>> tensors;  // ordered

  const Matrix* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model with weights from a checkpoint's "param/" entries.
A3tModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace a3t
