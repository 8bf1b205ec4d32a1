#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "flowmatch/field_net.hpp"

namespace flowmatch {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  VectorFieldNet net;
  AdamState adam;
  std::uint64_t rng_seed = 0;
  long step = 0;  // completed training iterations
  std::map<std::string, std::string> training_config;
};

// JSON document; doubles are written in shortest round-trip form so a
// save/load cycle is bit exact.
std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace flowmatch
