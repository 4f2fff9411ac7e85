#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "densetrf/params.h"

namespace dtrf {

// Checkpoint container: one file per ParameterSet.
// Layout: magic "DTRF-C", version u16, entry count u32; per entry:
// name length u32, name bytes, rank u32, dims u32 each, float32 LE payload.
inline constexpr uint16_t kCheckpointVersion = 1;

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_checkpoint(const std::filesystem::path& path);

// Sidecar metadata written next to each checkpoint as "<path>.meta.json".
struct CheckpointMeta {
    int round = -1;
    std::string phase;
    uint64_t seed = 0;
    std::string config_hash;
};

void save_checkpoint_meta(const CheckpointMeta& meta, const std::filesystem::path& checkpoint_path);
CheckpointMeta load_checkpoint_meta(const std::filesystem::path& checkpoint_path);

} // namespace dtrf
