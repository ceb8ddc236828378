#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dnetpad/model.hpp"

namespace dnetpad {

// Binary layout, all integers little-endian:
//   8 bytes   magic "DNPADCKP"
//   u32       format version (1)
//   u32 + N   metadata JSON: {"model": <ModelConfig>, "training": {"epoch", "seed"}}
//   u32       parameter count
//   per parameter: u32 + name bytes, u32 rank, rank x u64 dims, f64 payload
inline constexpr char kCheckpointMagic[8] = {'D', 'N', 'P', 'A', 'D', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMeta {
    std::uint64_t epoch = 0;
    std::uint64_t seed = 0;
    friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct LoadedCheckpoint {
    Model model;
    TrainingMeta meta;
    // Set when the caller supplied an expected config: whether the file's
    // config (which always wins) equals it.
    std::optional<bool> config_matches;
};

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const TrainingMeta& meta);
LoadedCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes,
                                        const ModelConfig* expected = nullptr);

void save_checkpoint(const Model& model, const TrainingMeta& meta, const std::filesystem::path& path);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

} // namespace dnetpad
