#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqdiff/tape.hpp"

namespace seqdiff {

// Binary artifact: "SDGC" magic, format version, a config-echo JSON blob, a
// named tensor manifest (name, shape, byte offset) and a little-endian float32
// payload, closed by an FNV-1a integrity checksum over everything before it.
struct Checkpoint {
    nlohmann::json config;
    std::map<std::string, Tensor> tensors;
    std::uint64_t checksum = 0; // checksum of the serialized artifact
};

inline constexpr char kCheckpointMagic[4] = {'S', 'D', 'G', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const nlohmann::json& config,
                                 const std::vector<std::pair<std::string, const Tensor*>>& tensors);
void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin);
Checkpoint load_checkpoint(const std::string& path);

// Rounds every value through float32; persisted and in-memory parameters then
// agree exactly.
void quantize_params_f32(ParamStore& params);

// Checksum over the sorted (name, shape, float32 payload) stream. Stable
// across save/load because storage is float32.
std::uint64_t params_checksum(const ParamStore& params);

} // namespace seqdiff
