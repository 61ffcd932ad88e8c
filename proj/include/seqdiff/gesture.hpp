#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqdiff/tensor.hpp"

namespace seqdiff {

// N-frame sequence of pose vectors; each frame concatenates 3-component bone
// direction vectors, so dims = 3*(J-1) for a J-joint chain.
struct GestureClip {
    std::size_t frames = 0;
    std::size_t dims = 0;
    Tensor values; // frames x dims
    bool normalized = false;

    std::size_t joints() const { return dims / 3 + 1; }
    void validate() const;
};

// Per-frame audio features, aligned 1:1 with a clip's frames.
struct AudioFeatureSeq {
    static constexpr std::size_t kChannels = 32;
    Tensor values; // frames x 32

    std::size_t frames() const { return values.rows(); }
};

// Conditioning record: audio, the first M pose frames, and the flag that
// swaps the whole context for the learned null embedding.
struct Context {
    AudioFeatureSeq audio;
    Tensor initial_poses; // M x dims
    bool uncond_mask = false;

    std::size_t frames() const { return audio.frames(); }
    std::size_t initial_count() const { return initial_poses.rows(); }
    void validate() const;
};

struct SyntheticClipRecord {
    std::string id;
    GestureClip clip;
    AudioFeatureSeq audio;
    std::vector<std::size_t> audio_beat_times; // frame indices, strictly increasing
    std::uint64_t style_seed = 0;

    Context context(std::size_t initial_frames, bool uncond = false) const;
    void validate() const;
};

// --- pose representation ---------------------------------------------------

// Unit bone directions for a chain of joints. Throws ValueError for a
// zero-length bone.
std::vector<double> joints_to_directions(std::span<const std::array<double, 3>> joints);

// Inverse map. Directions must be within 0.1 of unit norm (they are
// renormalized internally); bone lengths must be positive.
std::vector<std::array<double, 3>> directions_to_joints(std::span<const double> directions,
                                                        std::span<const double> bone_lengths,
                                                        const std::array<double, 3>& root);

// --- synthetic corpus -------------------------------------------------------

struct CorpusParams {
    std::uint64_t seed = 1;
    std::size_t num_clips = 1;
    std::size_t joints = 5;
    std::size_t frames = 34;
    std::size_t initial_frames = 4;
    double beat_rate = 0.125;  // beats per frame, in (0, 0.5)
    double noise_level = 0.03; // angular jitter, radians

    void validate() const;
};

// Deterministic function of its parameters: clip k depends only on
// (seed, k), so serial and parallel generation agree bit for bit. Audio
// channels embed the beat impulse train plus a per-clip style code, and the
// pose angle velocities peak exactly at the beat frames.
std::vector<SyntheticClipRecord> generate_synthetic_corpus(const CorpusParams& params);

// --- dataset persistence ----------------------------------------------------

// Line-delimited records with a fixed one-line header. An optional second
// line `{"meta": ...}` carries provenance / config echo.
inline constexpr const char* kDatasetHeader = R"({"format":"seqdiff-dataset","version":1})";

struct Dataset {
    std::vector<SyntheticClipRecord> records;
    nlohmann::json meta; // null when absent
};

void write_dataset(const std::string& path, const std::vector<SyntheticClipRecord>& records,
                   const nlohmann::json* meta = nullptr);
Dataset read_dataset(const std::string& path);

nlohmann::json record_to_json(const SyntheticClipRecord& rec);
SyntheticClipRecord record_from_json(const nlohmann::json& j);

// Writes `contents` through a temp file + rename so partial writes never land.
void atomic_write_file(const std::string& path, const std::string& contents);

} // namespace seqdiff
