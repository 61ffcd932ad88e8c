#pragma once

#include <cstdint>

#include "json.hpp"
#include "seqdiff/diffusion.hpp"
#include "seqdiff/metrics.hpp"

namespace seqdiff::cli {

// Full command dispatch; returns the process exit code
// (0 ok, 2 usage, 3 I/O, 4 numeric failure, 5 compatibility).
int run(int argc, char** argv);

// --- helpers shared with tests ---------------------------------------------

struct LoadedModel {
    DenoiserModel model;
    double beta_1 = 1e-4;
    double beta_t = 0.02;
    AdamOptimizer optimizer;
    std::size_t optimizer_steps = 0;
    std::uint64_t seed = 0;
    nlohmann::json config;
    std::uint64_t checksum = 0;

    NoiseSchedule schedule() const {
        return NoiseSchedule::linear(model.config().timesteps, beta_1, beta_t);
    }
};

void save_model_checkpoint(const std::string& path, const DenoiserModel& model, double beta_1,
                           double beta_t, const AdamOptimizer* optimizer, std::uint64_t seed,
                           const nlohmann::json& command_config);
LoadedModel load_model_checkpoint(const std::string& path);

void save_extractor_checkpoint(const std::string& path, const FeatureExtractor& extractor,
                               const nlohmann::json& command_config);
FeatureExtractor load_extractor_checkpoint(const std::string& path);

// Samples one generated record per source index; each clip draws from a
// stream keyed by (seed, record id) so matched-seed comparisons across
// sampler settings line up per clip.
std::vector<SyntheticClipRecord> run_sampler(const DenoiserModel& model,
                                             const NoiseSchedule& schedule,
                                             const std::vector<SyntheticClipRecord>& sources,
                                             std::span<const std::size_t> indices,
                                             const GuidanceConfig& guidance,
                                             const StabilizerConfig& stabilizer,
                                             std::uint64_t seed);

} // namespace seqdiff::cli
