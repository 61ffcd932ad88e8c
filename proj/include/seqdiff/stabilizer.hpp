#pragma once

#include <cstdint>
#include <string>

#include "seqdiff/rng.hpp"
#include "seqdiff/tensor.hpp"

namespace seqdiff {

enum class StabilizerMode { naive, threshold, smooth };

StabilizerMode stabilizer_mode_from_string(const std::string& s);
std::string to_string(StabilizerMode mode);

enum class SigmaShape { quadratic, quadratic_reversed };

SigmaShape sigma_shape_from_string(const std::string& s);
std::string to_string(SigmaShape shape);

// Sampling-time noise source. naive draws i.i.d. rows; threshold replicates
// one row for t <= t0; smooth correlates the rows through a shared component
// with variance sigma_a(t)^2, annealed over the reverse trajectory.
struct StabilizerConfig {
    StabilizerMode mode = StabilizerMode::smooth;
    std::size_t t0 = 25;
    SigmaShape sigma_shape = SigmaShape::quadratic;
    std::size_t timesteps = 500; // T; scales sigma_a and bounds t

    // In [0, 1]; quadratic shape is 1 at t=1 and 0 at t=T.
    double sigma_a(std::size_t t) const;
    void validate() const;
};

// z(t) for one reverse step: frames x channels. Every frame row is marginally
// standard normal in all modes.
Tensor sample_stabilizer_noise(const StabilizerConfig& config, std::size_t t, std::size_t frames,
                               std::size_t channels, Rng& rng);

// Mean absolute second difference over frames and channels; needs >= 3 frames.
double temporal_jerk(const Tensor& clip_values);

} // namespace seqdiff
