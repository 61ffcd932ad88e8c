#include "seqdiff/stabilizer.hpp"

#include <cmath>

#include "seqdiff/errors.hpp"

namespace seqdiff {

StabilizerMode stabilizer_mode_from_string(const std::string& s) {
    if (s == "naive") {
        return StabilizerMode::naive;
    }
    if (s == "threshold") {
        return StabilizerMode::threshold;
    }
    if (s == "smooth") {
        return StabilizerMode::smooth;
    }
    throw ValueError("unknown stabilizer mode: " + s);
}

std::string to_string(StabilizerMode mode) {
    switch (mode) {
    case StabilizerMode::naive:
        return "naive";
    case StabilizerMode::threshold:
        return "threshold";
    case StabilizerMode::smooth:
        return "smooth";
    }
    return "?";
}

SigmaShape sigma_shape_from_string(const std::string& s) {
    if (s == "quadratic") {
        return SigmaShape::quadratic;
    }
    if (s == "quadratic-reversed") {
        return SigmaShape::quadratic_reversed;
    }
    throw ValueError("unknown sigma-a shape: " + s);
}

std::string to_string(SigmaShape shape) {
    return shape == SigmaShape::quadratic ? "quadratic" : "quadratic-reversed";
}

void StabilizerConfig::validate() const {
    if (timesteps < 2) {
        throw ValueError("stabilizer needs timesteps >= 2");
    }
    if (t0 > timesteps) {
        throw ValueError("stabilizer t0 must lie in [0, T]");
    }
}

double StabilizerConfig::sigma_a(std::size_t t) const {
    if (t < 1 || t > timesteps) {
        throw ValueError("sigma_a: timestep out of range");
    }
    const double u = static_cast<double>(t - 1) / static_cast<double>(timesteps - 1);
    const double base = sigma_shape == SigmaShape::quadratic ? 1.0 - u : u;
    return base * base;
}

Tensor sample_stabilizer_noise(const StabilizerConfig& config, std::size_t t, std::size_t frames,
                               std::size_t channels, Rng& rng) {
    config.validate();
    if (t < 1 || t > config.timesteps) {
        throw ValueError("stabilizer noise: timestep out of range");
    }
    if (frames < 1 || channels < 1) {
        throw ValueError("stabilizer noise: frames and channels must be >= 1");
    }

    Tensor z({frames, channels});
    switch (config.mode) {
    case StabilizerMode::naive:
        rng.fill_normal({z.data(), z.size()});
        break;
    case StabilizerMode::threshold:
        if (t > config.t0) {
            rng.fill_normal({z.data(), z.size()});
        } else {
            std::vector<double> shared(channels);
            rng.fill_normal(shared);
            for (std::size_t i = 0; i < frames; ++i) {
                std::copy(shared.begin(), shared.end(), z.data() + i * channels);
            }
        }
        break;
    case StabilizerMode::smooth: {
        const double sa = config.sigma_a(t);
        const double resid = std::sqrt(std::max(0.0, 1.0 - sa * sa));
        std::vector<double> shared(channels);
        for (double& s : shared) {
            s = sa * rng.normal();
        }
        for (std::size_t i = 0; i < frames; ++i) {
            double* row = z.data() + i * channels;
            for (std::size_t c = 0; c < channels; ++c) {
                row[c] = shared[c] + resid * rng.normal();
            }
        }
        break;
    }
    }
    return z;
}

double temporal_jerk(const Tensor& clip_values) {
    const std::size_t n = clip_values.rows();
    const std::size_t c = clip_values.cols();
    if (n < 3) {
        throw ValueError("temporal_jerk needs at least 3 frames");
    }
    double total = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double* prev = clip_values.data() + (i - 1) * c;
        const double* cur = clip_values.data() + i * c;
        const double* next = clip_values.data() + (i + 1) * c;
        for (std::size_t j = 0; j < c; ++j) {
            total += std::fabs(next[j] - 2.0 * cur[j] + prev[j]);
        }
    }
    return total / (static_cast<double>(n - 2) * static_cast<double>(c));
}

} // namespace seqdiff
