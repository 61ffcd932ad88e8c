#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seqdiff/gesture.hpp"
#include "seqdiff/tape.hpp"

namespace seqdiff {

struct ExtractorConfig {
    std::size_t frames = 34;
    std::size_t pose_dims = 12;
    std::size_t hidden = 128;
    std::size_t latent = 32;

    nlohmann::json to_json() const;
    static ExtractorConfig from_json(const nlohmann::json& j);
};

// Sequence autoencoder trained for reconstruction on real clips; frozen after
// training. The encoder half maps a whole clip to a 32-d latent used by both
// the Frechet metric and diversity, so scores are only comparable under the
// same checksum.
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    FeatureExtractor(ExtractorConfig config, ParamStore params);

    Tensor encode(const GestureClip& clip) const; // rank-1, latent wide
    Tensor reconstruct(const GestureClip& clip) const;

    const ExtractorConfig& config() const { return config_; }
    const ParamStore& params() const { return params_; }
    std::uint64_t checksum() const { return checksum_; }

private:
    void check_clip(const GestureClip& clip) const;

    ExtractorConfig config_;
    ParamStore params_;
    std::uint64_t checksum_ = 0;
};

struct ExtractorTrainOptions {
    std::size_t hidden = 128;
    std::size_t steps = 1200;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double holdout_fraction = 0.1;
    std::size_t min_clips = 500;
};

struct ExtractorTrainResult {
    FeatureExtractor extractor;
    double holdout_mse = 0.0;
    double mean_baseline_mse = 0.0; // predict-the-training-mean on the same holdout
};

// Deterministic given seed; throws ValueError below min_clips. The returned
// extractor reconstructs held-out clips better than the mean baseline.
ExtractorTrainResult train_feature_extractor(const std::vector<GestureClip>& clips,
                                             std::uint64_t seed,
                                             const ExtractorTrainOptions& options = {});

struct MomentPair {
    Tensor mean; // rank-1
    Tensor cov;  // rank-2, symmetric PSD
};

// Sample mean and covariance (1/(n-1)); accumulation is pairwise and ordered,
// so results never depend on thread count. Needs n >= 2.
MomentPair fit_moments(const std::vector<Tensor>& features);

// |mu_r - mu_g|^2 + tr(Sr + Sg - 2 (Sr Sg)^(1/2)), square root taken through
// the symmetric form (Sr^(1/2) Sg Sr^(1/2))^(1/2).
double frechet_distance(const MomentPair& a, const MomentPair& b);

double fgd(const std::vector<GestureClip>& generated, const std::vector<GestureClip>& real,
           const FeatureExtractor& extractor);

// Included angles between consecutive bones: frames x (J-2). Direction
// sub-vectors are renormalized; norms outside [0.5, 2] raise ValueError.
Tensor included_angles(const GestureClip& clip);

// Mean absolute per-frame change of each included angle across a clip set.
std::vector<double> maac(const std::vector<GestureClip>& clips);

// Normalized angle-change rate per frame transition (length frames-1).
std::vector<double> angle_change_rate(const GestureClip& clip, std::span<const double> maac_values);

// Local maxima of the change rate whose first-order difference exceeds
// threshold_factor * stddev(rate). Frame indices; all maac values must be > 0.
std::vector<std::size_t> kinematic_beats(const GestureClip& clip,
                                         std::span<const double> maac_values,
                                         double threshold_factor = 0.3);

// Mean Gaussian kernel of each audio beat's distance (seconds) to the nearest
// motion beat.
double bc_score(std::span<const double> audio_beats_s, std::span<const double> motion_beats_s,
                double sigma = 0.1);

struct BcOptions {
    double threshold_factor = 0.3;
    double fps = 15.0;
    double sigma = 0.1;
};

// Set-level score: each record's audio beats against the kinematic beats of
// the paired clip, using the clip set's own MAAC normalizer. Clips that yield
// no kinematic beats (or degenerate directions) score zero for their beats.
double bc_over_set(const std::vector<std::vector<std::size_t>>& audio_beats,
                   const std::vector<const GestureClip*>& clips, const BcOptions& options = {});

// Mean absolute feature distance between a seed-driven subsample and a
// derangement of itself. Subsampling is keyed to clip ids.
double diversity(const std::vector<std::string>& ids, const std::vector<const GestureClip*>& clips,
                 const FeatureExtractor& extractor, std::size_t sample_count, std::uint64_t seed);

struct MetricReport {
    double fgd = 0.0;
    double bc = 0.0;
    double diversity = 0.0;
    double temporal_jerk = 0.0;
    std::size_t n_generated = 0;
    std::size_t n_real = 0;
    std::uint64_t extractor_checksum = 0;
    nlohmann::json config_echo;

    void validate() const;
    nlohmann::json to_json() const;
};

} // namespace seqdiff
