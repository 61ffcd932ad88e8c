#pragma once

#include <atomic>
#include <cstdint>
#include <string>

#include "seqdiff/gesture.hpp"
#include "seqdiff/tape.hpp"

namespace seqdiff {

struct DenoiserConfig {
    std::size_t hidden_dim = 256;
    std::size_t num_blocks = 8;
    std::size_t num_heads = 4;
    std::size_t pose_dims = 27; // 3*(J-1)
    std::size_t audio_dims = AudioFeatureSeq::kChannels;
    std::size_t initial_frames = 4; // M
    std::size_t frames = 34;        // N
    std::size_t timesteps = 500;    // T
    std::size_t ff_mult = 4;
    bool positional_encoding = true;
    std::string activation = "gelu"; // recorded in checkpoints

    std::size_t context_dims() const { return audio_dims + pose_dims + 1; }
    std::size_t token_dims() const { return pose_dims + context_dims(); }
    void validate() const;
    nlohmann::json to_json() const;
    static DenoiserConfig from_json(const nlohmann::json& j);
};

// sin/cos features of an integer position, `dim` wide.
Tensor sinusoid_embedding(std::size_t position, std::size_t dim);

struct AttentionResult {
    Var out;
    Var weights; // row-stochastic
};

// softmax(q kᵀ / sqrt(cols)) v
AttentionResult attention(Tape& tape, Var q, Var k, Var v);

// Noise-prediction transformer. Per-frame tokens concatenate the noisy pose
// with the aligned context channels (audio, initial-pose channel, validity
// bit); masked contexts are replaced by one learned embedding. All frames are
// produced in a single pass.
class DenoiserModel {
public:
    DenoiserModel() = default;
    DenoiserModel(const DenoiserModel& other)
        : config_(other.config_), params_(other.params_), eval_count_(other.eval_count_.load()) {}
    DenoiserModel(DenoiserModel&& other) noexcept
        : config_(std::move(other.config_)), params_(std::move(other.params_)),
          eval_count_(other.eval_count_.load()) {}
    DenoiserModel& operator=(const DenoiserModel& other) {
        config_ = other.config_;
        params_ = other.params_;
        eval_count_.store(other.eval_count_.load());
        return *this;
    }
    DenoiserModel& operator=(DenoiserModel&& other) noexcept {
        config_ = std::move(other.config_);
        params_ = std::move(other.params_);
        eval_count_.store(other.eval_count_.load());
        return *this;
    }

    static DenoiserModel create(const DenoiserConfig& config, std::uint64_t seed);

    const DenoiserConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Pre-projection token matrix; the pose channels equal x_t exactly.
    Tensor build_tokens(const Tensor& x_t, const Context& ctx) const;
    Var build_tokens_var(Tape& tape, Var x_t, const Context& ctx) const;

    // Transformer stack on an already-built token matrix.
    Var forward_tokens(Tape& tape, Var tokens, std::size_t t) const;

    Var predict(Tape& tape, Var x_t, const Context& ctx, std::size_t t) const;
    Tensor predict_noise(const Tensor& x_t, const Context& ctx, std::size_t t) const;

    std::uint64_t eval_count() const { return eval_count_.load(); }
    void reset_eval_count() const { eval_count_.store(0); }

private:
    void check_inputs(const Tensor& x_t, const Context& ctx, std::size_t t) const;

    DenoiserConfig config_;
    ParamStore params_;
    mutable std::atomic<std::uint64_t> eval_count_{0};
};

} // namespace seqdiff
