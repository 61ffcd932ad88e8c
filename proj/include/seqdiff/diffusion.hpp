#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "seqdiff/denoiser.hpp"
#include "seqdiff/gesture.hpp"
#include "seqdiff/stabilizer.hpp"
#include "seqdiff/tape.hpp"
#include "seqdiff/threading.hpp"

namespace seqdiff {

// beta/alpha tables indexed by timestep t in [1, T]. Reverse-step variance is
// fixed at beta_t (sigma_t = sqrt(beta_t)), never learned.
class NoiseSchedule {
public:
    static NoiseSchedule linear(std::size_t timesteps, double beta_1, double beta_t);

    std::size_t timesteps() const { return betas_.size(); }
    double beta(std::size_t t) const { return betas_[index(t)]; }
    double alpha(std::size_t t) const { return alphas_[index(t)]; }
    double alpha_bar(std::size_t t) const { return alpha_bars_[index(t)]; }
    double sigma(std::size_t t) const { return sigmas_[index(t)]; }

private:
    std::size_t index(std::size_t t) const;
    std::vector<double> betas_, alphas_, alpha_bars_, sigmas_;
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& schedule);

struct TrainingConfig {
    double p_uncond = 0.1;
    double learning_rate = 5e-4;
    std::size_t batch_size = 128;
    std::size_t total_steps = 20000;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    std::size_t loss_every = 10;       // loss-curve granularity
    std::size_t plateau_window = 1000; // early stop when the smoothed loss flattens
    double plateau_tolerance = 1e-3;

    void validate() const;
};

struct GuidanceConfig {
    double scale = 1.0;
    // Evaluate both branches even when scale == 1 (the combination still
    // returns the conditional prediction bit-exactly).
    bool strict = false;

    void validate() const;
};

class AdamOptimizer {
public:
    AdamOptimizer() = default;
    AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(ParamStore& params, const GradientMap& grads);

    std::size_t steps_taken() const { return steps_; }
    double learning_rate() const { return lr_; }
    const std::map<std::string, Tensor>& first_moments() const { return m_; }
    const std::map<std::string, Tensor>& second_moments() const { return v_; }
    void restore(std::map<std::string, Tensor> m, std::map<std::string, Tensor> v,
                 std::size_t steps);

private:
    double lr_ = 5e-4;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::size_t steps_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

struct TrainingLossStats {
    double loss = 0.0;
    std::size_t masked_items = 0;
};

// One mini-batch of the noise-prediction objective: per item, draw the mask
// flag, the timestep and the noise from streams keyed by (seed, step, item),
// corrupt x0 and score ||eps - model(x_t, c, t)||^2; the batch loss is the
// item mean. Items evaluate in parallel; gradients reduce in item order.
template <class Model>
TrainingLossStats training_loss(const Model& model, const std::vector<SyntheticClipRecord>& records,
                                std::span<const std::size_t> batch,
                                const NoiseSchedule& schedule, double p_uncond,
                                std::size_t initial_frames, std::uint64_t seed, std::size_t step,
                                GradientMap* grad_out) {
    if (batch.empty()) {
        throw ValueError("training_loss: empty batch");
    }
    struct ItemResult {
        double loss = 0.0;
        bool masked = false;
        GradientMap grads;
    };
    std::vector<ItemResult> results(batch.size());

    parallel_for(batch.size(), [&](std::size_t i) {
        const SyntheticClipRecord& rec = records.at(batch[i]);
        Rng rng(seed, "train/item", step, i);
        const bool masked = rng.uniform() < p_uncond;
        const std::size_t t = 1 + rng.uniform_int(schedule.timesteps());
        Tensor eps(rec.clip.values.shape());
        rng.fill_normal({eps.data(), eps.size()});

        Context ctx = rec.context(initial_frames, masked);
        Tensor x_t = q_sample(rec.clip.values, t, eps, schedule);

        Tape tape(&model.params());
        Var eps_hat = model.predict(tape, tape.constant(std::move(x_t)), ctx, t);
        Var diff = tape.sub(tape.constant(std::move(eps)), eps_hat);
        Var loss = tape.sum_all(tape.mul(diff, diff));

        results[i].loss = tape.value(loss)[0];
        results[i].masked = masked;
        if (grad_out != nullptr) {
            results[i].grads = tape.backward(loss);
        }
    });

    TrainingLossStats stats;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    if (grad_out != nullptr) {
        *grad_out = std::move(results[0].grads);
        for (auto& [name, g] : *grad_out) {
            for (double& x : g.values()) {
                x *= inv_b;
            }
        }
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
        stats.loss += results[i].loss * inv_b;
        stats.masked_items += results[i].masked ? 1 : 0;
        if (grad_out != nullptr && i > 0) {
            for (auto& [name, g] : *grad_out) {
                const Tensor& gi = results[i].grads.at(name);
                for (std::size_t k = 0; k < g.size(); ++k) {
                    g[k] += gi[k] * inv_b;
                }
            }
        }
    }
    return stats;
}

struct TrainResult {
    std::vector<std::pair<std::size_t, double>> loss_curve; // (step, batch loss)
    std::size_t steps_run = 0;
    std::size_t last_step = 0;
    bool plateau_stopped = false;
    double final_loss = 0.0;
};

using StepHook = std::function<void(std::size_t step, double loss)>;

// Optimizes the noise-prediction objective with Adam. Deterministic given
// (seed, start_step): every stream is keyed by the absolute step, so resuming
// from a checkpoint replays the exact batch/noise sequence of a longer run.
TrainResult train(DenoiserModel& model, const std::vector<SyntheticClipRecord>& records,
                  const TrainingConfig& config, const NoiseSchedule& schedule, std::uint64_t seed,
                  AdamOptimizer& optimizer, std::size_t start_step = 0, const StepHook& hook = {});

// eps_u + s * (eps_c - eps_u), with eps_u from the null-context branch.
// Short-circuits to one conditional evaluation at s == 1 unless strict.
Tensor guided_noise(const DenoiserModel& model, const Tensor& x_t, const Context& ctx,
                    std::size_t t, const GuidanceConfig& guidance);

// x_{t-1} = (x_t - (1-alpha_t)/sqrt(1-abar_t) eps_hat)/sqrt(alpha_t) + sigma_t z
Tensor reverse_step(const Tensor& x_t, const Tensor& eps_hat, std::size_t t, const Tensor& z,
                    const NoiseSchedule& schedule);

// Full reverse trajectory from pure noise; deterministic given seed.
GestureClip sample(const DenoiserModel& model, const Context& ctx, const NoiseSchedule& schedule,
                   const GuidanceConfig& guidance, const StabilizerConfig& stabilizer,
                   std::uint64_t seed);

} // namespace seqdiff
