#include "seqdiff/diffusion.hpp"

#include <cmath>
#include <numeric>

namespace seqdiff {

// ---------------------------------------------------------------------------
// Schedule

NoiseSchedule NoiseSchedule::linear(std::size_t timesteps, double beta_1, double beta_t) {
    if (timesteps < 2) {
        throw ValueError("schedule needs at least 2 timesteps");
    }
    if (!(0.0 < beta_1 && beta_1 < beta_t && beta_t < 1.0)) {
        throw ValueError("schedule requires 0 < beta_1 < beta_T < 1");
    }
    NoiseSchedule s;
    s.betas_.resize(timesteps);
    s.alphas_.resize(timesteps);
    s.alpha_bars_.resize(timesteps);
    s.sigmas_.resize(timesteps);
    double running = 1.0;
    for (std::size_t i = 0; i < timesteps; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(timesteps - 1);
        const double beta = beta_1 * (1.0 - u) + beta_t * u;
        s.betas_[i] = beta;
        s.alphas_[i] = 1.0 - beta;
        running *= s.alphas_[i];
        s.alpha_bars_[i] = running;
        s.sigmas_[i] = std::sqrt(beta);
    }
    return s;
}

std::size_t NoiseSchedule::index(std::size_t t) const {
    if (t < 1 || t > betas_.size()) {
        throw ValueError("timestep " + std::to_string(t) + " outside [1, " +
                         std::to_string(betas_.size()) + "]");
    }
    return t - 1;
}

Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& schedule) {
    if (!x0.same_shape(eps)) {
        throw ShapeError("q_sample: noise shape " + eps.shape_str() + " differs from data " +
                         x0.shape_str());
    }
    const double abar = schedule.alpha_bar(t);
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = signal * x0[i] + noise * eps[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimizer

void TrainingConfig::validate() const {
    if (!(p_uncond >= 0.0 && p_uncond < 1.0)) {
        throw ValueError("p_uncond must lie in [0, 1)");
    }
    if (!(learning_rate > 0.0)) {
        throw ValueError("learning rate must be positive");
    }
    if (batch_size == 0 || total_steps == 0) {
        throw ValueError("batch size and step count must be positive");
    }
    if (loss_every == 0) {
        throw ValueError("loss_every must be positive");
    }
}

void GuidanceConfig::validate() const {
    if (!(scale >= 0.0)) {
        throw ValueError("guidance scale must be >= 0");
    }
}

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(ParamStore& params, const GradientMap& grads) {
    ++steps_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (auto& [name, value] : params.entries()) {
        auto git = grads.find(name);
        if (git == grads.end()) {
            continue;
        }
        const Tensor& g = git->second;
        Tensor& m = m_.try_emplace(name, Tensor(value.shape())).first->second;
        Tensor& v = v_.try_emplace(name, Tensor(value.shape())).first->second;
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamOptimizer::restore(std::map<std::string, Tensor> m, std::map<std::string, Tensor> v,
                            std::size_t steps) {
    m_ = std::move(m);
    v_ = std::move(v);
    steps_ = steps;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(DenoiserModel& model, const std::vector<SyntheticClipRecord>& records,
                  const TrainingConfig& config, const NoiseSchedule& schedule, std::uint64_t seed,
                  AdamOptimizer& optimizer, std::size_t start_step, const StepHook& hook) {
    config.validate();
    if (records.empty()) {
        throw ValueError("train: dataset is empty");
    }
    if (schedule.timesteps() != model.config().timesteps) {
        throw CompatError("train: schedule has " + std::to_string(schedule.timesteps()) +
                          " timesteps, model expects " +
                          std::to_string(model.config().timesteps));
    }
    for (const auto& rec : records) {
        if (rec.clip.frames != model.config().frames ||
            rec.clip.dims != model.config().pose_dims) {
            throw CompatError("train: record " + rec.id + " shape does not match the model");
        }
    }

    TrainResult result;
    std::vector<double> losses;
    losses.reserve(config.total_steps);

    for (std::size_t local = 1; local <= config.total_steps; ++local) {
        const std::size_t step = start_step + local;
        Rng batch_rng(seed, "train/batch", step);
        std::vector<std::size_t> batch(config.batch_size);
        for (std::size_t& idx : batch) {
            idx = batch_rng.uniform_int(records.size());
        }

        GradientMap grads;
        TrainingLossStats stats = training_loss(model, records, batch, schedule, config.p_uncond,
                                                model.config().initial_frames, seed, step, &grads);
        if (!std::isfinite(stats.loss)) {
            throw NumericError("training diverged: non-finite loss at step " +
                               std::to_string(step));
        }
        optimizer.step(model.params(), grads);
        losses.push_back(stats.loss);
        result.final_loss = stats.loss;
        result.steps_run = local;
        result.last_step = step;

        if (step % config.loss_every == 0 || local == config.total_steps) {
            result.loss_curve.emplace_back(step, stats.loss);
        }
        if (hook) {
            hook(step, stats.loss);
        }

        // Plateau stop on the window-smoothed loss.
        if (config.plateau_window > 0 && losses.size() >= 2 * config.plateau_window &&
            losses.size() % config.plateau_window == 0) {
            const auto end = losses.end();
            const double recent =
                std::accumulate(end - static_cast<std::ptrdiff_t>(config.plateau_window), end, 0.0) /
                static_cast<double>(config.plateau_window);
            const double previous =
                std::accumulate(end - static_cast<std::ptrdiff_t>(2 * config.plateau_window),
                                end - static_cast<std::ptrdiff_t>(config.plateau_window), 0.0) /
                static_cast<double>(config.plateau_window);
            if (previous - recent < config.plateau_tolerance * std::fabs(previous)) {
                result.plateau_stopped = true;
                break;
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Guided reverse process

Tensor guided_noise(const DenoiserModel& model, const Tensor& x_t, const Context& ctx,
                    std::size_t t, const GuidanceConfig& guidance) {
    guidance.validate();
    if (ctx.uncond_mask) {
        throw ValueError("guided_noise: context must be unmasked; the unconditional branch is "
                         "evaluated internally");
    }
    const double s = guidance.scale;
    if (!guidance.strict && s == 1.0) {
        return model.predict_noise(x_t, ctx, t);
    }

    Context masked = ctx;
    masked.uncond_mask = true;
    Tensor eps_u = model.predict_noise(x_t, masked, t);
    Tensor eps_c = model.predict_noise(x_t, ctx, t);
    if (s == 1.0) {
        return eps_c;
    }
    if (s == 0.0) {
        return eps_u;
    }
    Tensor out(eps_u.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = eps_u[i] + s * (eps_c[i] - eps_u[i]);
    }
    return out;
}

Tensor reverse_step(const Tensor& x_t, const Tensor& eps_hat, std::size_t t, const Tensor& z,
                    const NoiseSchedule& schedule) {
    if (!x_t.same_shape(eps_hat) || !x_t.same_shape(z)) {
        throw ShapeError("reverse_step: mismatched shapes");
    }
    const double alpha = schedule.alpha(t);
    const double abar = schedule.alpha_bar(t);
    const double sigma = schedule.sigma(t);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    const double eps_coef = (1.0 - alpha) / std::sqrt(1.0 - abar);
    Tensor out(x_t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = inv_sqrt_alpha * (x_t[i] - eps_coef * eps_hat[i]) + sigma * z[i];
    }
    return out;
}

GestureClip sample(const DenoiserModel& model, const Context& ctx, const NoiseSchedule& schedule,
                   const GuidanceConfig& guidance, const StabilizerConfig& stabilizer,
                   std::uint64_t seed) {
    guidance.validate();
    stabilizer.validate();
    if (ctx.uncond_mask) {
        throw ValueError("sample: context must be unmasked");
    }
    const std::size_t timesteps = model.config().timesteps;
    if (schedule.timesteps() != timesteps) {
        throw CompatError("sample: schedule timesteps differ from the model");
    }
    if (stabilizer.timesteps != timesteps) {
        throw CompatError("sample: stabilizer timesteps differ from the model");
    }
    if (ctx.audio.frames() != model.config().frames) {
        throw CompatError("sample: context frames differ from the model");
    }

    const std::size_t n = model.config().frames;
    const std::size_t d = model.config().pose_dims;

    Rng init_rng(seed, "sample/init");
    Tensor x({n, d});
    init_rng.fill_normal({x.data(), x.size()});

    for (std::size_t t = timesteps; t >= 1; --t) {
        Tensor eps_hat = guided_noise(model, x, ctx, t, guidance);
        Tensor z({n, d});
        if (t > 1) {
            Rng z_rng(seed, "sample/z", t);
            z = sample_stabilizer_noise(stabilizer, t, n, d, z_rng);
        }
        x = reverse_step(x, eps_hat, t, z, schedule);
    }

    GestureClip clip;
    clip.frames = n;
    clip.dims = d;
    clip.values = std::move(x);
    clip.normalized = false;
    return clip;
}

} // namespace seqdiff
