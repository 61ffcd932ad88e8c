#include "seqdiff/denoiser.hpp"

#include <cmath>

#include "seqdiff/rng.hpp"

namespace seqdiff {

void DenoiserConfig::validate() const {
    if (hidden_dim == 0 || num_blocks == 0 || num_heads == 0 || pose_dims == 0 ||
        audio_dims == 0 || frames == 0 || timesteps == 0 || ff_mult == 0) {
        throw ValueError("denoiser config: all counts must be positive");
    }
    if (hidden_dim % num_heads != 0) {
        throw ValueError("denoiser config: hidden_dim must be divisible by num_heads");
    }
    if (initial_frames >= frames) {
        throw ValueError("denoiser config: initial_frames must be smaller than frames");
    }
    if (pose_dims % 3 != 0) {
        throw ValueError("denoiser config: pose_dims must be 3*(J-1)");
    }
    if (activation != "gelu") {
        throw ValueError("denoiser config: unsupported activation " + activation);
    }
}

nlohmann::json DenoiserConfig::to_json() const {
    return {{"hidden_dim", hidden_dim},
            {"num_blocks", num_blocks},
            {"num_heads", num_heads},
            {"pose_dims", pose_dims},
            {"audio_dims", audio_dims},
            {"initial_frames", initial_frames},
            {"frames", frames},
            {"timesteps", timesteps},
            {"ff_mult", ff_mult},
            {"positional_encoding", positional_encoding},
            {"activation", activation}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.num_blocks = j.at("num_blocks").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.pose_dims = j.at("pose_dims").get<std::size_t>();
    c.audio_dims = j.at("audio_dims").get<std::size_t>();
    c.initial_frames = j.at("initial_frames").get<std::size_t>();
    c.frames = j.at("frames").get<std::size_t>();
    c.timesteps = j.at("timesteps").get<std::size_t>();
    c.ff_mult = j.at("ff_mult").get<std::size_t>();
    c.positional_encoding = j.at("positional_encoding").get<bool>();
    c.activation = j.at("activation").get<std::string>();
    c.validate();
    return c;
}

Tensor sinusoid_embedding(std::size_t position, std::size_t dim) {
    Tensor out({1, dim});
    const std::size_t half = dim / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
        const double x = static_cast<double>(position) * freq;
        out.at(0, 2 * k) = std::sin(x);
        out.at(0, 2 * k + 1) = std::cos(x);
    }
    if (dim % 2 == 1) {
        out.at(0, dim - 1) = 0.0;
    }
    return out;
}

AttentionResult attention(Tape& tape, Var q, Var k, Var v) {
    const Tensor& qv = tape.value(q);
    const Tensor& kv = tape.value(k);
    const Tensor& vv = tape.value(v);
    if (qv.cols() != kv.cols() || kv.rows() != vv.rows()) {
        throw ShapeError("attention: incompatible shapes " + qv.shape_str() + ", " +
                         kv.shape_str() + ", " + vv.shape_str());
    }
    Var scores = tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(qv.cols())));
    Var weights = tape.softmax_rows(scores);
    return {tape.matmul(weights, v), weights};
}

namespace {

Tensor init_tensor(std::vector<std::size_t> shape, std::uint64_t seed, const std::string& name,
                   double scale) {
    Tensor t(std::move(shape));
    if (scale > 0.0) {
        Rng rng(seed, "init/" + name);
        for (double& x : t.values()) {
            x = scale * (2.0 * rng.uniform() - 1.0);
        }
    }
    return t;
}

Tensor positional_encoding_table(std::size_t frames, std::size_t dim) {
    Tensor out({frames, dim});
    for (std::size_t i = 0; i < frames; ++i) {
        const Tensor row = sinusoid_embedding(i, dim);
        std::copy(row.data(), row.data() + dim, out.data() + i * dim);
    }
    return out;
}

} // namespace

DenoiserModel DenoiserModel::create(const DenoiserConfig& config, std::uint64_t seed) {
    config.validate();
    DenoiserModel model;
    model.config_ = config;
    ParamStore& p = model.params_;

    auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        p.create(name + ".weight", init_tensor({in, out}, seed, name + ".weight", a));
        p.create(name + ".bias", Tensor({out}));
    };
    auto norm = [&](const std::string& name, std::size_t dim) {
        p.create(name + ".gain", Tensor::full({dim}, 1.0));
        p.create(name + ".bias", Tensor({dim}));
    };

    const std::size_t h = config.hidden_dim;
    linear("input", config.token_dims(), h);
    linear("time", h, h);
    p.create("null_context", init_tensor({config.context_dims()}, seed, "null_context", 0.02));
    for (std::size_t b = 0; b < config.num_blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b) + ".";
        norm(prefix + "ln1", h);
        linear(prefix + "attn.q", h, h);
        linear(prefix + "attn.k", h, h);
        linear(prefix + "attn.v", h, h);
        linear(prefix + "attn.out", h, h);
        norm(prefix + "ln2", h);
        linear(prefix + "ff1", h, h * config.ff_mult);
        linear(prefix + "ff2", h * config.ff_mult, h);
    }
    norm("final", h);
    linear("head", h, config.pose_dims);
    return model;
}

void DenoiserModel::check_inputs(const Tensor& x_t, const Context& ctx, std::size_t t) const {
    if (x_t.rank() != 2 || x_t.rows() != config_.frames || x_t.cols() != config_.pose_dims) {
        throw ShapeError("denoiser input must be " + std::to_string(config_.frames) + "x" +
                         std::to_string(config_.pose_dims) + ", got " + x_t.shape_str());
    }
    if (ctx.audio.frames() != config_.frames) {
        throw ShapeError("context audio has " + std::to_string(ctx.audio.frames()) +
                         " frames, clip has " + std::to_string(config_.frames));
    }
    if (ctx.initial_poses.rows() != config_.initial_frames ||
        ctx.initial_poses.cols() != config_.pose_dims) {
        throw ShapeError("initial poses must be " + std::to_string(config_.initial_frames) + "x" +
                         std::to_string(config_.pose_dims));
    }
    if (t < 1 || t > config_.timesteps) {
        throw ValueError("timestep " + std::to_string(t) + " outside [1, " +
                         std::to_string(config_.timesteps) + "]");
    }
}

Tensor DenoiserModel::build_tokens(const Tensor& x_t, const Context& ctx) const {
    Tape tape(&params_);
    Var tokens = build_tokens_var(tape, tape.constant(x_t), ctx);
    return tape.value(tokens);
}

Var DenoiserModel::build_tokens_var(Tape& tape, Var x_t, const Context& ctx) const {
    const std::size_t n = config_.frames;
    const std::size_t d = config_.pose_dims;
    const Tensor& xv = tape.value(x_t);
    if (xv.rank() != 2 || xv.rows() != n || xv.cols() != d) {
        throw ShapeError("token build: pose input " + xv.shape_str());
    }
    if (ctx.audio.frames() != n) {
        throw ShapeError("token build: context frames " + std::to_string(ctx.audio.frames()) +
                         " != " + std::to_string(n));
    }

    Var context_channels;
    if (ctx.uncond_mask) {
        context_channels = tape.broadcast_rows(tape.param("null_context"), n);
    } else {
        Tensor chan({n, config_.context_dims()});
        for (std::size_t i = 0; i < n; ++i) {
            double* row = chan.data() + i * config_.context_dims();
            const double* audio = ctx.audio.values.data() + i * config_.audio_dims;
            std::copy(audio, audio + config_.audio_dims, row);
            if (i < config_.initial_frames) {
                const double* init = ctx.initial_poses.data() + i * d;
                std::copy(init, init + d, row + config_.audio_dims);
                row[config_.audio_dims + d] = 1.0;
            }
        }
        context_channels = tape.constant(std::move(chan));
    }
    const Var parts[2] = {x_t, context_channels};
    return tape.concat_cols(parts);
}

Var DenoiserModel::forward_tokens(Tape& tape, Var tokens, std::size_t t) const {
    if (t < 1 || t > config_.timesteps) {
        throw ValueError("timestep " + std::to_string(t) + " outside [1, " +
                         std::to_string(config_.timesteps) + "]");
    }
    const std::size_t n = tape.value(tokens).rows();
    const std::size_t h = config_.hidden_dim;
    const std::size_t heads = config_.num_heads;
    const std::size_t head_dim = h / heads;

    auto linear = [&](Var x, const std::string& name) {
        return tape.add_rowvec(tape.matmul(x, tape.param(name + ".weight")),
                               tape.param(name + ".bias"));
    };
    auto norm = [&](Var x, const std::string& name) {
        return tape.add_rowvec(
            tape.mul_rowvec(tape.layer_norm_rows(x), tape.param(name + ".gain")),
            tape.param(name + ".bias"));
    };

    Var x = linear(tokens, "input");
    if (config_.positional_encoding) {
        x = tape.add(x, tape.constant(positional_encoding_table(n, h)));
    }
    Var temb = linear(tape.constant(sinusoid_embedding(t, h)), "time");
    x = tape.add(x, tape.broadcast_rows(temb, n));

    for (std::size_t b = 0; b < config_.num_blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b) + ".";
        Var pre = norm(x, prefix + "ln1");
        Var q = linear(pre, prefix + "attn.q");
        Var k = linear(pre, prefix + "attn.k");
        Var v = linear(pre, prefix + "attn.v");
        std::vector<Var> head_outs;
        head_outs.reserve(heads);
        for (std::size_t hd = 0; hd < heads; ++hd) {
            const std::size_t off = hd * head_dim;
            AttentionResult att = attention(tape, tape.slice_cols(q, off, head_dim),
                                            tape.slice_cols(k, off, head_dim),
                                            tape.slice_cols(v, off, head_dim));
            head_outs.push_back(att.out);
        }
        Var merged = tape.concat_cols(head_outs);
        x = tape.add(x, linear(merged, prefix + "attn.out"));

        Var pre2 = norm(x, prefix + "ln2");
        Var ff = linear(tape.gelu(linear(pre2, prefix + "ff1")), prefix + "ff2");
        x = tape.add(x, ff);
    }

    Var fin = norm(x, "final");
    eval_count_.fetch_add(1, std::memory_order_relaxed);
    return linear(fin, "head");
}

Var DenoiserModel::predict(Tape& tape, Var x_t, const Context& ctx, std::size_t t) const {
    check_inputs(tape.value(x_t), ctx, t);
    return forward_tokens(tape, build_tokens_var(tape, x_t, ctx), t);
}

Tensor DenoiserModel::predict_noise(const Tensor& x_t, const Context& ctx, std::size_t t) const {
    Tape tape(&params_);
    Var out = predict(tape, tape.constant(x_t), ctx, t);
    return tape.value(out);
}

} // namespace seqdiff
