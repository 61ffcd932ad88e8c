#include "seqdiff/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "seqdiff/checkpoint.hpp"
#include "seqdiff/plot.hpp"
#include "seqdiff/rng.hpp"
#include "seqdiff/stabilizer.hpp"
#include "seqdiff/threading.hpp"

namespace seqdiff::cli {

namespace {

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
    return buf;
}

std::vector<GestureClip> clips_of(const std::vector<SyntheticClipRecord>& records) {
    std::vector<GestureClip> clips;
    clips.reserve(records.size());
    for (const auto& r : records) {
        clips.push_back(r.clip);
    }
    return clips;
}

} // namespace

// ---------------------------------------------------------------------------
// Checkpoint wiring

void save_model_checkpoint(const std::string& path, const DenoiserModel& model, double beta_1,
                           double beta_t, const AdamOptimizer* optimizer, std::uint64_t seed,
                           const nlohmann::json& command_config) {
    nlohmann::json config;
    config["kind"] = "denoiser";
    config["denoiser"] = model.config().to_json();
    config["schedule"] = {{"timesteps", model.config().timesteps},
                          {"beta_1", beta_1},
                          {"beta_T", beta_t}};
    config["seed"] = seed;
    config["command_config"] = command_config;

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (const auto& [name, tensor] : model.params().entries()) {
        tensors.emplace_back(name, &tensor);
    }
    if (optimizer != nullptr) {
        config["optimizer"] = {{"steps", optimizer->steps_taken()},
                               {"learning_rate", optimizer->learning_rate()}};
        for (const auto& [name, tensor] : optimizer->first_moments()) {
            tensors.emplace_back("adam.m/" + name, &tensor);
        }
        for (const auto& [name, tensor] : optimizer->second_moments()) {
            tensors.emplace_back("adam.v/" + name, &tensor);
        }
    }
    save_checkpoint(path, config, tensors);
}

LoadedModel load_model_checkpoint(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.config.value("kind", "") != "denoiser") {
        throw CompatError(path + ": not a denoiser checkpoint");
    }
    LoadedModel loaded;
    loaded.config = ckpt.config;
    loaded.checksum = ckpt.checksum;
    loaded.seed = ckpt.config.value("seed", std::uint64_t{0});
    const DenoiserConfig cfg = DenoiserConfig::from_json(ckpt.config.at("denoiser"));
    loaded.beta_1 = ckpt.config.at("schedule").at("beta_1").get<double>();
    loaded.beta_t = ckpt.config.at("schedule").at("beta_T").get<double>();

    loaded.model = DenoiserModel::create(cfg, loaded.seed);
    for (auto& [name, tensor] : loaded.model.params().entries()) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) {
            throw ParseError(path + ": checkpoint is missing parameter " + name);
        }
        if (it->second.shape() != tensor.shape()) {
            throw CompatError(path + ": parameter " + name + " has shape " +
                              it->second.shape_str() + ", expected " + tensor.shape_str());
        }
        tensor = it->second;
    }

    if (ckpt.config.contains("optimizer")) {
        std::map<std::string, Tensor> m, v;
        for (const auto& [name, tensor] : ckpt.tensors) {
            if (name.rfind("adam.m/", 0) == 0) {
                m.emplace(name.substr(7), tensor);
            } else if (name.rfind("adam.v/", 0) == 0) {
                v.emplace(name.substr(7), tensor);
            }
        }
        loaded.optimizer_steps = ckpt.config.at("optimizer").at("steps").get<std::size_t>();
        loaded.optimizer = AdamOptimizer(
            ckpt.config.at("optimizer").at("learning_rate").get<double>());
        loaded.optimizer.restore(std::move(m), std::move(v), loaded.optimizer_steps);
    }
    return loaded;
}

void save_extractor_checkpoint(const std::string& path, const FeatureExtractor& extractor,
                               const nlohmann::json& command_config) {
    nlohmann::json config;
    config["kind"] = "feature_extractor";
    config["extractor"] = extractor.config().to_json();
    config["command_config"] = command_config;
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (const auto& [name, tensor] : extractor.params().entries()) {
        tensors.emplace_back(name, &tensor);
    }
    save_checkpoint(path, config, tensors);
}

FeatureExtractor load_extractor_checkpoint(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.config.value("kind", "") != "feature_extractor") {
        throw CompatError(path + ": not a feature-extractor checkpoint");
    }
    const ExtractorConfig cfg = ExtractorConfig::from_json(ckpt.config.at("extractor"));
    ParamStore params;
    for (const auto& [name, tensor] : ckpt.tensors) {
        params.create(name, tensor);
    }
    return FeatureExtractor(cfg, std::move(params));
}

std::vector<SyntheticClipRecord> run_sampler(const DenoiserModel& model,
                                             const NoiseSchedule& schedule,
                                             const std::vector<SyntheticClipRecord>& sources,
                                             std::span<const std::size_t> indices,
                                             const GuidanceConfig& guidance,
                                             const StabilizerConfig& stabilizer,
                                             std::uint64_t seed) {
    std::vector<SyntheticClipRecord> out(indices.size());
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    parallel_for(idx.size(), [&](std::size_t i) {
        const SyntheticClipRecord& src = sources.at(idx[i]);
        const Context ctx = src.context(model.config().initial_frames, false);
        const std::uint64_t clip_seed = fnv1a64_str(src.id, seed);
        SyntheticClipRecord rec;
        rec.id = src.id;
        rec.clip = sample(model, ctx, schedule, guidance, stabilizer, clip_seed);
        rec.audio = src.audio;
        rec.audio_beat_times = src.audio_beat_times;
        rec.style_seed = src.style_seed;
        out[i] = std::move(rec);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Command options

namespace {

struct GenDataOpts {
    std::uint64_t seed = 1;
    std::size_t clips = 2000;
    std::size_t joints = 10;
    std::size_t frames = 34;
    std::size_t initial_frames = 4;
    double beat_rate = 0.125;
    double noise_level = 0.03;
    std::string out;
    bool deterministic = false;

    nlohmann::json echo() const {
        return {{"seed", seed},           {"clips", clips},
                {"joints", joints},       {"frames", frames},
                {"initial_frames", initial_frames}, {"beat_rate", beat_rate},
                {"noise_level", noise_level}};
    }
};

struct TrainOpts {
    std::string data;
    std::string out;
    std::string loss_log;
    std::string resume;
    std::uint64_t seed = 1;
    std::size_t timesteps = 500;
    double beta_1 = 1e-4;
    double beta_t = 0.02;
    std::size_t hidden = 256;
    std::size_t blocks = 8;
    std::size_t heads = 4;
    std::size_t ff_mult = 4;
    bool no_positional_encoding = false;
    std::size_t initial_frames = 4;
    std::size_t steps = 5000;
    std::size_t batch = 128;
    double lr = 5e-4;
    double p_uncond = 0.1;
    std::size_t loss_every = 10;
    std::size_t checkpoint_every = 500;
    std::size_t plateau_window = 1000;
    double plateau_tol = 1e-3;
    bool deterministic = false;

    nlohmann::json echo() const {
        return {{"seed", seed},
                {"schedule.timesteps", timesteps},
                {"schedule.beta_1", beta_1},
                {"schedule.beta_T", beta_t},
                {"denoiser.hidden_dim", hidden},
                {"denoiser.num_blocks", blocks},
                {"denoiser.num_heads", heads},
                {"denoiser.ff_mult", ff_mult},
                {"denoiser.positional_encoding", !no_positional_encoding},
                {"denoiser.initial_frames", initial_frames},
                {"training.steps", steps},
                {"training.batch_size", batch},
                {"training.learning_rate", lr},
                {"training.p_uncond", p_uncond},
                {"training.loss_every", loss_every},
                {"training.checkpoint_every", checkpoint_every},
                {"training.plateau_window", plateau_window},
                {"training.plateau_tolerance", plateau_tol}};
    }
};

struct SampleOpts {
    std::string ckpt;
    std::string data;
    std::string out;
    std::size_t count = 16;
    std::vector<std::size_t> indices;
    double guidance_scale = 1.0;
    bool strict_guidance = false;
    std::string stabilizer = "smooth";
    std::size_t t0 = 25;
    std::string sigma_a = "quadratic";
    std::uint64_t seed = 1;
    bool deterministic = false;

    nlohmann::json echo() const {
        return {{"guidance_scale", guidance_scale}, {"strict_guidance", strict_guidance},
                {"stabilizer", stabilizer},         {"t0", t0},
                {"sigma_a", sigma_a},               {"seed", seed},
                {"count", count}};
    }
};

struct EvaluateOpts {
    std::string generated;
    std::string reference;
    std::string extractor;
    bool train_extractor = false;
    std::string extractor_out;
    std::size_t extractor_steps = 1200;
    std::size_t extractor_hidden = 128;
    std::size_t extractor_batch = 32;
    double extractor_lr = 1e-3;
    std::string out;
    std::uint64_t seed = 1;
    std::size_t diversity_samples = 500;
    double bc_threshold_factor = 0.3;
    double bc_sigma = 0.1;
    double fps = 15.0;
    bool deterministic = false;

    nlohmann::json echo() const {
        return {{"seed", seed},
                {"diversity_samples", diversity_samples},
                {"bc_threshold_factor", bc_threshold_factor},
                {"bc_sigma", bc_sigma},
                {"fps", fps},
                {"extractor_steps", extractor_steps},
                {"extractor_hidden", extractor_hidden}};
    }
};

struct AblateOpts {
    std::string data;
    std::string reference;
    std::string ckpt_guided;
    std::string ckpt_unguided;
    std::string extractor;
    bool train_extractor = false;
    std::string out;
    std::vector<std::string> variants{"base", "no-stabilizer", "no-guidance", "full"};
    std::size_t count = 64;
    double guidance_scale = 2.0;
    std::size_t t0 = 25;
    std::string sigma_a = "quadratic";
    std::uint64_t seed = 1;
    std::size_t diversity_samples = 500;
    double bc_threshold_factor = 0.3;
    double bc_sigma = 0.1;
    double fps = 15.0;
    std::size_t extractor_steps = 1200;
    std::size_t extractor_hidden = 128;
    bool deterministic = false;
};

struct PlotOpts {
    std::string clips;
    std::string out_dir;
    std::size_t max_clips = 4;
    std::vector<std::size_t> frames;
    std::vector<double> bone_lengths;
    std::string loss_csv;
    std::string report;
    bool deterministic = false;
};

// ---------------------------------------------------------------------------
// Command bodies

int cmd_gen_data(const GenDataOpts& o) {
    CorpusParams params;
    params.seed = o.seed;
    params.num_clips = o.clips;
    params.joints = o.joints;
    params.frames = o.frames;
    params.initial_frames = o.initial_frames;
    params.beat_rate = o.beat_rate;
    params.noise_level = o.noise_level;
    params.validate();

    const auto records = generate_synthetic_corpus(params);
    nlohmann::json meta;
    meta["command"] = "gen-data";
    meta["config"] = o.echo();
    if (!o.deterministic) {
        meta["created"] = timestamp_now();
    }
    write_dataset(o.out, records, &meta);
    std::cout << "wrote " << records.size() << " clips to " << o.out << "\n";
    return exit_code::ok;
}

void write_loss_csv(const std::string& path, const std::vector<std::pair<std::size_t, double>>& curve) {
    std::string buf = "step,loss\n";
    char line[64];
    for (const auto& [step, loss] : curve) {
        std::snprintf(line, sizeof(line), "%zu,%.17g\n", step, loss);
        buf += line;
    }
    atomic_write_file(path, buf);
}

int cmd_train(const TrainOpts& o) {
    const Dataset ds = read_dataset(o.data);
    if (ds.records.empty()) {
        throw ValueError("train: dataset has no records");
    }
    const std::size_t frames = ds.records.front().clip.frames;
    const std::size_t pose_dims = ds.records.front().clip.dims;

    DenoiserModel model;
    AdamOptimizer opt(o.lr, 0.9, 0.999);
    std::size_t start_step = 0;
    double beta_1 = o.beta_1, beta_t = o.beta_t;

    if (!o.resume.empty()) {
        LoadedModel loaded = load_model_checkpoint(o.resume);
        model = std::move(loaded.model);
        opt = std::move(loaded.optimizer);
        start_step = loaded.optimizer_steps;
        beta_1 = loaded.beta_1;
        beta_t = loaded.beta_t;
        if (model.config().frames != frames || model.config().pose_dims != pose_dims) {
            throw CompatError("resume: dataset shape does not match the checkpoint");
        }
    } else {
        DenoiserConfig cfg;
        cfg.hidden_dim = o.hidden;
        cfg.num_blocks = o.blocks;
        cfg.num_heads = o.heads;
        cfg.ff_mult = o.ff_mult;
        cfg.pose_dims = pose_dims;
        cfg.frames = frames;
        cfg.initial_frames = o.initial_frames;
        cfg.timesteps = o.timesteps;
        cfg.positional_encoding = !o.no_positional_encoding;
        model = DenoiserModel::create(cfg, o.seed);
    }

    const NoiseSchedule schedule = NoiseSchedule::linear(model.config().timesteps, beta_1, beta_t);

    TrainingConfig tc;
    tc.p_uncond = o.p_uncond;
    tc.learning_rate = o.lr;
    tc.batch_size = o.batch;
    tc.total_steps = o.steps;
    tc.loss_every = o.loss_every;
    tc.plateau_window = o.plateau_window;
    tc.plateau_tolerance = o.plateau_tol;
    tc.validate();

    const std::string loss_path = o.loss_log.empty() ? o.out + ".loss.csv" : o.loss_log;
    std::vector<std::pair<std::size_t, double>> curve;
    auto checkpoint_hook = [&](std::size_t step, double loss) {
        if (step % o.loss_every == 0) {
            curve.emplace_back(step, loss);
        }
        if (o.checkpoint_every > 0 && step % o.checkpoint_every == 0) {
            save_model_checkpoint(o.out, model, beta_1, beta_t, &opt, o.seed, o.echo());
            write_loss_csv(loss_path, curve);
        }
    };

    TrainResult result;
    try {
        result = train(model, ds.records, tc, schedule, o.seed, opt, start_step, checkpoint_hook);
    } catch (const NumericError&) {
        write_loss_csv(loss_path, curve);
        throw; // periodic checkpoint (if any) stays on disk
    }

    save_model_checkpoint(o.out, model, beta_1, beta_t, &opt, o.seed, o.echo());
    if (curve.empty() || curve.back().first != result.last_step) {
        curve.emplace_back(result.last_step, result.final_loss);
    }
    write_loss_csv(loss_path, curve);
    std::cout << "trained " << result.steps_run << " steps"
              << (result.plateau_stopped ? " (plateau stop)" : "") << ", final loss "
              << result.final_loss << "\n"
              << "checkpoint: " << o.out << "\n"
              << "loss log: " << loss_path << "\n";
    return exit_code::ok;
}

int cmd_sample(const SampleOpts& o) {
    LoadedModel loaded = load_model_checkpoint(o.ckpt);
    const Dataset ds = read_dataset(o.data);
    if (ds.records.empty()) {
        throw ValueError("sample: context dataset has no records");
    }
    const DenoiserModel& model = loaded.model;
    if (ds.records.front().clip.dims != model.config().pose_dims ||
        ds.records.front().clip.frames != model.config().frames) {
        throw CompatError("sample: dataset clip shape does not match the checkpoint");
    }

    std::vector<std::size_t> indices = o.indices;
    if (indices.empty()) {
        const std::size_t n = std::min(o.count, ds.records.size());
        indices.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            indices[i] = i;
        }
    }
    for (std::size_t idx : indices) {
        if (idx >= ds.records.size()) {
            throw ValueError("sample: index " + std::to_string(idx) + " out of range");
        }
    }

    GuidanceConfig guidance;
    guidance.scale = o.guidance_scale;
    guidance.strict = o.strict_guidance;
    StabilizerConfig stab;
    stab.mode = stabilizer_mode_from_string(o.stabilizer);
    stab.t0 = o.t0;
    stab.sigma_shape = sigma_shape_from_string(o.sigma_a);
    stab.timesteps = model.config().timesteps;
    stab.validate();

    const NoiseSchedule schedule = loaded.schedule();
    const auto generated = run_sampler(model, schedule, ds.records, indices, guidance, stab, o.seed);

    nlohmann::json meta;
    meta["command"] = "sample";
    meta["checkpoint_checksum"] = loaded.checksum;
    meta["guidance_scale"] = o.guidance_scale;
    meta["stabilizer"] = o.stabilizer;
    meta["seed"] = o.seed;
    meta["config"] = o.echo();
    if (!o.deterministic) {
        meta["created"] = timestamp_now();
    }
    write_dataset(o.out, generated, &meta);
    std::cout << "sampled " << generated.size() << " clips to " << o.out << "\n";
    return exit_code::ok;
}

FeatureExtractor acquire_extractor(const std::string& path, bool train_it,
                                   const std::string& save_path, std::size_t steps,
                                   std::size_t hidden, std::size_t batch, double lr,
                                   std::uint64_t seed,
                                   const std::vector<SyntheticClipRecord>& reference,
                                   const nlohmann::json& echo) {
    if (!path.empty()) {
        return load_extractor_checkpoint(path);
    }
    if (!train_it) {
        throw UsageError("need --extractor <ckpt> or --train-extractor");
    }
    ExtractorTrainOptions opts;
    opts.steps = steps;
    opts.hidden = hidden;
    opts.batch_size = batch;
    opts.learning_rate = lr;
    ExtractorTrainResult result = train_feature_extractor(clips_of(reference), seed, opts);
    if (result.holdout_mse >= result.mean_baseline_mse) {
        throw NumericError("extractor failed to beat the mean baseline (mse " +
                           std::to_string(result.holdout_mse) + " vs " +
                           std::to_string(result.mean_baseline_mse) + ")");
    }
    if (!save_path.empty()) {
        save_extractor_checkpoint(save_path, result.extractor, echo);
    }
    return std::move(result.extractor);
}

MetricReport evaluate_sets(const std::vector<SyntheticClipRecord>& generated,
                           const std::vector<SyntheticClipRecord>& reference,
                           const FeatureExtractor& extractor, std::uint64_t seed,
                           std::size_t diversity_samples, const BcOptions& bc_opts,
                           const nlohmann::json& echo) {
    MetricReport report;
    report.fgd = fgd(clips_of(generated), clips_of(reference), extractor);

    std::vector<std::vector<std::size_t>> beats;
    std::vector<const GestureClip*> gen_clips;
    std::vector<std::string> ids;
    beats.reserve(generated.size());
    for (const auto& rec : generated) {
        beats.push_back(rec.audio_beat_times);
        gen_clips.push_back(&rec.clip);
        ids.push_back(rec.id);
    }
    report.bc = bc_over_set(beats, gen_clips, bc_opts);
    report.diversity = diversity(ids, gen_clips, extractor, diversity_samples, seed);

    double jerk = 0.0;
    for (const auto& rec : generated) {
        jerk += temporal_jerk(rec.clip.values);
    }
    report.temporal_jerk = jerk / static_cast<double>(generated.size());

    report.n_generated = generated.size();
    report.n_real = reference.size();
    report.extractor_checksum = extractor.checksum();
    report.config_echo = echo;
    report.validate();
    return report;
}

int cmd_evaluate(const EvaluateOpts& o) {
    const Dataset generated = read_dataset(o.generated);
    const Dataset reference = read_dataset(o.reference);
    if (generated.records.size() < 2 || reference.records.size() < 2) {
        throw ValueError("evaluate: need at least 2 clips on each side");
    }

    const FeatureExtractor extractor =
        acquire_extractor(o.extractor, o.train_extractor, o.extractor_out, o.extractor_steps,
                          o.extractor_hidden, o.extractor_batch, o.extractor_lr, o.seed,
                          reference.records, o.echo());

    BcOptions bc_opts;
    bc_opts.threshold_factor = o.bc_threshold_factor;
    bc_opts.sigma = o.bc_sigma;
    bc_opts.fps = o.fps;

    const std::size_t div_samples = std::min(o.diversity_samples, generated.records.size());
    MetricReport report = evaluate_sets(generated.records, reference.records, extractor, o.seed,
                                        std::max<std::size_t>(div_samples, 2), bc_opts, o.echo());

    const std::string text = report.to_json().dump(2) + "\n";
    if (!o.out.empty()) {
        atomic_write_file(o.out, text);
    }
    std::cout << text;
    return exit_code::ok;
}

int cmd_ablate(const AblateOpts& o) {
    if (o.variants.empty()) {
        throw UsageError("ablate: variant list is empty");
    }
    for (const auto& v : o.variants) {
        if (v != "base" && v != "no-stabilizer" && v != "no-guidance" && v != "full") {
            throw UsageError("ablate: unknown variant " + v);
        }
    }

    const Dataset contexts = read_dataset(o.data);
    const Dataset reference = read_dataset(o.reference);
    if (contexts.records.empty() || reference.records.size() < 2) {
        throw ValueError("ablate: need context records and >= 2 reference clips");
    }

    const bool needs_guided =
        std::any_of(o.variants.begin(), o.variants.end(),
                    [](const std::string& v) { return v == "no-stabilizer" || v == "full"; });
    const bool needs_unguided =
        std::any_of(o.variants.begin(), o.variants.end(),
                    [](const std::string& v) { return v == "base" || v == "no-guidance"; });

    std::optional<LoadedModel> guided, unguided;
    if (needs_guided) {
        if (o.ckpt_guided.empty()) {
            throw IoError("ablate: missing guided checkpoint (--ckpt-guided)");
        }
        guided = load_model_checkpoint(o.ckpt_guided);
    }
    if (needs_unguided) {
        if (o.ckpt_unguided.empty()) {
            throw IoError("ablate: missing unguided checkpoint (--ckpt-unguided)");
        }
        unguided = load_model_checkpoint(o.ckpt_unguided);
    }

    nlohmann::json echo = {{"seed", o.seed},
                           {"count", o.count},
                           {"guidance_scale", o.guidance_scale},
                           {"t0", o.t0},
                           {"sigma_a", o.sigma_a}};
    const FeatureExtractor extractor = acquire_extractor(
        o.extractor, o.train_extractor, "", o.extractor_steps, o.extractor_hidden, 32, 1e-3,
        o.seed, reference.records, echo);

    std::vector<std::size_t> indices(std::min(o.count, contexts.records.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        indices[i] = i;
    }

    BcOptions bc_opts;
    bc_opts.threshold_factor = o.bc_threshold_factor;
    bc_opts.sigma = o.bc_sigma;
    bc_opts.fps = o.fps;

    auto run_variant = [&](const std::string& name) -> MetricReport {
        const bool use_guidance = name == "no-stabilizer" || name == "full";
        const bool use_smooth = name == "no-guidance" || name == "full";
        const LoadedModel& lm = use_guidance ? *guided : *unguided;
        GuidanceConfig g;
        g.scale = use_guidance ? o.guidance_scale : 1.0;
        StabilizerConfig st;
        st.mode = use_smooth ? StabilizerMode::smooth : StabilizerMode::naive;
        st.t0 = o.t0;
        st.sigma_shape = sigma_shape_from_string(o.sigma_a);
        st.timesteps = lm.model.config().timesteps;
        const auto generated =
            run_sampler(lm.model, lm.schedule(), contexts.records, indices, g, st, o.seed);
        nlohmann::json variant_echo = echo;
        variant_echo["variant"] = name;
        const std::size_t div = std::max<std::size_t>(
            2, std::min(o.diversity_samples, generated.size()));
        return evaluate_sets(generated, reference.records, extractor, o.seed, div, bc_opts,
                             variant_echo);
    };

    nlohmann::json table = nlohmann::json::array();
    std::map<std::string, double> fgd_by_variant;
    std::printf("%-14s %10s %8s %10s %12s\n", "variant", "fgd", "bc", "diversity", "jerk");
    for (const auto& name : o.variants) {
        const MetricReport report = run_variant(name);
        fgd_by_variant[name] = report.fgd;
        nlohmann::json row;
        row["variant"] = name;
        row["report"] = report.to_json();
        table.push_back(std::move(row));
        std::printf("%-14s %10.4f %8.4f %10.4f %12.6f\n", name.c_str(), report.fgd, report.bc,
                    report.diversity, report.temporal_jerk);
    }

    nlohmann::json result;
    result["rows"] = table;
    if (fgd_by_variant.count("full") && fgd_by_variant.count("base")) {
        const bool ok = fgd_by_variant["full"] <= fgd_by_variant["base"];
        result["full_vs_base_fgd_ok"] = ok;
        std::printf("ordering full.fgd <= base.fgd: %s\n", ok ? "ok" : "VIOLATED");
    }
    if (!o.out.empty()) {
        atomic_write_file(o.out, result.dump(2) + "\n");
    }
    return exit_code::ok;
}

int cmd_plot(const PlotOpts& o) {
    if (o.clips.empty() && o.loss_csv.empty() && o.report.empty()) {
        throw UsageError("plot: need --clips, --loss or --report");
    }
    std::filesystem::create_directories(o.out_dir);

    if (!o.clips.empty()) {
        const Dataset ds = read_dataset(o.clips);
        const std::size_t count = std::min(o.max_clips, ds.records.size());
        for (std::size_t i = 0; i < count; ++i) {
            const auto& rec = ds.records[i];
            std::vector<std::size_t> picks = o.frames;
            if (picks.empty()) {
                picks = {0, rec.clip.frames / 2, rec.clip.frames - 1};
            }
            const std::size_t bones = rec.clip.dims / 3;
            std::vector<double> lengths = o.bone_lengths;
            if (lengths.empty()) {
                lengths.assign(bones, 1.0);
            }
            if (lengths.size() != bones) {
                throw ValueError("plot: expected " + std::to_string(bones) + " bone lengths");
            }
            std::vector<SkeletonKeyframe> kfs;
            for (std::size_t f : picks) {
                if (f >= rec.clip.frames) {
                    throw ValueError("plot: frame " + std::to_string(f) + " out of range");
                }
                const double* row = rec.clip.values.data() + f * rec.clip.dims;
                // Raw samples are not unit-normalized; rendering normalizes.
                std::vector<double> dirs(row, row + rec.clip.dims);
                for (std::size_t b = 0; b < bones; ++b) {
                    double* d = dirs.data() + 3 * b;
                    const double norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
                    if (norm < 1e-9) {
                        throw ValueError("plot: zero-length direction in clip " + rec.id);
                    }
                    d[0] /= norm;
                    d[1] /= norm;
                    d[2] /= norm;
                }
                SkeletonKeyframe kf;
                kf.label = "frame " + std::to_string(f);
                kf.joints = directions_to_joints(dirs, lengths, {0.0, 0.0, 0.0});
                kfs.push_back(std::move(kf));
            }
            std::string svg = svg_skeleton_strip(rec.id, kfs);
            if (!o.deterministic) {
                svg = "<!-- created " + timestamp_now() + " -->\n" + svg;
            }
            atomic_write_file(o.out_dir + "/" + rec.id + ".svg", svg);
        }
        std::cout << "wrote " << count << " keyframe strips to " << o.out_dir << "\n";
    }

    if (!o.loss_csv.empty()) {
        std::ifstream in(o.loss_csv);
        if (!in) {
            throw IoError("cannot open loss log: " + o.loss_csv);
        }
        std::vector<std::pair<double, double>> points;
        std::string line;
        std::getline(in, line); // header
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            const auto comma = line.find(',');
            if (comma == std::string::npos) {
                throw ParseError(o.loss_csv + ": malformed line: " + line);
            }
            points.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
        }
        std::string svg = svg_line_chart("training loss", "step", "loss", points);
        if (!o.deterministic) {
            svg = "<!-- created " + timestamp_now() + " -->\n" + svg;
        }
        atomic_write_file(o.out_dir + "/loss.svg", svg);
        std::cout << "wrote " << o.out_dir << "/loss.svg\n";
    }

    if (!o.report.empty()) {
        std::ifstream in(o.report);
        if (!in) {
            throw IoError("cannot open report: " + o.report);
        }
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(o.report + ": " + e.what());
        }
        std::vector<std::pair<std::string, double>> bars = {
            {"fgd", j.at("fgd").get<double>()},
            {"bc", j.at("bc").get<double>()},
            {"diversity", j.at("diversity").get<double>()},
            {"jerk", j.at("temporal_jerk").get<double>()}};
        std::string svg = svg_bar_chart("metrics", bars);
        if (!o.deterministic) {
            svg = "<!-- created " + timestamp_now() + " -->\n" + svg;
        }
        atomic_write_file(o.out_dir + "/metrics.svg", svg);
        std::cout << "wrote " << o.out_dir << "/metrics.svg\n";
    }
    return exit_code::ok;
}

} // namespace

// ---------------------------------------------------------------------------
// Dispatch

int run(int argc, char** argv) {
    CLI::App app{"seqdiff: conditional diffusion toolkit for audio-driven skeleton sequences"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from a key=value config file");
    std::string dump_config;
    app.add_option("--dump-config", dump_config,
                   "write the effective configuration (flags > config file > defaults) and exit");

    GenDataOpts gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a deterministic synthetic corpus");
    gen_cmd->add_option("--seed", gen.seed, "corpus seed");
    gen_cmd->add_option("--clips", gen.clips, "clip count")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--joints", gen.joints, "joint count J")->check(CLI::Range(std::size_t{2}, std::size_t{4096}));
    gen_cmd->add_option("--frames", gen.frames, "frames per clip N")->check(CLI::Range(std::size_t{8}, std::size_t{4096}));
    gen_cmd->add_option("--initial-frames", gen.initial_frames, "seed pose frames M");
    gen_cmd->add_option("--beat-rate", gen.beat_rate, "beats per frame")
        ->check(CLI::Range(1e-6, 0.499999));
    gen_cmd->add_option("--noise-level", gen.noise_level, "angular jitter (radians)")
        ->check(CLI::Range(0.0, 10.0));
    gen_cmd->add_option("--out", gen.out, "output dataset path")->required();
    gen_cmd->add_flag("--deterministic", gen.deterministic, "omit timestamps from outputs");

    TrainOpts tr;
    auto* train_cmd = app.add_subcommand("train", "train the denoiser on a dataset");
    train_cmd->add_option("--data", tr.data, "training dataset")->required();
    train_cmd->add_option("--out", tr.out, "checkpoint path")->required();
    train_cmd->add_option("--loss-log", tr.loss_log, "loss CSV path (default <out>.loss.csv)");
    train_cmd->add_option("--resume", tr.resume, "resume from this checkpoint");
    train_cmd->add_option("--seed", tr.seed, "training seed");
    train_cmd->add_option("--timesteps", tr.timesteps, "diffusion steps T")->check(CLI::Range(std::size_t{2}, std::size_t{100000}));
    train_cmd->add_option("--beta1", tr.beta_1, "schedule beta_1");
    train_cmd->add_option("--betaT", tr.beta_t, "schedule beta_T");
    train_cmd->add_option("--hidden", tr.hidden, "transformer width");
    train_cmd->add_option("--blocks", tr.blocks, "transformer blocks");
    train_cmd->add_option("--heads", tr.heads, "attention heads");
    train_cmd->add_option("--ff-mult", tr.ff_mult, "feed-forward expansion");
    train_cmd->add_flag("--no-positional-encoding", tr.no_positional_encoding,
                        "disable the frame position encoding");
    train_cmd->add_option("--initial-frames", tr.initial_frames, "context pose frames M");
    train_cmd->add_option("--steps", tr.steps, "training steps")->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch", tr.batch, "batch size")->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", tr.lr, "learning rate")->check(CLI::PositiveNumber);
    train_cmd->add_option("--p-uncond", tr.p_uncond, "context mask probability")
        ->check(CLI::Range(0.0, 0.999999));
    train_cmd->add_option("--loss-every", tr.loss_every, "loss log granularity")->check(CLI::PositiveNumber);
    train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "checkpoint period (0 = final only)");
    train_cmd->add_option("--plateau-window", tr.plateau_window, "early-stop window (0 disables)");
    train_cmd->add_option("--plateau-tol", tr.plateau_tol, "early-stop relative tolerance");
    train_cmd->add_flag("--deterministic", tr.deterministic, "omit timestamps from outputs");

    SampleOpts sa;
    auto* sample_cmd = app.add_subcommand("sample", "sample clips from a trained checkpoint");
    sample_cmd->add_option("--ckpt", sa.ckpt, "model checkpoint")->required();
    sample_cmd->add_option("--data", sa.data, "context dataset")->required();
    sample_cmd->add_option("--out", sa.out, "output dataset path")->required();
    sample_cmd->add_option("--count", sa.count, "number of leading records to condition on");
    sample_cmd->add_option("--indices", sa.indices, "explicit record indices")->delimiter(',');
    sample_cmd->add_option("--guidance-scale", sa.guidance_scale, "guidance scale s")
        ->check(CLI::Range(0.0, 1e6));
    sample_cmd->add_flag("--strict-guidance", sa.strict_guidance,
                         "always evaluate both guidance branches");
    sample_cmd->add_option("--stabilizer", sa.stabilizer, "noise mode")
        ->check(CLI::IsMember({"naive", "threshold", "smooth"}));
    sample_cmd->add_option("--t0", sa.t0, "threshold timestep");
    sample_cmd->add_option("--sigma-a", sa.sigma_a, "smooth-mode annealing shape")
        ->check(CLI::IsMember({"quadratic", "quadratic-reversed"}));
    sample_cmd->add_option("--seed", sa.seed, "sampling seed");
    sample_cmd->add_flag("--deterministic", sa.deterministic, "omit timestamps from outputs");

    EvaluateOpts ev;
    auto* eval_cmd = app.add_subcommand("evaluate", "score generated clips against a reference set");
    eval_cmd->add_option("--generated", ev.generated, "generated dataset")->required();
    eval_cmd->add_option("--reference", ev.reference, "reference dataset")->required();
    eval_cmd->add_option("--extractor", ev.extractor, "feature-extractor checkpoint");
    eval_cmd->add_flag("--train-extractor", ev.train_extractor,
                       "train the extractor on the reference set");
    eval_cmd->add_option("--extractor-out", ev.extractor_out, "save the trained extractor here");
    eval_cmd->add_option("--extractor-steps", ev.extractor_steps, "extractor training steps");
    eval_cmd->add_option("--extractor-hidden", ev.extractor_hidden, "extractor hidden width");
    eval_cmd->add_option("--extractor-batch", ev.extractor_batch, "extractor batch size");
    eval_cmd->add_option("--extractor-lr", ev.extractor_lr, "extractor learning rate");
    eval_cmd->add_option("--out", ev.out, "report path");
    eval_cmd->add_option("--seed", ev.seed, "metric seed");
    eval_cmd->add_option("--diversity-samples", ev.diversity_samples, "diversity subsample size");
    eval_cmd->add_option("--bc-threshold-factor", ev.bc_threshold_factor,
                         "kinematic beat threshold factor");
    eval_cmd->add_option("--bc-sigma", ev.bc_sigma, "beat kernel width (seconds)");
    eval_cmd->add_option("--fps", ev.fps, "frames per second");
    eval_cmd->add_flag("--deterministic", ev.deterministic, "omit timestamps from outputs");

    AblateOpts ab;
    auto* ablate_cmd = app.add_subcommand("ablate", "metric table across sampler variants");
    ablate_cmd->add_option("--data", ab.data, "context dataset")->required();
    ablate_cmd->add_option("--reference", ab.reference, "reference dataset")->required();
    ablate_cmd->add_option("--ckpt-guided", ab.ckpt_guided, "checkpoint trained with p_uncond > 0");
    ablate_cmd->add_option("--ckpt-unguided", ab.ckpt_unguided, "checkpoint trained with p_uncond = 0");
    ablate_cmd->add_option("--extractor", ab.extractor, "feature-extractor checkpoint");
    ablate_cmd->add_flag("--train-extractor", ab.train_extractor,
                         "train the extractor on the reference set");
    ablate_cmd->add_option("--variants", ab.variants,
                           "subset of base,no-stabilizer,no-guidance,full")
        ->delimiter(',')
        ->expected(0, 8);
    ablate_cmd->add_option("--count", ab.count, "clips per variant");
    ablate_cmd->add_option("--guidance-scale", ab.guidance_scale, "scale for guided variants");
    ablate_cmd->add_option("--t0", ab.t0, "threshold timestep");
    ablate_cmd->add_option("--sigma-a", ab.sigma_a, "smooth-mode annealing shape")
        ->check(CLI::IsMember({"quadratic", "quadratic-reversed"}));
    ablate_cmd->add_option("--seed", ab.seed, "sampling/metric seed");
    ablate_cmd->add_option("--diversity-samples", ab.diversity_samples, "diversity subsample size");
    ablate_cmd->add_option("--bc-threshold-factor", ab.bc_threshold_factor,
                           "kinematic beat threshold factor");
    ablate_cmd->add_option("--bc-sigma", ab.bc_sigma, "beat kernel width (seconds)");
    ablate_cmd->add_option("--fps", ab.fps, "frames per second");
    ablate_cmd->add_option("--extractor-steps", ab.extractor_steps, "extractor training steps");
    ablate_cmd->add_option("--extractor-hidden", ab.extractor_hidden, "extractor hidden width");
    ablate_cmd->add_option("--out", ab.out, "table path (JSON)");
    ablate_cmd->add_flag("--deterministic", ab.deterministic, "omit timestamps from outputs");

    PlotOpts pl;
    auto* plot_cmd = app.add_subcommand("plot", "render keyframe strips, loss curves and metric bars");
    plot_cmd->add_option("--clips", pl.clips, "clip dataset to render");
    plot_cmd->add_option("--out-dir", pl.out_dir, "output directory")->required();
    plot_cmd->add_option("--max-clips", pl.max_clips, "clips to render");
    plot_cmd->add_option("--frames", pl.frames, "keyframe indices")->delimiter(',');
    plot_cmd->add_option("--bone-lengths", pl.bone_lengths, "bone lengths")->delimiter(',');
    plot_cmd->add_option("--loss", pl.loss_csv, "loss CSV to plot");
    plot_cmd->add_option("--report", pl.report, "metric report to plot");
    plot_cmd->add_flag("--deterministic", pl.deterministic, "omit timestamps from outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_code::ok : exit_code::usage;
    }

    try {
        if (!dump_config.empty()) {
            atomic_write_file(dump_config, app.config_to_str(true, false));
        }
        if (gen_cmd->parsed()) {
            return cmd_gen_data(gen);
        }
        if (train_cmd->parsed()) {
            return cmd_train(tr);
        }
        if (sample_cmd->parsed()) {
            return cmd_sample(sa);
        }
        if (eval_cmd->parsed()) {
            return cmd_evaluate(ev);
        }
        if (ablate_cmd->parsed()) {
            return cmd_ablate(ab);
        }
        if (plot_cmd->parsed()) {
            return cmd_plot(pl);
        }
        std::cerr << app.help();
        return exit_code::usage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::usage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::io;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::io;
    } catch (const CompatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::compat;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::numeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::numeric;
    }
}

} // namespace seqdiff::cli
