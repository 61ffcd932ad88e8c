#include "seqdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqdiff/checkpoint.hpp"
#include "seqdiff/diffusion.hpp"
#include "seqdiff/linalg.hpp"
#include "seqdiff/rng.hpp"
#include "seqdiff/threading.hpp"

namespace seqdiff {

// ---------------------------------------------------------------------------
// Feature extractor

nlohmann::json ExtractorConfig::to_json() const {
    return {{"frames", frames}, {"pose_dims", pose_dims}, {"hidden", hidden}, {"latent", latent}};
}

ExtractorConfig ExtractorConfig::from_json(const nlohmann::json& j) {
    ExtractorConfig c;
    c.frames = j.at("frames").get<std::size_t>();
    c.pose_dims = j.at("pose_dims").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.latent = j.at("latent").get<std::size_t>();
    return c;
}

FeatureExtractor::FeatureExtractor(ExtractorConfig config, ParamStore params)
    : config_(config), params_(std::move(params)) {
    checksum_ = params_checksum(params_);
}

void FeatureExtractor::check_clip(const GestureClip& clip) const {
    if (clip.frames != config_.frames || clip.dims != config_.pose_dims) {
        throw CompatError("extractor expects " + std::to_string(config_.frames) + "x" +
                          std::to_string(config_.pose_dims) + " clips, got " +
                          std::to_string(clip.frames) + "x" + std::to_string(clip.dims));
    }
}

namespace {

Var extractor_encode_var(Tape& tape, const ExtractorConfig& cfg, Var flat) {
    Var h = tape.add_rowvec(tape.matmul(flat, tape.param("enc1.weight")), tape.param("enc1.bias"));
    h = tape.gelu(h);
    return tape.add_rowvec(tape.matmul(h, tape.param("enc2.weight")), tape.param("enc2.bias"));
}

Var extractor_decode_var(Tape& tape, const ExtractorConfig& cfg, Var latent) {
    Var h = tape.add_rowvec(tape.matmul(latent, tape.param("dec1.weight")),
                            tape.param("dec1.bias"));
    h = tape.gelu(h);
    return tape.add_rowvec(tape.matmul(h, tape.param("dec2.weight")), tape.param("dec2.bias"));
}

} // namespace

Tensor FeatureExtractor::encode(const GestureClip& clip) const {
    check_clip(clip);
    Tape tape(&params_);
    Var flat = tape.reshape(tape.constant(clip.values), {1, config_.frames * config_.pose_dims});
    Var latent = extractor_encode_var(tape, config_, flat);
    Tensor out = tape.value(latent);
    return Tensor({config_.latent}, out.values());
}

Tensor FeatureExtractor::reconstruct(const GestureClip& clip) const {
    check_clip(clip);
    Tape tape(&params_);
    Var flat = tape.reshape(tape.constant(clip.values), {1, config_.frames * config_.pose_dims});
    Var latent = extractor_encode_var(tape, config_, flat);
    Var rec = extractor_decode_var(tape, config_, latent);
    Tensor out = tape.value(rec);
    return Tensor({config_.frames, config_.pose_dims}, out.values());
}

ExtractorTrainResult train_feature_extractor(const std::vector<GestureClip>& clips,
                                             std::uint64_t seed,
                                             const ExtractorTrainOptions& options) {
    if (clips.size() < options.min_clips) {
        throw ValueError("feature extractor needs at least " + std::to_string(options.min_clips) +
                         " clips, got " + std::to_string(clips.size()));
    }
    const std::size_t frames = clips.front().frames;
    const std::size_t dims = clips.front().dims;
    for (const auto& c : clips) {
        if (c.frames != frames || c.dims != dims) {
            throw CompatError("extractor training: clips must share one shape");
        }
    }

    ExtractorConfig cfg;
    cfg.frames = frames;
    cfg.pose_dims = dims;
    cfg.hidden = options.hidden;

    const std::size_t flat = frames * dims;
    ParamStore params;
    auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        Tensor w({in, out});
        Rng rng(seed, "extractor/init/" + name);
        for (double& x : w.values()) {
            x = a * (2.0 * rng.uniform() - 1.0);
        }
        params.create(name + ".weight", std::move(w));
        params.create(name + ".bias", Tensor({out}));
    };
    linear("enc1", flat, cfg.hidden);
    linear("enc2", cfg.hidden, cfg.latent);
    linear("dec1", cfg.latent, cfg.hidden);
    linear("dec2", cfg.hidden, flat);

    const std::size_t holdout =
        std::max<std::size_t>(1, static_cast<std::size_t>(
                                     std::floor(options.holdout_fraction *
                                                static_cast<double>(clips.size()))));
    const std::size_t train_count = clips.size() - holdout;

    AdamOptimizer opt(options.learning_rate);
    for (std::size_t step = 1; step <= options.steps; ++step) {
        Rng batch_rng(seed, "extractor/batch", step);
        std::vector<std::size_t> batch(options.batch_size);
        for (auto& idx : batch) {
            idx = batch_rng.uniform_int(train_count);
        }
        struct Item {
            double loss;
            GradientMap grads;
        };
        std::vector<Item> items(batch.size());
        parallel_for(batch.size(), [&](std::size_t i) {
            const GestureClip& clip = clips[batch[i]];
            Tape tape(&params);
            Var flat_in = tape.reshape(tape.constant(clip.values), {1, flat});
            Var rec = extractor_decode_var(tape, cfg, extractor_encode_var(tape, cfg, flat_in));
            Var diff = tape.sub(rec, flat_in);
            Var loss = tape.mean_all(tape.mul(diff, diff));
            items[i].loss = tape.value(loss)[0];
            items[i].grads = tape.backward(loss);
        });
        GradientMap grads = std::move(items[0].grads);
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        for (auto& [name, g] : grads) {
            for (double& x : g.values()) {
                x *= inv_b;
            }
        }
        for (std::size_t i = 1; i < items.size(); ++i) {
            for (auto& [name, g] : grads) {
                const Tensor& gi = items[i].grads.at(name);
                for (std::size_t k = 0; k < g.size(); ++k) {
                    g[k] += gi[k] * inv_b;
                }
            }
        }
        double loss = 0.0;
        for (const auto& item : items) {
            loss += item.loss * inv_b;
        }
        if (!std::isfinite(loss)) {
            throw NumericError("extractor training diverged at step " + std::to_string(step));
        }
        opt.step(params, grads);
    }

    quantize_params_f32(params);

    ExtractorTrainResult result;
    result.extractor = FeatureExtractor(cfg, std::move(params));

    // Holdout reconstruction vs. the predict-the-training-mean baseline.
    Tensor mean_clip({frames, dims});
    for (std::size_t i = 0; i < train_count; ++i) {
        for (std::size_t k = 0; k < mean_clip.size(); ++k) {
            mean_clip[k] += clips[i].values[k];
        }
    }
    for (double& v : mean_clip.values()) {
        v /= static_cast<double>(train_count);
    }
    double mse = 0.0, baseline = 0.0;
    for (std::size_t i = train_count; i < clips.size(); ++i) {
        const Tensor rec = result.extractor.reconstruct(clips[i]);
        for (std::size_t k = 0; k < rec.size(); ++k) {
            const double d = rec[k] - clips[i].values[k];
            const double b = mean_clip[k] - clips[i].values[k];
            mse += d * d;
            baseline += b * b;
        }
    }
    const double denom = static_cast<double>(holdout) * static_cast<double>(frames * dims);
    result.holdout_mse = mse / denom;
    result.mean_baseline_mse = baseline / denom;
    return result;
}

// ---------------------------------------------------------------------------
// Moments and the Frechet metric

namespace {

// Ordered pairwise reduction; identical for every thread count.
void pairwise_accumulate(const std::vector<const double*>& rows, std::size_t dim, std::size_t lo,
                         std::size_t hi, double* out) {
    if (hi - lo <= 8) {
        std::fill(out, out + dim, 0.0);
        for (std::size_t i = lo; i < hi; ++i) {
            for (std::size_t k = 0; k < dim; ++k) {
                out[k] += rows[i][k];
            }
        }
        return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    std::vector<double> left(dim), right(dim);
    pairwise_accumulate(rows, dim, lo, mid, left.data());
    pairwise_accumulate(rows, dim, mid, hi, right.data());
    for (std::size_t k = 0; k < dim; ++k) {
        out[k] = left[k] + right[k];
    }
}

} // namespace

MomentPair fit_moments(const std::vector<Tensor>& features) {
    if (features.size() < 2) {
        throw ValueError("fit_moments needs at least 2 feature vectors");
    }
    const std::size_t dim = features.front().size();
    for (const auto& f : features) {
        if (f.size() != dim) {
            throw ShapeError("fit_moments: inconsistent feature dims");
        }
    }
    const std::size_t n = features.size();

    std::vector<const double*> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i] = features[i].data();
    }

    MomentPair mp;
    mp.mean = Tensor({dim});
    pairwise_accumulate(rows, dim, 0, n, mp.mean.data());
    for (double& v : mp.mean.values()) {
        v /= static_cast<double>(n);
    }

    std::vector<Tensor> centered_outer(n);
    std::vector<const double*> outer_rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        centered_outer[i] = Tensor({dim * dim});
        double* o = centered_outer[i].data();
        for (std::size_t a = 0; a < dim; ++a) {
            const double da = rows[i][a] - mp.mean[a];
            for (std::size_t b = 0; b < dim; ++b) {
                o[a * dim + b] = da * (rows[i][b] - mp.mean[b]);
            }
        }
        outer_rows[i] = o;
    }
    Tensor cov_flat({dim * dim});
    pairwise_accumulate(outer_rows, dim * dim, 0, n, cov_flat.data());
    for (double& v : cov_flat.values()) {
        v /= static_cast<double>(n - 1);
    }
    mp.cov = Tensor({dim, dim}, cov_flat.values());
    return mp;
}

double frechet_distance(const MomentPair& a, const MomentPair& b) {
    const std::size_t dim = a.mean.size();
    if (b.mean.size() != dim || a.cov.rows() != dim || b.cov.rows() != dim) {
        throw ShapeError("frechet_distance: moment dims differ");
    }

    double mean_term = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double d = a.mean[i] - b.mean[i];
        mean_term += d * d;
    }

    const Tensor sa = psd_sqrt(a.cov);
    // m = sa * cov_b * sa, symmetric PSD with the same spectrum as cov_a cov_b.
    Tensor tmp({dim, dim});
    matmul_raw(sa, b.cov, tmp, false);
    Tensor m({dim, dim});
    matmul_raw(tmp, sa, m, false);

    SymmetricEigen eig = symmetric_eigen(m);
    double sqrt_trace = 0.0;
    for (double v : eig.values) {
        if (v < -1e-8) {
            throw NumericError("frechet_distance: ill-conditioned covariance product");
        }
        sqrt_trace += v > 0.0 ? std::sqrt(v) : 0.0;
    }

    double trace_a = 0.0, trace_b = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        trace_a += a.cov.at(i, i);
        trace_b += b.cov.at(i, i);
    }
    return mean_term + trace_a + trace_b - 2.0 * sqrt_trace;
}

namespace {

std::vector<Tensor> encode_all(const std::vector<GestureClip>& clips,
                               const FeatureExtractor& extractor) {
    std::vector<Tensor> features(clips.size());
    parallel_for(clips.size(), [&](std::size_t i) { features[i] = extractor.encode(clips[i]); });
    return features;
}

} // namespace

double fgd(const std::vector<GestureClip>& generated, const std::vector<GestureClip>& real,
           const FeatureExtractor& extractor) {
    if (generated.size() < 2 || real.size() < 2) {
        throw ValueError("fgd needs at least 2 clips on each side");
    }
    const MomentPair mg = fit_moments(encode_all(generated, extractor));
    const MomentPair mr = fit_moments(encode_all(real, extractor));
    return frechet_distance(mr, mg);
}

// ---------------------------------------------------------------------------
// Beat consistency

Tensor included_angles(const GestureClip& clip) {
    const std::size_t joints = clip.joints();
    if (joints < 3) {
        throw ValueError("included_angles needs J >= 3");
    }
    const std::size_t bones = joints - 1;
    const std::size_t angles = bones - 1;
    Tensor out({clip.frames, angles});
    for (std::size_t t = 0; t < clip.frames; ++t) {
        const double* row = clip.values.data() + t * clip.dims;
        for (std::size_t j = 0; j < angles; ++j) {
            const double* d1 = row + 3 * j;
            const double* d2 = row + 3 * (j + 1);
            const double n1 = std::sqrt(d1[0] * d1[0] + d1[1] * d1[1] + d1[2] * d1[2]);
            const double n2 = std::sqrt(d2[0] * d2[0] + d2[1] * d2[1] + d2[2] * d2[2]);
            if (n1 < 0.5 || n1 > 2.0 || n2 < 0.5 || n2 > 2.0) {
                throw ValueError("included_angles: direction norm outside [0.5, 2] at frame " +
                                 std::to_string(t));
            }
            double dot = (d1[0] * d2[0] + d1[1] * d2[1] + d1[2] * d2[2]) / (n1 * n2);
            dot = std::clamp(dot, -1.0, 1.0);
            out.at(t, j) = std::acos(dot);
        }
    }
    return out;
}

std::vector<double> maac(const std::vector<GestureClip>& clips) {
    if (clips.empty()) {
        throw ValueError("maac: empty clip set");
    }
    const std::size_t frames = clips.front().frames;
    if (frames < 2) {
        throw ValueError("maac needs at least 2 frames per clip");
    }
    const std::size_t angles = clips.front().joints() - 2;
    std::vector<double> out(angles, 0.0);
    for (const auto& clip : clips) {
        if (clip.frames != frames || clip.joints() - 2 != angles) {
            throw CompatError("maac: clips must share one shape");
        }
        const Tensor theta = included_angles(clip);
        for (std::size_t t = 0; t + 1 < frames; ++t) {
            for (std::size_t j = 0; j < angles; ++j) {
                out[j] += std::fabs(theta.at(t + 1, j) - theta.at(t, j));
            }
        }
    }
    const double denom = static_cast<double>(clips.size()) * static_cast<double>(frames - 1);
    for (double& v : out) {
        v /= denom;
    }
    return out;
}

std::vector<double> angle_change_rate(const GestureClip& clip,
                                      std::span<const double> maac_values) {
    const Tensor theta = included_angles(clip);
    const std::size_t angles = theta.cols();
    if (maac_values.size() != angles) {
        throw ShapeError("angle_change_rate: expected " + std::to_string(angles) +
                         " maac values");
    }
    for (double m : maac_values) {
        if (!(m > 0.0)) {
            throw ValueError("angle_change_rate: zero MAAC (frozen dataset?)");
        }
    }
    const std::size_t bones = clip.joints() - 1;
    std::vector<double> rate(clip.frames - 1, 0.0);
    for (std::size_t t = 0; t + 1 < clip.frames; ++t) {
        double sum = 0.0;
        for (std::size_t j = 0; j < angles; ++j) {
            sum += std::fabs(theta.at(t + 1, j) - theta.at(t, j)) / maac_values[j];
        }
        rate[t] = sum / static_cast<double>(bones);
    }
    return rate;
}

std::vector<std::size_t> kinematic_beats(const GestureClip& clip,
                                         std::span<const double> maac_values,
                                         double threshold_factor) {
    const std::vector<double> rate = angle_change_rate(clip, maac_values);
    double mean = 0.0;
    for (double r : rate) {
        mean += r;
    }
    mean /= static_cast<double>(rate.size());
    double var = 0.0;
    for (double r : rate) {
        var += (r - mean) * (r - mean);
    }
    var /= static_cast<double>(rate.size());
    const double threshold = threshold_factor * std::sqrt(var);

    // rate[k] is the change landing at frame k+1.
    std::vector<std::size_t> beats;
    for (std::size_t k = 1; k + 1 < rate.size(); ++k) {
        if (rate[k] > rate[k - 1] && rate[k] >= rate[k + 1] &&
            rate[k] - rate[k - 1] > threshold) {
            beats.push_back(k + 1);
        }
    }
    return beats;
}

double bc_score(std::span<const double> audio_beats_s, std::span<const double> motion_beats_s,
                double sigma) {
    if (audio_beats_s.empty() || motion_beats_s.empty()) {
        throw ValueError("bc_score: beat lists must be non-empty");
    }
    if (!(sigma > 0.0)) {
        throw ValueError("bc_score: sigma must be positive");
    }
    double total = 0.0;
    for (double a : audio_beats_s) {
        double best = std::numeric_limits<double>::infinity();
        for (double m : motion_beats_s) {
            best = std::min(best, (a - m) * (a - m));
        }
        total += std::exp(-best / (2.0 * sigma * sigma));
    }
    return total / static_cast<double>(audio_beats_s.size());
}

double bc_over_set(const std::vector<std::vector<std::size_t>>& audio_beats,
                   const std::vector<const GestureClip*>& clips, const BcOptions& options) {
    if (audio_beats.size() != clips.size() || clips.empty()) {
        throw ValueError("bc_over_set: need one audio beat list per clip");
    }

    // MAAC comes from the clips that actually yield valid angles; clips with
    // degenerate directions cannot produce motion beats and score zero below.
    std::vector<GestureClip> valid;
    for (const auto* c : clips) {
        try {
            (void)included_angles(*c);
            valid.push_back(*c);
        } catch (const ValueError&) {
        }
    }
    std::vector<double> maac_values;
    if (!valid.empty()) {
        maac_values = maac(valid);
    }

    double total = 0.0;
    std::size_t beat_count = 0;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        if (audio_beats[i].empty()) {
            continue;
        }
        beat_count += audio_beats[i].size();
        std::vector<double> motion_s;
        if (!maac_values.empty()) {
            try {
                for (std::size_t frame : kinematic_beats(*clips[i], maac_values,
                                                         options.threshold_factor)) {
                    motion_s.push_back(static_cast<double>(frame) / options.fps);
                }
            } catch (const ValueError&) {
                motion_s.clear();
            }
        }
        if (motion_s.empty()) {
            continue;
        }
        for (std::size_t frame : audio_beats[i]) {
            const double a = static_cast<double>(frame) / options.fps;
            double best = std::numeric_limits<double>::infinity();
            for (double m : motion_s) {
                best = std::min(best, (a - m) * (a - m));
            }
            total += std::exp(-best / (2.0 * options.sigma * options.sigma));
        }
    }
    if (beat_count == 0) {
        throw ValueError("bc_over_set: no audio beats in the set");
    }
    return total / static_cast<double>(beat_count);
}

// ---------------------------------------------------------------------------
// Diversity

double diversity(const std::vector<std::string>& ids, const std::vector<const GestureClip*>& clips,
                 const FeatureExtractor& extractor, std::size_t sample_count, std::uint64_t seed) {
    if (ids.size() != clips.size()) {
        throw ValueError("diversity: one id per clip required");
    }
    std::vector<std::string> distinct = ids;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2) {
        throw ValueError("diversity needs at least 2 distinct clips");
    }
    if (sample_count < 2) {
        throw ValueError("diversity: sample_count must be >= 2");
    }

    // Position-independent ordering: sort indices by id.
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });

    Rng rng(seed, "diversity/sample");
    std::vector<std::size_t> picks;
    picks.reserve(sample_count);
    if (sample_count <= order.size()) {
        // Partial Fisher-Yates over the id-sorted list.
        std::vector<std::size_t> pool = order;
        for (std::size_t i = 0; i < sample_count; ++i) {
            const std::size_t j = i + rng.uniform_int(pool.size() - i);
            std::swap(pool[i], pool[j]);
            picks.push_back(pool[i]);
        }
    } else {
        for (std::size_t i = 0; i < sample_count; ++i) {
            picks.push_back(order[rng.uniform_int(order.size())]);
        }
    }

    std::vector<Tensor> features(picks.size());
    parallel_for(picks.size(),
                 [&](std::size_t i) { features[i] = extractor.encode(*clips[picks[i]]); });

    // Derangement by rejection; a cyclic shift breaks ties if sampling keeps failing.
    std::vector<std::size_t> perm(picks.size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng shuffle_rng(seed, "diversity/shuffle");
    bool ok = false;
    for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
        for (std::size_t i = perm.size(); i > 1; --i) {
            std::swap(perm[i - 1], perm[shuffle_rng.uniform_int(i)]);
        }
        ok = true;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            if (perm[i] == i) {
                ok = false;
                break;
            }
        }
    }
    if (!ok) {
        std::iota(perm.begin(), perm.end(), 0);
        std::rotate(perm.begin(), perm.begin() + 1, perm.end());
    }

    double total = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const Tensor& a = features[i];
        const Tensor& b = features[perm[i]];
        for (std::size_t k = 0; k < a.size(); ++k) {
            total += std::fabs(a[k] - b[k]);
        }
    }
    return total / static_cast<double>(features.size());
}

// ---------------------------------------------------------------------------
// Report

void MetricReport::validate() const {
    if (!std::isfinite(fgd) || !std::isfinite(bc) || !std::isfinite(diversity) ||
        !std::isfinite(temporal_jerk)) {
        throw ValueError("metric report contains non-finite values");
    }
    if (fgd < -1e-8) {
        throw ValueError("metric report: fgd below -1e-8");
    }
}

nlohmann::json MetricReport::to_json() const {
    return {{"fgd", fgd},
            {"bc", bc},
            {"diversity", diversity},
            {"temporal_jerk", temporal_jerk},
            {"n_generated", n_generated},
            {"n_real", n_real},
            {"extractor_checksum", extractor_checksum},
            {"config_echo", config_echo}};
}

} // namespace seqdiff
