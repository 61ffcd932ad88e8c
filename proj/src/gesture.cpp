#include "seqdiff/gesture.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "seqdiff/rng.hpp"
#include "seqdiff/threading.hpp"

namespace seqdiff {

void GestureClip::validate() const {
    if (frames < 1 || dims < 3 || dims % 3 != 0) {
        throw ValueError("gesture clip needs >=1 frame and dims = 3*(J-1) with J >= 2");
    }
    if (values.rank() != 2 || values.rows() != frames || values.cols() != dims) {
        throw ShapeError("gesture clip value shape " + values.shape_str() + " does not match " +
                         std::to_string(frames) + "x" + std::to_string(dims));
    }
    values.require_finite("gesture clip");
    if (normalized) {
        for (std::size_t i = 0; i < frames; ++i) {
            for (std::size_t b = 0; b < dims / 3; ++b) {
                const double x = values.at(i, 3 * b);
                const double y = values.at(i, 3 * b + 1);
                const double z = values.at(i, 3 * b + 2);
                const double norm = std::sqrt(x * x + y * y + z * z);
                if (std::fabs(norm - 1.0) > 1e-6) {
                    throw ValueError("direction norm " + std::to_string(norm) +
                                     " violates the normalized flag");
                }
            }
        }
    }
}

void Context::validate() const {
    if (audio.values.rank() != 2 || audio.values.cols() != AudioFeatureSeq::kChannels) {
        throw ShapeError("audio features must be N x 32, got " + audio.values.shape_str());
    }
    if (initial_poses.rank() != 2) {
        throw ShapeError("initial poses must be M x dims");
    }
    if (initial_poses.rows() >= audio.frames()) {
        throw ValueError("initial pose count must be smaller than the frame count");
    }
}

Context SyntheticClipRecord::context(std::size_t initial_frames, bool uncond) const {
    if (initial_frames >= clip.frames) {
        throw ValueError("initial_frames must be smaller than the clip frame count");
    }
    Context ctx;
    ctx.audio = audio;
    ctx.initial_poses = Tensor({initial_frames, clip.dims});
    for (std::size_t i = 0; i < initial_frames; ++i) {
        for (std::size_t j = 0; j < clip.dims; ++j) {
            ctx.initial_poses.at(i, j) = clip.values.at(i, j);
        }
    }
    ctx.uncond_mask = uncond;
    return ctx;
}

void SyntheticClipRecord::validate() const {
    clip.validate();
    if (audio.frames() != clip.frames) {
        throw ValueError("audio frame count differs from clip frame count");
    }
    for (std::size_t i = 0; i < audio_beat_times.size(); ++i) {
        if (audio_beat_times[i] >= clip.frames) {
            throw ValueError("beat time beyond clip length");
        }
        if (i > 0 && audio_beat_times[i] <= audio_beat_times[i - 1]) {
            throw ValueError("beat times must be strictly increasing");
        }
    }
}

// ---------------------------------------------------------------------------
// Pose representation

std::vector<double> joints_to_directions(std::span<const std::array<double, 3>> joints) {
    if (joints.size() < 2) {
        throw ValueError("need at least two joints");
    }
    std::vector<double> out;
    out.reserve(3 * (joints.size() - 1));
    for (std::size_t j = 0; j + 1 < joints.size(); ++j) {
        const double dx = joints[j + 1][0] - joints[j][0];
        const double dy = joints[j + 1][1] - joints[j][1];
        const double dz = joints[j + 1][2] - joints[j][2];
        const double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (norm < 1e-12) {
            throw ValueError("degenerate bone: joints " + std::to_string(j) + " and " +
                             std::to_string(j + 1) + " coincide");
        }
        out.push_back(dx / norm);
        out.push_back(dy / norm);
        out.push_back(dz / norm);
    }
    return out;
}

std::vector<std::array<double, 3>> directions_to_joints(std::span<const double> directions,
                                                        std::span<const double> bone_lengths,
                                                        const std::array<double, 3>& root) {
    if (directions.size() % 3 != 0 || directions.empty()) {
        throw ShapeError("directions must hold 3 components per bone");
    }
    const std::size_t bones = directions.size() / 3;
    if (bone_lengths.size() != bones) {
        throw ShapeError("expected " + std::to_string(bones) + " bone lengths");
    }
    std::vector<std::array<double, 3>> joints;
    joints.reserve(bones + 1);
    joints.push_back(root);
    for (std::size_t b = 0; b < bones; ++b) {
        if (!(bone_lengths[b] > 0.0)) {
            throw ValueError("bone length must be positive");
        }
        double dx = directions[3 * b];
        double dy = directions[3 * b + 1];
        double dz = directions[3 * b + 2];
        const double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (norm < 0.9 || norm > 1.1) {
            throw ValueError("direction norm " + std::to_string(norm) +
                             " outside [0.9, 1.1] for bone " + std::to_string(b));
        }
        dx /= norm;
        dy /= norm;
        dz /= norm;
        const auto& prev = joints.back();
        joints.push_back({prev[0] + bone_lengths[b] * dx, prev[1] + bone_lengths[b] * dy,
                          prev[2] + bone_lengths[b] * dz});
    }
    return joints;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

void CorpusParams::validate() const {
    if (num_clips < 1) {
        throw ValueError("num_clips must be >= 1");
    }
    if (joints < 2) {
        throw ValueError("need at least 2 joints");
    }
    if (frames < 8) {
        throw ValueError("need at least 8 frames");
    }
    if (initial_frames >= frames) {
        throw ValueError("initial_frames must be smaller than frames");
    }
    if (!(beat_rate > 0.0 && beat_rate < 0.5)) {
        throw ValueError("beat_rate must lie in (0, 0.5)");
    }
    if (noise_level < 0.0) {
        throw ValueError("noise_level must be >= 0");
    }
}

namespace {

// Per-frame swing and beat envelope. The swing alternates sign from beat to
// beat and crosses zero half a frame before each beat through a tanh
// transition of fixed width, so the per-frame change |swing_t - swing_{t-1}|
// has one sharp local maximum per beat, exactly at the beat frame, for any
// beat spacing. Between beats the swing plateaus and the change rate falls to
// ~0; outside the beat range it saturates, leaving the tails free of spurious
// maxima. swing/envelope are sin/|cos| of a saturating warped phase.
struct BeatProfile {
    std::vector<double> swing;
    std::vector<double> envelope;
};

BeatProfile beat_profile(const std::vector<std::size_t>& beats, std::size_t frames) {
    constexpr double alpha = 1.2; // transition sharpness, per frame
    std::vector<double> knots;
    knots.reserve(beats.size());
    for (std::size_t b : beats) {
        knots.push_back(static_cast<double>(b) - 0.5);
    }
    BeatProfile out;
    out.swing.resize(frames);
    out.envelope.resize(frames);
    for (std::size_t t = 0; t < frames; ++t) {
        const double x = static_cast<double>(t);
        // Region of the nearest knot; regions split at interval midpoints.
        std::size_t m = 0;
        while (m + 1 < knots.size() && x > 0.5 * (knots[m] + knots[m + 1])) {
            ++m;
        }
        const double y = alpha * (x - knots[m]);
        const double sign = (m % 2 == 0) ? 1.0 : -1.0;
        out.swing[t] = sign * std::tanh(y);
        out.envelope[t] = 1.0 / std::cosh(y);
    }
    return out;
}

struct Rotation3 {
    std::array<std::array<double, 3>, 3> m;

    std::array<double, 3> apply(double x, double y, double z) const {
        return {m[0][0] * x + m[0][1] * y + m[0][2] * z,
                m[1][0] * x + m[1][1] * y + m[1][2] * z,
                m[2][0] * x + m[2][1] * y + m[2][2] * z};
    }
};

// Yaw about z composed with a tilt about x.
Rotation3 style_rotation(double yaw, double tilt) {
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    const double ct = std::cos(tilt), st = std::sin(tilt);
    Rotation3 r;
    r.m = {{{cy, -sy, 0.0}, {ct * sy, ct * cy, -st}, {st * sy, st * cy, ct}}};
    return r;
}

SyntheticClipRecord make_clip(const CorpusParams& p, std::size_t index) {
    const std::size_t n = p.frames;
    const std::size_t bones = p.joints - 1;
    const double period = 1.0 / p.beat_rate;

    SyntheticClipRecord rec;
    {
        std::ostringstream id;
        id << "clip-" << std::setw(6) << std::setfill('0') << index;
        rec.id = id.str();
    }

    Rng beat_rng(p.seed, "corpus/beats", index);
    std::vector<std::size_t> beats;
    double pos = 2.0 + beat_rng.uniform() * std::min(period, static_cast<double>(n) / 4.0);
    while (pos <= static_cast<double>(n) - 3.0) {
        beats.push_back(static_cast<std::size_t>(std::llround(pos)));
        pos += period * (1.0 + 0.2 * (2.0 * beat_rng.uniform() - 1.0));
    }
    if (beats.empty()) {
        beats.push_back(n / 2);
    }
    for (std::size_t i = 1; i < beats.size(); ++i) {
        if (beats[i] <= beats[i - 1] + 1) {
            beats[i] = beats[i - 1] + 2;
        }
    }
    while (!beats.empty() && beats.back() > n - 3) {
        beats.pop_back();
    }
    if (beats.empty()) {
        beats.push_back(n / 2);
    }
    rec.audio_beat_times = beats;

    Rng style_rng(p.seed, "corpus/style", index);
    rec.style_seed = (static_cast<std::uint64_t>(style_rng.next_u32()) << 32) | style_rng.next_u32();
    std::array<double, 8> style{};
    for (double& s : style) {
        s = 2.0 * style_rng.uniform() - 1.0;
    }

    const BeatProfile profile = beat_profile(beats, n);

    // Swing parameters are plain functions of the style code, so the pose
    // trajectory is recoverable from the audio channels alone.
    std::vector<double> base(bones), amp(bones);
    base[0] = 0.9 * style[0];
    amp[0] = 0.30 + 0.12 * style[1];
    for (std::size_t k = 1; k < bones; ++k) {
        const double sign = style[(k + 3) % 8] >= 0.0 ? 1.0 : -1.0;
        base[k] = 0.80 + 0.25 * style[(2 * k) % 8];
        amp[k] = sign * (0.28 + 0.10 * std::fabs(style[(2 * k + 1) % 8]));
    }
    const Rotation3 rot = style_rotation(3.14159265358979323846 * style[2], 0.35 * style[3]);

    Rng noise_rng(p.seed, "corpus/noise", index);
    rec.clip.frames = n;
    rec.clip.dims = 3 * bones;
    rec.clip.values = Tensor({n, 3 * bones});
    rec.clip.normalized = true;
    for (std::size_t t = 0; t < n; ++t) {
        const double s = profile.swing[t];
        double alpha = base[0] + amp[0] * s + p.noise_level * noise_rng.normal();
        for (std::size_t b = 0; b < bones; ++b) {
            if (b > 0) {
                alpha += base[b] + amp[b] * s + p.noise_level * noise_rng.normal();
            }
            const auto d = rot.apply(std::cos(alpha), std::sin(alpha), 0.0);
            const double norm = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
            rec.clip.values.at(t, 3 * b) = d[0] / norm;
            rec.clip.values.at(t, 3 * b + 1) = d[1] / norm;
            rec.clip.values.at(t, 3 * b + 2) = d[2] / norm;
        }
    }

    // Audio channels: 0 impulse train, 1-3 smoothed impulses, 4-5 beat phase,
    // 6-7 distance to surrounding beats, 8-15 style code, 16-31 texture.
    Rng audio_rng(p.seed, "corpus/audio", index);
    rec.audio.values = Tensor({n, AudioFeatureSeq::kChannels});
    const double widths[3] = {0.8, 1.6, 3.0};
    for (std::size_t t = 0; t < n; ++t) {
        double* row = rec.audio.values.data() + t * AudioFeatureSeq::kChannels;
        double since = 4.0 * period, until = 4.0 * period;
        for (std::size_t b : beats) {
            const double d = static_cast<double>(t) - static_cast<double>(b);
            if (d == 0.0) {
                row[0] = 1.0;
            }
            for (int w = 0; w < 3; ++w) {
                row[1 + w] += std::exp(-0.5 * d * d / (widths[w] * widths[w]));
            }
            if (d >= 0.0) {
                since = std::min(since, d);
            } else {
                until = std::min(until, -d);
            }
        }
        row[4] = std::sin(phi[t]);
        row[5] = std::cos(phi[t]);
        row[6] = std::min(since / period, 2.0);
        row[7] = std::min(until / period, 2.0);
        for (std::size_t k = 0; k < 8; ++k) {
            row[8 + k] = style[k];
        }
        for (std::size_t k = 16; k < AudioFeatureSeq::kChannels; ++k) {
            row[k] = 0.1 * audio_rng.normal();
        }
    }

    rec.validate();
    return rec;
}

} // namespace

std::vector<SyntheticClipRecord> generate_synthetic_corpus(const CorpusParams& params) {
    params.validate();
    std::vector<SyntheticClipRecord> records(params.num_clips);
    parallel_for(params.num_clips,
                 [&](std::size_t i) { records[i] = make_clip(params, i); });
    return records;
}

// ---------------------------------------------------------------------------
// Dataset persistence

nlohmann::json record_to_json(const SyntheticClipRecord& rec) {
    nlohmann::json j;
    j["id"] = rec.id;
    j["J"] = rec.clip.joints();
    j["N"] = rec.clip.frames;
    nlohmann::json poses = nlohmann::json::array();
    for (std::size_t t = 0; t < rec.clip.frames; ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < rec.clip.dims; ++c) {
            row.push_back(rec.clip.values.at(t, c));
        }
        poses.push_back(std::move(row));
    }
    j["poses"] = std::move(poses);
    nlohmann::json audio = nlohmann::json::array();
    for (std::size_t t = 0; t < rec.audio.frames(); ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < AudioFeatureSeq::kChannels; ++c) {
            row.push_back(rec.audio.values.at(t, c));
        }
        audio.push_back(std::move(row));
    }
    j["audio"] = std::move(audio);
    j["beat_times"] = rec.audio_beat_times;
    j["style_seed"] = rec.style_seed;
    return j;
}

SyntheticClipRecord record_from_json(const nlohmann::json& j) {
    SyntheticClipRecord rec;
    rec.id = j.at("id").get<std::string>();
    const auto joints = j.at("J").get<std::size_t>();
    const auto frames = j.at("N").get<std::size_t>();
    if (joints < 2) {
        throw ParseError("record has J < 2");
    }
    const std::size_t dims = 3 * (joints - 1);

    const auto& poses = j.at("poses");
    if (!poses.is_array() || poses.empty()) {
        throw ParseError("record poses must be a non-empty array");
    }
    rec.clip.frames = poses.size();
    rec.clip.dims = dims;
    rec.clip.values = Tensor({rec.clip.frames, dims});
    for (std::size_t t = 0; t < poses.size(); ++t) {
        const auto& row = poses.at(t);
        if (row.size() != dims) {
            throw ParseError("pose row has " + std::to_string(row.size()) + " values, expected " +
                             std::to_string(dims));
        }
        for (std::size_t c = 0; c < dims; ++c) {
            rec.clip.values.at(t, c) = row.at(c).get<double>();
        }
    }
    if (rec.clip.frames != frames) {
        throw ParseError("pose row count differs from declared N");
    }

    const auto& audio = j.at("audio");
    rec.audio.values = Tensor({audio.size(), AudioFeatureSeq::kChannels});
    for (std::size_t t = 0; t < audio.size(); ++t) {
        const auto& row = audio.at(t);
        if (row.size() != AudioFeatureSeq::kChannels) {
            throw ParseError("audio row has " + std::to_string(row.size()) + " channels");
        }
        for (std::size_t c = 0; c < AudioFeatureSeq::kChannels; ++c) {
            rec.audio.values.at(t, c) = row.at(c).get<double>();
        }
    }

    rec.audio_beat_times = j.at("beat_times").get<std::vector<std::size_t>>();
    rec.style_seed = j.at("style_seed").get<std::uint64_t>();
    rec.validate();
    return rec;
}

void atomic_write_file(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open for writing: " + tmp);
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) {
            throw IoError("write failed: " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("rename failed for " + path + ": " + ec.message());
    }
}

void write_dataset(const std::string& path, const std::vector<SyntheticClipRecord>& records,
                   const nlohmann::json* meta) {
    std::string buffer;
    buffer += kDatasetHeader;
    buffer += '\n';
    if (meta != nullptr && !meta->is_null()) {
        nlohmann::json line;
        line["meta"] = *meta;
        buffer += line.dump();
        buffer += '\n';
    }
    for (const auto& rec : records) {
        buffer += record_to_json(rec).dump();
        buffer += '\n';
    }
    atomic_write_file(path, buffer);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open dataset: " + path);
    }
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(in, line)) {
        throw ParseError(path + ": line 1: missing header");
    }
    ++line_no;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": line 1: bad header: " + e.what());
    }
    if (header.value("format", "") != "seqdiff-dataset") {
        throw ParseError(path + ": line 1: not a seqdiff dataset");
    }
    if (header.value("version", -1) != 1) {
        throw ParseError(path + ": line 1: unsupported dataset version");
    }

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (j.is_object() && j.contains("meta") && j.size() == 1) {
            ds.meta = j.at("meta");
            continue;
        }
        try {
            ds.records.push_back(record_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return ds;
}

} // namespace seqdiff
