#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "seqdiff/gesture.hpp"
#include "seqdiff/metrics.hpp"
#include "seqdiff/rng.hpp"

using namespace seqdiff;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("seqdiff-gesture-" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("axis-aligned joints give a unit axis direction") {
    const std::array<double, 3> joints[2] = {{0, 0, 0}, {2, 0, 0}};
    const auto dirs = joints_to_directions(joints);
    REQUIRE(dirs.size() == 3);
    CHECK(dirs[0] == 1.0);
    CHECK(dirs[1] == 0.0);
    CHECK(dirs[2] == 0.0);
}

TEST_CASE("diagonal joints normalize to sqrt(2)/2 components") {
    const std::array<double, 3> joints[2] = {{0, 0, 0}, {1, 1, 0}};
    const auto dirs = joints_to_directions(joints);
    CHECK(dirs[0] == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-15));
    CHECK(dirs[1] == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-15));
    CHECK(dirs[2] == 0.0);
}

TEST_CASE("coincident joints raise a degenerate-bone error") {
    const std::array<double, 3> joints[3] = {{0, 0, 0}, {1, 0, 0}, {1, 0, 0}};
    CHECK_THROWS_AS((void)joints_to_directions(joints), ValueError);
}

TEST_CASE("directions_to_joints walks the chain") {
    const double dirs[3] = {1, 0, 0};
    const double lengths[1] = {2.0};
    const auto joints = directions_to_joints(dirs, lengths, {0, 0, 0});
    REQUIRE(joints.size() == 2);
    CHECK(joints[1][0] == 2.0);
    CHECK(joints[1][1] == 0.0);
    CHECK(joints[1][2] == 0.0);
}

TEST_CASE("directions_to_joints rejects zero directions and bad lengths") {
    const double zero[3] = {0, 0, 0};
    const double len[1] = {1.0};
    CHECK_THROWS_AS((void)directions_to_joints(zero, len, {0, 0, 0}), ValueError);

    const double unit[3] = {1, 0, 0};
    const double bad_len[1] = {0.0};
    CHECK_THROWS_AS((void)directions_to_joints(unit, bad_len, {0, 0, 0}), ValueError);

    const double stretched[3] = {1.2, 0, 0}; // norm outside [0.9, 1.1]
    CHECK_THROWS_AS((void)directions_to_joints(stretched, len, {0, 0, 0}), ValueError);

    const double slightly_off[3] = {1.05, 0, 0}; // renormalized internally
    const auto joints = directions_to_joints(slightly_off, len, {0, 0, 0});
    CHECK(joints[1][0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("random chains round-trip through directions and back") {
    Rng rng(15, "chain");
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t joints_n = 2 + rng.uniform_int(8);
        std::vector<std::array<double, 3>> joints(joints_n);
        joints[0] = {rng.normal(), rng.normal(), rng.normal()};
        std::vector<double> lengths;
        for (std::size_t j = 1; j < joints_n; ++j) {
            std::array<double, 3> step{rng.normal(), rng.normal(), rng.normal()};
            const double norm = std::sqrt(step[0] * step[0] + step[1] * step[1] + step[2] * step[2]);
            const double len = 0.5 + rng.uniform();
            lengths.push_back(len);
            for (int c = 0; c < 3; ++c) {
                joints[j][c] = joints[j - 1][c] + step[c] / norm * len;
            }
        }
        const auto dirs = joints_to_directions(joints);
        const auto rebuilt = directions_to_joints(dirs, lengths, joints[0]);
        REQUIRE(rebuilt.size() == joints_n);
        for (std::size_t j = 0; j < joints_n; ++j) {
            for (int c = 0; c < 3; ++c) {
                CHECK(rebuilt[j][c] == doctest::Approx(joints[j][c]).epsilon(1e-9));
            }
        }
        // And the inverse direction: directions of the rebuilt chain match.
        const auto dirs2 = joints_to_directions(rebuilt);
        for (std::size_t k = 0; k < dirs.size(); ++k) {
            CHECK(dirs2[k] == doctest::Approx(dirs[k]).epsilon(1e-9));
        }
    }
}

TEST_CASE("corpus generation is a pure function of its parameters") {
    CorpusParams p;
    p.seed = 9;
    p.num_clips = 12;
    p.joints = 5;
    const auto a = generate_synthetic_corpus(p);
    const auto b = generate_synthetic_corpus(p);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].style_seed == b[i].style_seed);
        CHECK(a[i].audio_beat_times == b[i].audio_beat_times);
        CHECK(a[i].clip.values.values() == b[i].clip.values.values());
        CHECK(a[i].audio.values.values() == b[i].audio.values.values());
    }
}

TEST_CASE("serial and parallel corpus generation agree bit for bit") {
    CorpusParams p;
    p.seed = 31;
    p.num_clips = 16;
    ::setenv("SEQDIFF_THREADS", "1", 1);
    const auto serial = generate_synthetic_corpus(p);
    ::setenv("SEQDIFF_THREADS", "4", 1);
    const auto parallel = generate_synthetic_corpus(p);
    ::unsetenv("SEQDIFF_THREADS");
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].clip.values.values() == parallel[i].clip.values.values());
        CHECK(serial[i].audio.values.values() == parallel[i].audio.values.values());
    }
}

TEST_CASE("minimal skeleton gives 3 direction components") {
    CorpusParams p;
    p.seed = 4;
    p.num_clips = 1;
    p.joints = 2;
    const auto records = generate_synthetic_corpus(p);
    CHECK(records[0].clip.dims == 3);
    CHECK(records[0].clip.frames == 34);
}

TEST_CASE("every generated direction is unit within 1e-9") {
    CorpusParams p;
    p.seed = 21;
    p.num_clips = 8;
    p.noise_level = 0.05;
    for (const auto& rec : generate_synthetic_corpus(p)) {
        for (std::size_t t = 0; t < rec.clip.frames; ++t) {
            for (std::size_t b = 0; b < rec.clip.dims / 3; ++b) {
                const double x = rec.clip.values.at(t, 3 * b);
                const double y = rec.clip.values.at(t, 3 * b + 1);
                const double z = rec.clip.values.at(t, 3 * b + 2);
                CHECK(std::fabs(std::sqrt(x * x + y * y + z * z) - 1.0) < 1e-9);
            }
        }
    }
}

TEST_CASE("noise-free clips put kinematic beats on the audio beats within one frame") {
    CorpusParams p;
    p.seed = 77;
    p.num_clips = 24;
    p.joints = 5;
    p.noise_level = 0.0;
    const auto records = generate_synthetic_corpus(p);

    std::vector<GestureClip> clips;
    for (const auto& r : records) {
        clips.push_back(r.clip);
    }
    const auto maac_values = maac(clips);

    for (const auto& rec : records) {
        const auto beats = kinematic_beats(rec.clip, maac_values, 0.3);
        // Every audio beat has a kinematic beat within +/-1 frame...
        for (std::size_t audio : rec.audio_beat_times) {
            bool matched = false;
            for (std::size_t kin : beats) {
                matched |= (kin + 1 >= audio && kin <= audio + 1);
            }
            INFO("clip " << rec.id << " audio beat " << audio);
            CHECK(matched);
        }
        // ...and every kinematic beat sits within +/-1 frame of an audio beat.
        for (std::size_t kin : beats) {
            bool matched = false;
            for (std::size_t audio : rec.audio_beat_times) {
                matched |= (kin + 1 >= audio && kin <= audio + 1);
            }
            INFO("clip " << rec.id << " kinematic beat " << kin);
            CHECK(matched);
        }
    }
}

TEST_CASE("dataset files round-trip exactly") {
    TempDir tmp;
    CorpusParams p;
    p.seed = 13;
    p.num_clips = 6;
    const auto records = generate_synthetic_corpus(p);
    nlohmann::json meta = {{"purpose", "round-trip"}};
    write_dataset(tmp.file("d.sdd"), records, &meta);

    const Dataset ds = read_dataset(tmp.file("d.sdd"));
    CHECK(ds.meta.at("purpose") == "round-trip");
    REQUIRE(ds.records.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(ds.records[i].id == records[i].id);
        CHECK(ds.records[i].style_seed == records[i].style_seed);
        CHECK(ds.records[i].audio_beat_times == records[i].audio_beat_times);
        CHECK(ds.records[i].clip.values.values() == records[i].clip.values.values());
        CHECK(ds.records[i].audio.values.values() == records[i].audio.values.values());
    }

    // Header line is pinned.
    std::ifstream in(tmp.file("d.sdd"));
    std::string header;
    std::getline(in, header);
    CHECK(header == kDatasetHeader);
}

TEST_CASE("an empty dataset reads back as an empty list") {
    TempDir tmp;
    write_dataset(tmp.file("empty.sdd"), {});
    const Dataset ds = read_dataset(tmp.file("empty.sdd"));
    CHECK(ds.records.empty());
    CHECK(ds.meta.is_null());
}

TEST_CASE("a truncated record names the offending line") {
    TempDir tmp;
    CorpusParams p;
    p.seed = 2;
    p.num_clips = 2;
    const auto records = generate_synthetic_corpus(p);
    write_dataset(tmp.file("t.sdd"), records);

    std::ifstream in(tmp.file("t.sdd"));
    std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    contents.resize(contents.size() * 2 / 3); // cut into the last record
    std::ofstream out(tmp.file("t.sdd"), std::ios::trunc);
    out << contents;
    out.close();

    try {
        (void)read_dataset(tmp.file("t.sdd"));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("a bad header or version is rejected") {
    TempDir tmp;
    {
        std::ofstream out(tmp.file("h.sdd"));
        out << "{\"format\":\"something-else\",\"version\":1}\n";
    }
    CHECK_THROWS_AS((void)read_dataset(tmp.file("h.sdd")), ParseError);
    {
        std::ofstream out(tmp.file("v.sdd"));
        out << "{\"format\":\"seqdiff-dataset\",\"version\":2}\n";
    }
    CHECK_THROWS_AS((void)read_dataset(tmp.file("v.sdd")), ParseError);
    CHECK_THROWS_AS((void)read_dataset(tmp.file("missing.sdd")), IoError);
}

TEST_CASE("corpus parameter bounds are enforced") {
    CorpusParams p;
    p.num_clips = 0;
    CHECK_THROWS_AS((void)generate_synthetic_corpus(p), ValueError);
    p.num_clips = 1;
    p.joints = 1;
    CHECK_THROWS_AS((void)generate_synthetic_corpus(p), ValueError);
    p.joints = 5;
    p.beat_rate = 0.5;
    CHECK_THROWS_AS((void)generate_synthetic_corpus(p), ValueError);
}

TEST_CASE("context extraction copies the first M frames") {
    CorpusParams p;
    p.seed = 5;
    p.num_clips = 1;
    const auto records = generate_synthetic_corpus(p);
    const Context ctx = records[0].context(4);
    CHECK(ctx.initial_count() == 4);
    CHECK_FALSE(ctx.uncond_mask);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t c = 0; c < records[0].clip.dims; ++c) {
            CHECK(ctx.initial_poses.at(i, c) == records[0].clip.values.at(i, c));
        }
    }
    CHECK_THROWS_AS((void)records[0].context(40), ValueError);
}
