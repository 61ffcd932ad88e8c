#include "seqdiff/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "seqdiff/gesture.hpp"
#include "seqdiff/rng.hpp"

namespace seqdiff {

namespace {

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos, const std::string& origin) {
    if (pos + sizeof(T) > in.size()) {
        throw ParseError(origin + ": truncated checkpoint");
    }
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

} // namespace

std::string serialize_checkpoint(
    const nlohmann::json& config,
    const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::string out;
    out.append(kCheckpointMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);

    const std::string config_str = config.dump();
    put<std::uint64_t>(out, config_str.size());
    out += config_str;

    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    std::uint64_t offset = 0;
    for (const auto& [name, tensor] : tensors) {
        put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        put<std::uint8_t>(out, static_cast<std::uint8_t>(tensor->rank()));
        for (std::size_t d : tensor->shape()) {
            put<std::uint64_t>(out, d);
        }
        put<std::uint64_t>(out, offset);
        offset += tensor->size() * sizeof(float);
    }

    put<std::uint64_t>(out, offset);
    for (const auto& [name, tensor] : tensors) {
        for (double v : tensor->values()) {
            put<float>(out, static_cast<float>(v));
        }
    }

    put<std::uint64_t>(out, fnv1a64(out.data(), out.size()));
    return out;
}

void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    atomic_write_file(path, serialize_checkpoint(config, tensors));
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin) {
    if (bytes.size() < 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t)) {
        throw ParseError(origin + ": too short to be a checkpoint");
    }
    if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
        throw ParseError(origin + ": bad magic, not a checkpoint");
    }

    const std::size_t body_len = bytes.size() - sizeof(std::uint64_t);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + body_len, sizeof(stored));
    const std::uint64_t actual = fnv1a64(bytes.data(), body_len);
    if (stored != actual) {
        throw ParseError(origin + ": checksum mismatch, file is corrupt");
    }

    std::size_t pos = 4;
    Checkpoint ckpt;
    ckpt.checksum = stored;
    const auto version = take<std::uint32_t>(bytes, pos, origin);
    if (version != kCheckpointVersion) {
        throw CompatError(origin + ": unsupported checkpoint version " + std::to_string(version));
    }

    const auto config_len = take<std::uint64_t>(bytes, pos, origin);
    if (pos + config_len > body_len) {
        throw ParseError(origin + ": truncated config block");
    }
    try {
        ckpt.config = nlohmann::json::parse(bytes.substr(pos, config_len));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin + ": bad config JSON: " + e.what());
    }
    pos += config_len;

    struct Entry {
        std::string name;
        std::vector<std::size_t> shape;
        std::uint64_t offset;
    };
    const auto count = take<std::uint32_t>(bytes, pos, origin);
    std::vector<Entry> entries(count);
    for (auto& e : entries) {
        const auto name_len = take<std::uint16_t>(bytes, pos, origin);
        if (pos + name_len > body_len) {
            throw ParseError(origin + ": truncated tensor name");
        }
        e.name = bytes.substr(pos, name_len);
        pos += name_len;
        const auto rank = take<std::uint8_t>(bytes, pos, origin);
        e.shape.resize(rank);
        for (auto& d : e.shape) {
            d = take<std::uint64_t>(bytes, pos, origin);
        }
        e.offset = take<std::uint64_t>(bytes, pos, origin);
    }

    const auto payload_len = take<std::uint64_t>(bytes, pos, origin);
    if (pos + payload_len != body_len) {
        throw ParseError(origin + ": payload length mismatch");
    }
    for (const auto& e : entries) {
        const std::size_t n = shape_product(e.shape);
        if (e.offset + n * sizeof(float) > payload_len) {
            throw ParseError(origin + ": tensor " + e.name + " extends past payload");
        }
        Tensor t(e.shape);
        for (std::size_t i = 0; i < n; ++i) {
            float f;
            std::memcpy(&f, bytes.data() + pos + e.offset + i * sizeof(float), sizeof(float));
            t[i] = static_cast<double>(f);
        }
        ckpt.tensors.emplace(e.name, std::move(t));
    }
    return ckpt;
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint: " + path);
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes, path);
}

void quantize_params_f32(ParamStore& params) {
    for (auto& [name, tensor] : params.entries()) {
        for (double& v : tensor.values()) {
            v = static_cast<double>(static_cast<float>(v));
        }
    }
}

std::uint64_t params_checksum(const ParamStore& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, tensor] : params.entries()) {
        h = fnv1a64(name.data(), name.size(), h);
        for (std::size_t d : tensor.shape()) {
            const auto dd = static_cast<std::uint64_t>(d);
            h = fnv1a64(&dd, sizeof(dd), h);
        }
        for (double v : tensor.values()) {
            const float f = static_cast<float>(v);
            h = fnv1a64(&f, sizeof(f), h);
        }
    }
    return h;
}

} // namespace seqdiff
