#include "vqmpt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace vqmpt {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

bool get_bytes(std::istream& in, void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount()) == n;
}

std::uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!get_bytes(in, b, 4))
        throw CheckpointTruncationError(std::string("container truncated while reading ") + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in, const char* what) {
    unsigned char b[8];
    if (!get_bytes(in, b, 8))
        throw CheckpointTruncationError(std::string("container truncated while reading ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

const NamedArray& Checkpoint::require(const std::string& name) const {
    const NamedArray* a = find(name);
    if (!a) throw CheckpointShapeError("missing array '" + name + "'");
    return *a;
}

void save_container(const std::string& path, const char* magic, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointIoError("cannot open " + path + " for writing");
    out.write(magic, 8);
    put_u32(out, ckpt.version);
    std::string json = ckpt.config.dump();
    put_u64(out, json.size());
    out.write(json.data(), static_cast<std::streamsize>(json.size()));
    put_u32(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
    for (const auto& a : ckpt.arrays) {
        put_u32(out, static_cast<std::uint32_t>(a.name.size()));
        out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
        for (auto e : a.shape) put_u32(out, e);
        if (a.count() != a.values.size())
            throw CheckpointShapeError("array '" + a.name + "' holds " +
                                       std::to_string(a.values.size()) + " values for " +
                                       std::to_string(a.count()) + " declared");
    }
    for (const auto& a : ckpt.arrays)
        for (float v : a.values) put_f32(out, v);
    if (!out) throw CheckpointIoError("write failed for " + path);
}

Checkpoint load_container(const std::string& path, const char* magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointIoError("cannot open " + path);
    char got_magic[8];
    if (!get_bytes(in, got_magic, 8))
        throw CheckpointTruncationError("container truncated while reading magic");
    if (std::memcmp(got_magic, magic, 8) != 0)
        throw CheckpointFormatError("magic mismatch in " + path + ": expected " +
                                    std::string(magic, 8) + ", found " +
                                    std::string(got_magic, 8));
    Checkpoint ckpt;
    ckpt.version = get_u32(in, "version");
    if (ckpt.version != kContainerVersion)
        throw CheckpointVersionError("unsupported container version " +
                                     std::to_string(ckpt.version));
    std::uint64_t json_len = get_u64(in, "config length");
    if (json_len > (1ull << 31))
        throw CheckpointFormatError("implausible config block of " + std::to_string(json_len) +
                                    " bytes");
    std::string json(json_len, '\0');
    if (!get_bytes(in, json.data(), json_len))
        throw CheckpointTruncationError("container truncated inside the config block");
    try {
        ckpt.config = nlohmann::json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
        throw CheckpointFormatError(std::string("config block is not valid JSON: ") + e.what());
    }
    std::uint32_t count = get_u32(in, "array count");
    std::uint64_t total_values = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray a;
        std::uint32_t name_len = get_u32(in, "array name length");
        if (name_len > 4096) throw CheckpointFormatError("implausible array name length");
        a.name.resize(name_len);
        if (!get_bytes(in, a.name.data(), name_len))
            throw CheckpointTruncationError("container truncated inside the shape table");
        std::uint32_t rank = get_u32(in, "array rank");
        if (rank > 8) throw CheckpointFormatError("implausible array rank");
        for (std::uint32_t r = 0; r < rank; ++r)
            a.shape.push_back(get_u32(in, "array extent"));
        std::uint64_t n = a.count();
        if (n > (1ull << 31))
            throw CheckpointShapeError("array '" + a.name + "' declares implausible size");
        total_values += n;
        ckpt.arrays.push_back(std::move(a));
    }
    for (auto& a : ckpt.arrays) {
        a.values.resize(a.count());
        if (!a.values.empty() &&
            !get_bytes(in, a.values.data(), a.values.size() * sizeof(float)))
            throw CheckpointTruncationError("container truncated inside payload of '" + a.name +
                                            "'");
        if constexpr (std::endian::native == std::endian::big)
            for (auto& v : a.values) {
                std::uint32_t bits;
                std::memcpy(&bits, &v, 4);
                bits = __builtin_bswap32(bits);
                std::memcpy(&v, &bits, 4);
            }
    }
    char extra;
    if (in.read(&extra, 1); in.gcount() == 1)
        throw CheckpointFormatError("trailing bytes after declared payload");
    return ckpt;
}

}  // namespace vqmpt
