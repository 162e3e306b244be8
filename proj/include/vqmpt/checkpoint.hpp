#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace vqmpt {

// Load failures carry a distinct type per failure mode so callers can react
// (and tests can assert) without string matching.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& m) : std::runtime_error(m) {}
};
struct CheckpointFormatError : CheckpointError {
    explicit CheckpointFormatError(const std::string& m) : CheckpointError(m) {}
};
struct CheckpointVersionError : CheckpointError {
    explicit CheckpointVersionError(const std::string& m) : CheckpointError(m) {}
};
struct CheckpointTruncationError : CheckpointError {
    explicit CheckpointTruncationError(const std::string& m) : CheckpointError(m) {}
};
struct CheckpointShapeError : CheckpointError {
    explicit CheckpointShapeError(const std::string& m) : CheckpointError(m) {}
};
struct CheckpointIoError : CheckpointError {
    explicit CheckpointIoError(const std::string& m) : CheckpointError(m) {}
};

struct NamedArray {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::vector<float> values;

    std::uint64_t count() const {
        std::uint64_t n = 1;
        for (auto e : shape) n *= e;
        return shape.empty() ? 0 : n;
    }
};

// Container layout (all integers little-endian):
//   8-byte magic, u32 version, u64 JSON length + UTF-8 JSON config,
//   u32 array count, then per array a shape-table entry
//   (u32 name length + bytes, u32 rank, u32 extents...), then the raw
//   float32 payloads back to back in declared order.
struct Checkpoint {
    std::uint32_t version = 1;
    nlohmann::json config;
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const;
    const NamedArray& require(const std::string& name) const;
};

inline constexpr char kCheckpointMagic[9] = "VQMPTCK1";
inline constexpr char kDatasetMagic[9] = "VQMPTDS1";
inline constexpr std::uint32_t kContainerVersion = 1;

void save_container(const std::string& path, const char* magic, const Checkpoint& ckpt);
Checkpoint load_container(const std::string& path, const char* magic);

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
    save_container(path, kCheckpointMagic, c);
}
inline Checkpoint load_checkpoint(const std::string& path) {
    return load_container(path, kCheckpointMagic);
}

}  // namespace vqmpt
