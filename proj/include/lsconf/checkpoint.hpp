#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lsconf/ndarray.hpp"

namespace lsconf {

struct NamedArray {
    std::string name;
    NdArray value;
};

/// Parameter container.
///
/// Layout: magic "LSF1", manifest length as little-endian uint64, manifest
/// JSON text, then raw little-endian float64 payload. The manifest lists
/// {name, shape, offset} per entry (offset in bytes from payload start) and
/// carries a free-form "meta" object.
struct Checkpoint {
    std::vector<NamedArray> entries;
    nlohmann::json meta = nlohmann::json::object();

    const NdArray& get(const std::string& name) const;
};

inline constexpr std::string_view kCheckpointMagic = "LSF1";

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Hex SHA-256 of the float64 payload of an encoded checkpoint.
std::string payload_fingerprint(std::string_view encoded);

std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace lsconf
