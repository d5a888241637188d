#include "lsconf/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "lsconf/errors.hpp"

namespace lsconf {

namespace {

static_assert(sizeof(double) == 8);

void put_u64le(std::string& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64le(const unsigned char* p)
{
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

void put_f64le(char* dst, double d)
{
    std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) dst[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
}

double get_f64le(const unsigned char* p) { return std::bit_cast<double>(get_u64le(p)); }

struct Layout {
    std::size_t manifest_begin;
    std::size_t manifest_size;
    std::size_t payload_begin;
};

Layout parse_layout(std::string_view bytes)
{
    if (bytes.size() < 12 || bytes.substr(0, 4) != kCheckpointMagic)
        throw IoError("checkpoint: missing LSF1 magic");
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint64_t len = get_u64le(raw + 4);
    if (len > bytes.size() - 12) throw IoError("checkpoint: truncated manifest");
    return {12, static_cast<std::size_t>(len), 12 + static_cast<std::size_t>(len)};
}

}  // namespace

const NdArray& Checkpoint::get(const std::string& name) const
{
    for (const auto& e : entries)
        if (e.name == name) return e.value;
    throw IoError("checkpoint: no entry named '" + name + "'");
}

std::string encode_checkpoint(const Checkpoint& ckpt)
{
    nlohmann::json manifest;
    manifest["format"] = "LSF1";
    manifest["version"] = 1;
    manifest["meta"] = ckpt.meta;
    auto list = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& e : ckpt.entries) {
        list.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"offset", offset}});
        offset += e.value.size() * 8;
    }
    manifest["entries"] = std::move(list);
    manifest["payload_bytes"] = offset;
    const std::string text = manifest.dump();

    std::string out;
    out.reserve(12 + text.size() + offset);
    out.append(kCheckpointMagic);
    put_u64le(out, text.size());
    out.append(text);
    const std::size_t payload = out.size();
    out.resize(payload + offset);
    char* dst = out.data() + payload;
    for (const auto& e : ckpt.entries)
        for (double v : e.value.values()) {
            put_f64le(dst, v);
            dst += 8;
        }
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes)
{
    const Layout lay = parse_layout(bytes);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(lay.manifest_begin, lay.manifest_size));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint: bad manifest: ") + e.what());
    }
    const std::size_t payload_size = bytes.size() - lay.payload_begin;
    if (manifest.value("payload_bytes", std::size_t{0}) != payload_size)
        throw IoError("checkpoint: payload size does not match manifest");
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data()) + lay.payload_begin;

    Checkpoint ckpt;
    ckpt.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& e : manifest.at("entries")) {
        Shape shape = e.at("shape").get<Shape>();
        const std::size_t offset = e.at("offset").get<std::size_t>();
        const std::size_t count = numel(shape);
        if (offset % 8 != 0 || offset + count * 8 > payload_size)
            throw IoError("checkpoint: entry '" + e.at("name").get<std::string>() + "' out of payload bounds");
        std::vector<double> data(count);
        for (std::size_t i = 0; i < count; ++i) data[i] = get_f64le(raw + offset + 8 * i);
        ckpt.entries.push_back({e.at("name").get<std::string>(), NdArray(std::move(shape), std::move(data))});
    }
    return ckpt;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::string sha256_hex(std::string_view bytes)
{
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
        throw Error("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string payload_fingerprint(std::string_view encoded)
{
    const Layout lay = parse_layout(encoded);
    return sha256_hex(encoded.substr(lay.payload_begin));
}

}  // namespace lsconf
