#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lsconf/ndarray.hpp"

namespace lsconf {

enum class TextureClass { uniform = 0, hlines = 1, vlines = 2, squares = 3, dots = 4 };

inline constexpr std::size_t kTextureClassCount = 5;

std::string_view texture_class_name(TextureClass c);
TextureClass texture_class_from_name(std::string_view name);
TextureClass texture_class_from_index(std::size_t i);
const std::vector<std::string>& texture_class_names();

struct TextureSample {
    NdArray image;  // [hw, hw], values in [0, 1]
    TextureClass label;
    std::string id;
    std::uint64_t seed;
};

/// Deterministic stream seed for a named item under a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view key);

/// Procedural texture, a pure function of (cls, seed, hw). Requires hw >= 16.
TextureSample generate(TextureClass cls, std::uint64_t seed, std::size_t hw, std::string id = {});

enum class Mirror { none, horizontal, vertical };

/// Fully resolved parameters of one augmented output.
struct AugmentChain {
    double rotation_deg = 0.0;  // [-15, 15]
    double scale = 1.0;         // [0.9, 1.1]
    double shear_deg = 0.0;     // [-5, 5]
    double brightness = 1.0;    // [0.8, 1.2], multiplicative
    double contrast = 1.0;      // [0.8, 1.2], around the image mean
    std::size_t erase_x = 0, erase_y = 0, erase_w = 0, erase_h = 0;
    double fill = 0.5;
    Mirror mirror = Mirror::none;

    nlohmann::json to_json() const;
    static AugmentChain from_json(const nlohmann::json& j);
};

/// Samples the random part of a chain (mirror stays none).
AugmentChain sample_augment_chain(std::uint64_t seed, std::size_t hw, double fill);

NdArray apply_augment_chain(const NdArray& image, const AugmentChain& chain);

NdArray mirror_horizontal(const NdArray& image);
NdArray mirror_vertical(const NdArray& image);

/// Augmented copy plus its horizontal and vertical mirrors (3 samples).
/// `fill` is the value written into the erased rectangle.
std::vector<TextureSample> augment(const TextureSample& sample, std::uint64_t seed, double fill = 0.5);

enum class SplitMode { pre, post };

SplitMode parse_split_mode(const std::string& s);
std::string to_string(SplitMode m);

struct SplitSpec {
    SplitMode mode = SplitMode::pre;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// One manifest row: enough to regenerate the image bit-for-bit.
struct SampleRecord {
    std::string id;
    TextureClass label;
    std::uint64_t seed;  // base image seed
    std::string split;   // "train" or "test"
    std::size_t hw;
    std::optional<AugmentChain> chain;

    nlohmann::json to_json() const;
    static SampleRecord from_json(const nlohmann::json& j);
};

NdArray render(const SampleRecord& rec);

struct Dataset {
    std::vector<SampleRecord> train;
    std::vector<SampleRecord> test;
    double fill = 0.5;  // mean pixel value of the base images
};

/// Stratified per-class split. Pre mode splits base images and augments only
/// the train part; post mode augments everything and then splits the
/// augmented samples. Requires per_class >= 10.
Dataset build_dataset(std::size_t per_class, const SplitSpec& split, std::size_t aug_per_image, std::size_t hw = 32);

/// JSON lines, train records first.
std::string manifest_text(const Dataset& ds);
void write_manifest(const std::filesystem::path& path, const Dataset& ds);
std::vector<SampleRecord> read_manifest(const std::filesystem::path& path);
std::vector<SampleRecord> parse_manifest(std::string_view text);

/// Raw little-endian float64 H x W blob.
void write_blob(const std::filesystem::path& path, const NdArray& image);
NdArray read_blob(const std::filesystem::path& path, std::size_t hw);

/// Reads a cached blob named <id>.f64 under cache_dir if present, otherwise
/// regenerates from the record.
NdArray load_image(const SampleRecord& rec, const std::filesystem::path& cache_dir = {});

}  // namespace lsconf
