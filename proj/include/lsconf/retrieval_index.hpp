#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lsconf/ls_geometry.hpp"
#include "lsconf/sae_model.hpp"
#include "lsconf/texture_data.hpp"

namespace lsconf {

struct LatentEncoding {
    std::string id;
    std::vector<double> z;
    ClassSimilarityVector v;  // cached class_similarity(z)
    std::optional<TextureClass> label;
    std::string collection;
};

/// Hex content hash of a model's checkpoint payload.
std::string model_fingerprint(const SaeModel& model);

/// Immutable collection of encodings produced by one encoder.
class EncodingIndex {
public:
    EncodingIndex(ClusterConfig cfg, std::string model_fingerprint, std::vector<LatentEncoding> entries = {});

    const ClusterConfig& cfg() const noexcept { return cfg_; }
    const std::string& fingerprint() const noexcept { return fingerprint_; }
    const std::vector<LatentEncoding>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    /// Entry with the given id, or nullptr.
    const LatentEncoding* find(std::string_view id) const;

    /// Header line {format, version, cfg, model_fingerprint, n_entries, n_d}
    /// followed by one JSON line per entry {id, collection, label?, z, v}.
    std::string serialize() const;
    /// Checks the header counts and that every cached v matches its z.
    static EncodingIndex parse(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static EncodingIndex load(const std::filesystem::path& path);

private:
    ClusterConfig cfg_;
    std::string fingerprint_;
    std::vector<LatentEncoding> entries_;
};

struct IndexSample {
    std::string id;
    NdArray image;  // [H, W] or [C, H, W]
    std::optional<TextureClass> label;
};

/// One eval-mode encode per sample. Each sample is encoded on its own so a
/// later query with the same image reproduces its z exactly.
EncodingIndex build_index(const SaeModel& model, std::span<const IndexSample> samples, const ClusterConfig& cfg,
                          const std::string& collection);

/// Eval-mode latent of a single image.
std::vector<double> encode_image(const SaeModel& model, const NdArray& image);

struct SearchHit {
    std::string id;
    double score;
    std::optional<TextureClass> label;
};

/// Ranks every entry of `index` against a query similarity vector by
/// descending pairwise similarity, ties by ascending id.
std::vector<SearchHit> rank_entries(const EncodingIndex& index, const ClassSimilarityVector& query);

std::vector<SearchHit> search_by_image(const EncodingIndex& index, const SaeModel& model, const NdArray& image);

/// Ranks index_b against the stored encoding of query_id in index_a.
std::vector<SearchHit> search_cross(const EncodingIndex& index_a, const EncodingIndex& index_b,
                                    std::string_view query_id);

enum class Jitter { center, random_in_cluster };

struct TextQuery {
    struct Term {
        std::string class_name;
        double weight = 1.0;
    };
    std::vector<Term> terms;
    Jitter jitter = Jitter::center;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Maps a class name or alias ("no texture", "checkered", "horizontal lines",
/// "vertical lines") to its class. Case and surrounding blanks are ignored.
TextureClass resolve_class_name(std::string_view name);

/// Parses "name" or "name:weight,name:weight".
TextQuery parse_text_query(std::string_view text, Jitter jitter = Jitter::center, std::uint64_t seed = 0);

/// Weight-normalized convex combination of the per-term cluster points.
std::vector<double> text_query_to_ls(const TextQuery& query, const ClusterConfig& cfg);

std::vector<SearchHit> search_by_text(const EncodingIndex& index, const TextQuery& query);

}  // namespace lsconf
