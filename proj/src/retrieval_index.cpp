#include "lsconf/retrieval_index.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include "lsconf/checkpoint.hpp"
#include "lsconf/errors.hpp"

namespace lsconf {

namespace {

constexpr const char* kIndexFormat = "lsconf-index";
constexpr int kIndexVersion = 1;

std::string normalize_name(std::string_view s)
{
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out;
    bool space = false;
    for (std::size_t i = b; i < e; ++i) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (std::isspace(c)) {
            space = true;
            continue;
        }
        if (space) out += ' ';
        space = false;
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

struct Alias {
    const char* name;
    TextureClass cls;
};

constexpr Alias kAliases[] = {
    {"no texture", TextureClass::uniform},
    {"checkered", TextureClass::squares},
    {"horizontal lines", TextureClass::hlines},
    {"vertical lines", TextureClass::vlines},
};

void check_z(const std::vector<double>& z, const ClusterConfig& cfg, const std::string& id)
{
    if (z.size() != cfg.n_d())
        throw DimensionError("encoding '" + id + "' has " + std::to_string(z.size()) + " dims, cluster config has " +
                             std::to_string(cfg.n_d()));
}

}  // namespace

std::string model_fingerprint(const SaeModel& model)
{
    return payload_fingerprint(encode_checkpoint(model.to_checkpoint()));
}

EncodingIndex::EncodingIndex(ClusterConfig cfg, std::string model_fingerprint, std::vector<LatentEncoding> entries)
    : cfg_(std::move(cfg)), fingerprint_(std::move(model_fingerprint)), entries_(std::move(entries))
{
    for (const auto& e : entries_) {
        check_z(e.z, cfg_, e.id);
        if (e.v.size() != cfg_.n_c()) throw DimensionError("encoding '" + e.id + "' has a similarity vector of wrong length");
    }
}

const LatentEncoding* EncodingIndex::find(std::string_view id) const
{
    for (const auto& e : entries_)
        if (e.id == id) return &e;
    return nullptr;
}

std::string EncodingIndex::serialize() const
{
    nlohmann::json header{{"format", kIndexFormat},
                          {"version", kIndexVersion},
                          {"cfg", cfg_.to_json()},
                          {"model_fingerprint", fingerprint_},
                          {"n_entries", entries_.size()},
                          {"n_d", cfg_.n_d()}};
    std::string out = header.dump() + "\n";
    for (const auto& e : entries_) {
        nlohmann::json j{{"id", e.id}, {"collection", e.collection}, {"z", e.z}, {"v", e.v.v}};
        if (e.label) j["label"] = std::string(texture_class_name(*e.label));
        out += j.dump();
        out += '\n';
    }
    return out;
}

EncodingIndex EncodingIndex::parse(std::string_view text)
{
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line)) throw IoError("index: empty file");
    try {
        const auto header = nlohmann::json::parse(line);
        if (header.at("format").get<std::string>() != kIndexFormat) throw IoError("index: not an lsconf index");
        if (header.at("version").get<int>() != kIndexVersion) throw IoError("index: unsupported version");
        ClusterConfig cfg = ClusterConfig::from_json(header.at("cfg"));
        if (header.at("n_d").get<std::size_t>() != cfg.n_d()) throw IoError("index: header n_d disagrees with cfg");
        const auto n = header.at("n_entries").get<std::size_t>();

        std::vector<LatentEncoding> entries;
        entries.reserve(n);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            LatentEncoding e;
            e.id = j.at("id").get<std::string>();
            e.collection = j.at("collection").get<std::string>();
            e.z = j.at("z").get<std::vector<double>>();
            if (j.contains("label")) e.label = texture_class_from_name(j.at("label").get<std::string>());
            check_z(e.z, cfg, e.id);
            const auto stored = j.at("v").get<std::vector<double>>();
            e.v = class_similarity(e.z, cfg);
            if (stored.size() != e.v.size()) throw IoError("index: entry '" + e.id + "' has a v of wrong length");
            for (std::size_t i = 0; i < stored.size(); ++i)
                if (std::abs(stored[i] - e.v.v[i]) > 1e-12)
                    throw IoError("index: cached similarity of '" + e.id + "' disagrees with its z");
            entries.push_back(std::move(e));
        }
        if (entries.size() != n)
            throw IoError("index: header says " + std::to_string(n) + " entries, found " + std::to_string(entries.size()));
        return EncodingIndex(std::move(cfg), header.at("model_fingerprint").get<std::string>(), std::move(entries));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("index: malformed JSON: ") + e.what());
    } catch (const ContractError& e) {
        throw IoError(std::string("index: ") + e.what());
    }
}

void EncodingIndex::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

EncodingIndex EncodingIndex::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::vector<double> encode_image(const SaeModel& model, const NdArray& image)
{
    const auto& c = model.config();
    const bool ok = (image.rank() == 2 && c.input_channels == 1 && image.dim(0) == c.input_hw && image.dim(1) == c.input_hw) ||
                    (image.rank() == 3 && image.dim(0) == c.input_channels && image.dim(1) == c.input_hw &&
                     image.dim(2) == c.input_hw);
    if (!ok)
        throw DimensionError("query image shape " + shape_to_string(image.shape()) + " does not match model input " +
                             std::to_string(c.input_channels) + "x" + std::to_string(c.input_hw) + "x" +
                             std::to_string(c.input_hw));
    const NdArray* one[] = {&image};
    const NdArray z = model.encode_eval(stack_images(one, c.input_channels));
    return {z.storage().begin(), z.storage().end()};
}

EncodingIndex build_index(const SaeModel& model, std::span<const IndexSample> samples, const ClusterConfig& cfg,
                          const std::string& collection)
{
    if (model.config().latent_dims != cfg.n_d())
        throw ConfigError("model latent has " + std::to_string(model.config().latent_dims) +
                          " dims but cluster config has " + std::to_string(cfg.n_d()));
    std::vector<LatentEncoding> entries;
    entries.reserve(samples.size());
    for (const auto& s : samples) {
        LatentEncoding e;
        e.id = s.id;
        e.z = encode_image(model, s.image);
        e.v = class_similarity(e.z, cfg);
        e.label = s.label;
        e.collection = collection;
        entries.push_back(std::move(e));
    }
    return EncodingIndex(cfg, model_fingerprint(model), std::move(entries));
}

std::vector<SearchHit> rank_entries(const EncodingIndex& index, const ClassSimilarityVector& query)
{
    if (index.empty()) throw ContractError("search: index is empty");
    std::vector<SearchHit> hits;
    hits.reserve(index.size());
    for (const auto& e : index.entries()) hits.push_back({e.id, pairwise_similarity(query, e.v), e.label});
    std::stable_sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    return hits;
}

std::vector<SearchHit> search_by_image(const EncodingIndex& index, const SaeModel& model, const NdArray& image)
{
    if (index.empty()) throw ContractError("search: index is empty");
    const auto z = encode_image(model, image);
    check_z(z, index.cfg(), "query");
    return rank_entries(index, class_similarity(z, index.cfg()));
}

std::vector<SearchHit> search_cross(const EncodingIndex& index_a, const EncodingIndex& index_b,
                                    std::string_view query_id)
{
    if (index_a.fingerprint() != index_b.fingerprint())
        throw IncompatibleIndexError("indices were built by different encoders (" + index_a.fingerprint().substr(0, 12) +
                                     " vs " + index_b.fingerprint().substr(0, 12) + ")");
    if (!(index_a.cfg() == index_b.cfg())) throw IncompatibleIndexError("indices use different cluster configurations");
    const LatentEncoding* q = index_a.find(query_id);
    if (!q) throw ContractError("query id '" + std::string(query_id) + "' not found in the source index");
    return rank_entries(index_b, q->v);
}

void TextQuery::validate() const
{
    if (terms.empty()) throw ContractError("text query has no terms");
    double total = 0.0;
    for (const auto& t : terms) {
        if (!(t.weight >= 0.0) || !std::isfinite(t.weight))
            throw ContractError("text query weight for '" + t.class_name + "' must be finite and >= 0");
        total += t.weight;
    }
    if (total <= 0.0) throw ContractError("text query weights are all zero");
    for (const auto& t : terms) resolve_class_name(t.class_name);
}

TextureClass resolve_class_name(std::string_view name)
{
    const std::string n = normalize_name(name);
    for (const auto& canonical : texture_class_names())
        if (n == canonical) return texture_class_from_name(canonical);
    for (const auto& a : kAliases)
        if (n == a.name) return a.cls;
    std::string valid;
    for (const auto& canonical : texture_class_names()) valid += (valid.empty() ? "" : ", ") + canonical;
    for (const auto& a : kAliases) valid += std::string(", \"") + a.name + "\"";
    throw VocabularyError("unknown class name '" + std::string(name) + "'; valid names: " + valid);
}

TextQuery parse_text_query(std::string_view text, Jitter jitter, std::uint64_t seed)
{
    TextQuery q;
    q.jitter = jitter;
    q.seed = seed;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string_view part = text.substr(pos, comma - pos);
        TextQuery::Term term;
        const std::size_t colon = part.rfind(':');
        if (colon == std::string_view::npos) {
            term.class_name = normalize_name(part);
        } else {
            term.class_name = normalize_name(part.substr(0, colon));
            const std::string w(part.substr(colon + 1));
            try {
                std::size_t used = 0;
                term.weight = std::stod(w, &used);
                if (normalize_name(w.substr(used)) != "") throw std::invalid_argument(w);
            } catch (const std::exception&) {
                throw ContractError("text query: bad weight '" + w + "'");
            }
        }
        if (!term.class_name.empty()) q.terms.push_back(std::move(term));
        pos = comma + 1;
    }
    q.validate();
    return q;
}

std::vector<double> text_query_to_ls(const TextQuery& query, const ClusterConfig& cfg)
{
    query.validate();
    double total = 0.0;
    for (const auto& t : query.terms) total += t.weight;

    std::vector<double> out(cfg.n_d(), 0.0);
    std::mt19937_64 rng(query.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const auto& t : query.terms) {
        const auto cls = static_cast<std::size_t>(resolve_class_name(t.class_name));
        if (cls >= cfg.n_c())
            throw ConfigError("class '" + t.class_name + "' has no configured cluster (n_c = " + std::to_string(cfg.n_c()) + ")");
        const auto c = cfg.center(cls);
        std::vector<double> p(c.begin(), c.end());
        if (query.jitter == Jitter::random_in_cluster) {
            // Uniform in the n_d-ball: gaussian direction, radius r * u^(1/n_d).
            std::vector<double> dir(cfg.n_d());
            double norm = 0.0;
            do {
                norm = 0.0;
                for (auto& d : dir) {
                    d = gauss(rng);
                    norm += d * d;
                }
            } while (norm == 0.0);
            norm = std::sqrt(norm);
            const double radius = cfg.r_c(cls) * std::pow(unit(rng), 1.0 / static_cast<double>(cfg.n_d()));
            for (std::size_t k = 0; k < p.size(); ++k) p[k] += radius * dir[k] / norm;
        }
        for (std::size_t k = 0; k < p.size(); ++k) out[k] += t.weight / total * p[k];
    }
    return out;
}

std::vector<SearchHit> search_by_text(const EncodingIndex& index, const TextQuery& query)
{
    if (index.empty()) throw ContractError("search: index is empty");
    const auto z = text_query_to_ls(query, index.cfg());
    return rank_entries(index, class_similarity(z, index.cfg()));
}

}  // namespace lsconf
