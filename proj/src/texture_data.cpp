#include "lsconf/texture_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "lsconf/checkpoint.hpp"
#include "lsconf/errors.hpp"

namespace lsconf {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Periodic profile in [-1, 1] along one axis.
struct Stripe {
    double period, phase;
    bool square;

    static Stripe random(std::mt19937_64& rng)
    {
        Stripe s;
        s.period = uniform(rng, 3.0, 8.0);
        s.phase = uniform(rng, 0.0, 2.0 * kPi);
        s.square = std::bernoulli_distribution(0.5)(rng);
        return s;
    }

    double operator()(double t) const
    {
        const double v = std::sin(2.0 * kPi * t / period + phase);
        if (!square) return v;
        return v >= 0.0 ? 1.0 : -1.0;
    }
};

void add_noise(NdArray& img, std::mt19937_64& rng, double amplitude)
{
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    for (auto& v : img.storage()) v = clamp01(v + u(rng));
}

std::size_t reflect_index(long i, std::size_t n)
{
    if (n == 1) return 0;
    const long period = 2 * (static_cast<long>(n) - 1);
    long r = i % period;
    if (r < 0) r += period;
    if (r >= static_cast<long>(n)) r = period - r;
    return static_cast<std::size_t>(r);
}

double sample_bilinear(const NdArray& img, double x, double y)
{
    const std::size_t h = img.dim(0), w = img.dim(1);
    const double fx0 = std::floor(x), fy0 = std::floor(y);
    const double ax = x - fx0, ay = y - fy0;
    const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
    const std::size_t xa = reflect_index(x0, w), xb = reflect_index(x0 + 1, w);
    const std::size_t ya = reflect_index(y0, h), yb = reflect_index(y0 + 1, h);
    const double top = (1.0 - ax) * img[ya * w + xa] + ax * img[ya * w + xb];
    const double bot = (1.0 - ax) * img[yb * w + xa] + ax * img[yb * w + xb];
    return (1.0 - ay) * top + ay * bot;
}

std::string mirror_name(Mirror m)
{
    switch (m) {
    case Mirror::none: return "none";
    case Mirror::horizontal: return "horizontal";
    case Mirror::vertical: return "vertical";
    }
    return "none";
}

Mirror mirror_from_name(const std::string& s)
{
    if (s == "none") return Mirror::none;
    if (s == "horizontal") return Mirror::horizontal;
    if (s == "vertical") return Mirror::vertical;
    throw IoError("manifest: unknown mirror axis '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------- classes

const std::vector<std::string>& texture_class_names()
{
    static const std::vector<std::string> names{"uniform", "hlines", "vlines", "squares", "dots"};
    return names;
}

std::string_view texture_class_name(TextureClass c) { return texture_class_names().at(static_cast<std::size_t>(c)); }

TextureClass texture_class_from_name(std::string_view name)
{
    const auto& names = texture_class_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<TextureClass>(i);
    throw ContractError("unknown texture class '" + std::string(name) + "'");
}

TextureClass texture_class_from_index(std::size_t i)
{
    if (i >= kTextureClassCount) throw ContractError("texture class index " + std::to_string(i) + " out of range");
    return static_cast<TextureClass>(i);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view key)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : key) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(master ^ splitmix64(h));
}

// ---------------------------------------------------------------- generator

TextureSample generate(TextureClass cls, std::uint64_t seed, std::size_t hw, std::string id)
{
    if (hw < 16) throw ContractError("generate: hw must be >= 16, got " + std::to_string(hw));
    std::mt19937_64 rng(splitmix64(seed ^ (static_cast<std::uint64_t>(cls) + 1) * 0xA24BAED4963EE407ULL));
    NdArray img({hw, hw});
    const double mean = uniform(rng, 0.35, 0.65);
    const double contrast = uniform(rng, 0.3, 0.6);  // peak to peak

    switch (cls) {
    case TextureClass::uniform: {
        const double gray = uniform(rng, 0.15, 0.85);
        img.fill(gray);
        break;
    }
    case TextureClass::hlines:
    case TextureClass::vlines: {
        const Stripe s = Stripe::random(rng);
        for (std::size_t y = 0; y < hw; ++y)
            for (std::size_t x = 0; x < hw; ++x) {
                const double t = cls == TextureClass::hlines ? static_cast<double>(y) : static_cast<double>(x);
                img[y * hw + x] = mean + 0.5 * contrast * s(t);
            }
        break;
    }
    case TextureClass::squares: {
        Stripe sx = Stripe::random(rng);
        Stripe sy = sx;
        sy.phase = uniform(rng, 0.0, 2.0 * kPi);
        for (std::size_t y = 0; y < hw; ++y)
            for (std::size_t x = 0; x < hw; ++x)
                img[y * hw + x] = mean + 0.5 * contrast * sx(static_cast<double>(x)) * sy(static_cast<double>(y));
        break;
    }
    case TextureClass::dots: {
        const double spacing = uniform(rng, 5.0, 9.0);
        const double radius = spacing * uniform(rng, 0.2, 0.35);
        const double sign = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
        const double background = mean - sign * 0.5 * contrast;
        const double dot = mean + sign * 0.5 * contrast;
        const double ox = uniform(rng, 0.0, spacing), oy = uniform(rng, 0.0, spacing);
        img.fill(background);
        const long cells = static_cast<long>(std::ceil(static_cast<double>(hw) / spacing)) + 2;
        std::uniform_real_distribution<double> jitter(-spacing / 6.0, spacing / 6.0);
        for (long gy = -1; gy < cells; ++gy)
            for (long gx = -1; gx < cells; ++gx) {
                const double cx = ox + static_cast<double>(gx) * spacing + jitter(rng);
                const double cy = oy + static_cast<double>(gy) * spacing + jitter(rng);
                const long x0 = std::max(0L, static_cast<long>(std::floor(cx - radius)));
                const long x1 = std::min(static_cast<long>(hw) - 1, static_cast<long>(std::ceil(cx + radius)));
                const long y0 = std::max(0L, static_cast<long>(std::floor(cy - radius)));
                const long y1 = std::min(static_cast<long>(hw) - 1, static_cast<long>(std::ceil(cy + radius)));
                for (long y = y0; y <= y1; ++y)
                    for (long x = x0; x <= x1; ++x) {
                        const double d = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy);
                        if (d <= radius) img[static_cast<std::size_t>(y) * hw + static_cast<std::size_t>(x)] = dot;
                    }
            }
        break;
    }
    }
    add_noise(img, rng, 0.03);
    return {std::move(img), cls, std::move(id), seed};
}

// ---------------------------------------------------------------- augmentation

nlohmann::json AugmentChain::to_json() const
{
    auto ops = nlohmann::json::array();
    ops.push_back({{"op", "affine"}, {"rotation_deg", rotation_deg}, {"scale", scale}, {"shear_deg", shear_deg}});
    ops.push_back({{"op", "jitter"}, {"brightness", brightness}, {"contrast", contrast}});
    ops.push_back({{"op", "erase"}, {"x", erase_x}, {"y", erase_y}, {"w", erase_w}, {"h", erase_h}, {"fill", fill}});
    if (mirror != Mirror::none) ops.push_back({{"op", "mirror"}, {"axis", mirror_name(mirror)}});
    return ops;
}

AugmentChain AugmentChain::from_json(const nlohmann::json& j)
{
    AugmentChain c;
    for (const auto& op : j) {
        const std::string kind = op.at("op").get<std::string>();
        if (kind == "affine") {
            c.rotation_deg = op.at("rotation_deg").get<double>();
            c.scale = op.at("scale").get<double>();
            c.shear_deg = op.at("shear_deg").get<double>();
        } else if (kind == "jitter") {
            c.brightness = op.at("brightness").get<double>();
            c.contrast = op.at("contrast").get<double>();
        } else if (kind == "erase") {
            c.erase_x = op.at("x").get<std::size_t>();
            c.erase_y = op.at("y").get<std::size_t>();
            c.erase_w = op.at("w").get<std::size_t>();
            c.erase_h = op.at("h").get<std::size_t>();
            c.fill = op.at("fill").get<double>();
        } else if (kind == "mirror") {
            c.mirror = mirror_from_name(op.at("axis").get<std::string>());
        } else {
            throw IoError("manifest: unknown augmentation op '" + kind + "'");
        }
    }
    return c;
}

AugmentChain sample_augment_chain(std::uint64_t seed, std::size_t hw, double fill)
{
    std::mt19937_64 rng(splitmix64(seed));
    AugmentChain c;
    c.rotation_deg = uniform(rng, -15.0, 15.0);
    c.scale = uniform(rng, 0.9, 1.1);
    c.shear_deg = uniform(rng, -5.0, 5.0);
    c.brightness = uniform(rng, 0.8, 1.2);
    c.contrast = uniform(rng, 0.8, 1.2);
    c.fill = fill;

    const double total = static_cast<double>(hw * hw);
    const double target = 0.3 * total;
    std::size_t w = 0, h = 0;
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double aspect = uniform(rng, 0.5, 2.0);
        const auto cw = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
        if (cw == 0 || cw > hw) continue;
        const auto ch = static_cast<std::size_t>(std::lround(target / static_cast<double>(cw)));
        if (ch == 0 || ch > hw) continue;
        const double frac = static_cast<double>(cw * ch) / total;
        if (frac >= 0.28 && frac <= 0.32) {
            w = cw;
            h = ch;
            break;
        }
    }
    if (w == 0) {
        w = static_cast<std::size_t>(std::lround(std::sqrt(target)));
        h = static_cast<std::size_t>(std::lround(target / static_cast<double>(w)));
    }
    c.erase_w = w;
    c.erase_h = h;
    c.erase_x = std::uniform_int_distribution<std::size_t>(0, hw - w)(rng);
    c.erase_y = std::uniform_int_distribution<std::size_t>(0, hw - h)(rng);
    return c;
}

NdArray mirror_horizontal(const NdArray& image)
{
    const std::size_t h = image.dim(0), w = image.dim(1);
    NdArray out(image.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out[y * w + x] = image[y * w + (w - 1 - x)];
    return out;
}

NdArray mirror_vertical(const NdArray& image)
{
    const std::size_t h = image.dim(0), w = image.dim(1);
    NdArray out(image.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out[y * w + x] = image[(h - 1 - y) * w + x];
    return out;
}

NdArray apply_augment_chain(const NdArray& image, const AugmentChain& c)
{
    if (image.rank() != 2) throw DimensionError("augment: image must be [H, W]");
    const std::size_t h = image.dim(0), w = image.dim(1);
    NdArray out(image.shape());

    // Output pixel p samples the source at A^-1 R^T (p - center) + center,
    // where R rotates and A = scale * [[1, tan(shear)], [0, 1]].
    const double th = c.rotation_deg * kPi / 180.0;
    const double t = std::tan(c.shear_deg * kPi / 180.0);
    const double cs = std::cos(th), sn = std::sin(th);
    const double cx = 0.5 * static_cast<double>(w - 1), cy = 0.5 * static_cast<double>(h - 1);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double px = static_cast<double>(x) - cx, py = static_cast<double>(y) - cy;
            const double rx = cs * px + sn * py, ry = -sn * px + cs * py;
            const double sx = (rx - t * ry) / c.scale, sy = ry / c.scale;
            out[y * w + x] = sample_bilinear(image, sx + cx, sy + cy);
        }

    const double mu = std::accumulate(out.storage().begin(), out.storage().end(), 0.0) / static_cast<double>(out.size());
    for (auto& v : out.storage()) v = clamp01(c.brightness * (mu + c.contrast * (v - mu)));

    if (c.erase_x + c.erase_w > w || c.erase_y + c.erase_h > h) throw ContractError("augment: erase box out of bounds");
    for (std::size_t y = c.erase_y; y < c.erase_y + c.erase_h; ++y)
        for (std::size_t x = c.erase_x; x < c.erase_x + c.erase_w; ++x) out[y * w + x] = c.fill;

    switch (c.mirror) {
    case Mirror::none: return out;
    case Mirror::horizontal: return mirror_horizontal(out);
    case Mirror::vertical: return mirror_vertical(out);
    }
    return out;
}

std::vector<TextureSample> augment(const TextureSample& sample, std::uint64_t seed, double fill)
{
    AugmentChain chain = sample_augment_chain(seed, sample.image.dim(0), fill);
    NdArray base = apply_augment_chain(sample.image, chain);
    std::vector<TextureSample> out;
    out.push_back({base, sample.label, sample.id + ".m0", sample.seed});
    out.push_back({mirror_horizontal(base), sample.label, sample.id + ".mh", sample.seed});
    out.push_back({mirror_vertical(base), sample.label, sample.id + ".mv", sample.seed});
    return out;
}

// ---------------------------------------------------------------- dataset

SplitMode parse_split_mode(const std::string& s)
{
    if (s == "pre") return SplitMode::pre;
    if (s == "post") return SplitMode::post;
    throw ConfigError("unknown split mode '" + s + "' (expected pre or post)");
}

std::string to_string(SplitMode m) { return m == SplitMode::pre ? "pre" : "post"; }

void SplitSpec::validate() const
{
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("split: train_fraction must lie in (0, 1)");
}

nlohmann::json SampleRecord::to_json() const
{
    nlohmann::json j{{"id", id},
                     {"label", std::string(texture_class_name(label))},
                     {"seed", seed},
                     {"split", split},
                     {"hw", hw},
                     {"augmentation_chain", chain ? chain->to_json() : nlohmann::json::array()}};
    return j;
}

SampleRecord SampleRecord::from_json(const nlohmann::json& j)
{
    try {
        SampleRecord r;
        r.id = j.at("id").get<std::string>();
        r.label = texture_class_from_name(j.at("label").get<std::string>());
        r.seed = j.at("seed").get<std::uint64_t>();
        r.split = j.at("split").get<std::string>();
        r.hw = j.value("hw", std::size_t{32});
        const auto& chain = j.at("augmentation_chain");
        if (!chain.empty()) r.chain = AugmentChain::from_json(chain);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("manifest: bad record: ") + e.what());
    } catch (const ContractError& e) {
        throw IoError(std::string("manifest: ") + e.what());
    }
}

NdArray render(const SampleRecord& rec)
{
    NdArray base = generate(rec.label, rec.seed, rec.hw).image;
    if (!rec.chain) return base;
    return apply_augment_chain(base, *rec.chain);
}

Dataset build_dataset(std::size_t per_class, const SplitSpec& split, std::size_t aug_per_image, std::size_t hw)
{
    if (per_class < 10) throw ConfigError("dataset: per_class must be >= 10, got " + std::to_string(per_class));
    split.validate();

    struct Base {
        std::string id;
        TextureClass label;
        std::uint64_t seed;
    };
    std::vector<std::vector<Base>> by_class(kTextureClassCount);
    double pixel_sum = 0.0;
    for (std::size_t c = 0; c < kTextureClassCount; ++c) {
        const auto cls = static_cast<TextureClass>(c);
        for (std::size_t k = 0; k < per_class; ++k) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%s-%05zu", std::string(texture_class_name(cls)).c_str(), k);
            const std::uint64_t s = derive_seed(split.seed, std::string("base/") + buf);
            const NdArray img = generate(cls, s, hw).image;
            pixel_sum += std::accumulate(img.storage().begin(), img.storage().end(), 0.0);
            by_class[c].push_back({buf, cls, s});
        }
    }

    Dataset ds;
    ds.fill = pixel_sum / static_cast<double>(kTextureClassCount * per_class * hw * hw);

    auto augmented = [&](const Base& b, const std::string& which) {
        std::vector<SampleRecord> out;
        for (std::size_t a = 0; a < aug_per_image; ++a) {
            const std::string aid = b.id + ".a" + std::to_string(a);
            AugmentChain chain = sample_augment_chain(derive_seed(split.seed, "aug/" + aid), hw, ds.fill);
            for (Mirror m : {Mirror::none, Mirror::horizontal, Mirror::vertical}) {
                chain.mirror = m;
                const char* suffix = m == Mirror::none ? ".m0" : m == Mirror::horizontal ? ".mh" : ".mv";
                out.push_back({aid + suffix, b.label, b.seed, which, hw, chain});
            }
        }
        return out;
    };
    auto shuffled = [&](std::size_t n, std::size_t c) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::mt19937_64 rng(derive_seed(split.seed, "split/" + std::to_string(c)));
        std::shuffle(idx.begin(), idx.end(), rng);
        return idx;
    };

    for (std::size_t c = 0; c < kTextureClassCount; ++c) {
        const auto& bases = by_class[c];
        if (split.mode == SplitMode::pre) {
            const auto idx = shuffled(bases.size(), c);
            const auto n_train = static_cast<std::size_t>(std::lround(split.train_fraction * static_cast<double>(bases.size())));
            std::vector<bool> is_train(bases.size(), false);
            for (std::size_t k = 0; k < n_train; ++k) is_train[idx[k]] = true;
            for (std::size_t k = 0; k < bases.size(); ++k) {
                const Base& b = bases[k];
                if (is_train[k]) {
                    auto recs = augmented(b, "train");
                    ds.train.insert(ds.train.end(), recs.begin(), recs.end());
                } else {
                    ds.test.push_back({b.id, b.label, b.seed, "test", hw, std::nullopt});
                }
            }
        } else {
            std::vector<SampleRecord> all;
            for (const Base& b : bases) {
                auto recs = augmented(b, "train");
                all.insert(all.end(), recs.begin(), recs.end());
            }
            const auto idx = shuffled(all.size(), c);
            const auto n_train = static_cast<std::size_t>(std::lround(split.train_fraction * static_cast<double>(all.size())));
            std::vector<bool> is_train(all.size(), false);
            for (std::size_t k = 0; k < n_train; ++k) is_train[idx[k]] = true;
            for (std::size_t k = 0; k < all.size(); ++k) {
                all[k].split = is_train[k] ? "train" : "test";
                (is_train[k] ? ds.train : ds.test).push_back(std::move(all[k]));
            }
        }
    }
    return ds;
}

std::string manifest_text(const Dataset& ds)
{
    std::string out;
    for (const auto* part : {&ds.train, &ds.test})
        for (const auto& r : *part) {
            out += r.to_json().dump();
            out += '\n';
        }
    return out;
}

void write_manifest(const std::filesystem::path& path, const Dataset& ds) { write_file(path, manifest_text(ds)); }

std::vector<SampleRecord> parse_manifest(std::string_view text)
{
    std::vector<SampleRecord> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(SampleRecord::from_json(j));
    }
    return out;
}

std::vector<SampleRecord> read_manifest(const std::filesystem::path& path) { return parse_manifest(read_file(path)); }

void write_blob(const std::filesystem::path& path, const NdArray& image)
{
    std::string bytes(image.size() * 8, '\0');
    for (std::size_t i = 0; i < image.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(image[i]);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    write_file(path, bytes);
}

NdArray read_blob(const std::filesystem::path& path, std::size_t hw)
{
    const std::string bytes = read_file(path);
    if (bytes.size() != hw * hw * 8)
        throw IoError("blob '" + path.string() + "' has " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(hw * hw * 8));
    NdArray out({hw, hw});
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 7; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(bytes[i * 8 + b]);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

NdArray load_image(const SampleRecord& rec, const std::filesystem::path& cache_dir)
{
    if (!cache_dir.empty()) {
        const auto p = cache_dir / (rec.id + ".f64");
        if (std::filesystem::exists(p)) return read_blob(p, rec.hw);
    }
    return render(rec);
}

}  // namespace lsconf
