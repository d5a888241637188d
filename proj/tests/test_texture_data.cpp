#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "lsconf/errors.hpp"
#include "lsconf/texture_data.hpp"

using namespace lsconf;

namespace {

double mean_of(const NdArray& a)
{
    double s = 0;
    for (double v : a.storage()) s += v;
    return s / static_cast<double>(a.size());
}

double std_of(const NdArray& a)
{
    const double m = mean_of(a);
    double s = 0;
    for (double v : a.storage()) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(a.size()));
}

// Mean over rows of the variance along each row, and the same over columns.
std::pair<double, double> row_col_variance(const NdArray& img)
{
    const std::size_t n = img.dim(0);
    double along_rows = 0, along_cols = 0;
    for (std::size_t r = 0; r < n; ++r) {
        double m = 0, s = 0;
        for (std::size_t c = 0; c < n; ++c) m += img.at({r, c});
        m /= static_cast<double>(n);
        for (std::size_t c = 0; c < n; ++c) s += (img.at({r, c}) - m) * (img.at({r, c}) - m);
        along_rows += s / static_cast<double>(n);
    }
    for (std::size_t c = 0; c < n; ++c) {
        double m = 0, s = 0;
        for (std::size_t r = 0; r < n; ++r) m += img.at({r, c});
        m /= static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) s += (img.at({r, c}) - m) * (img.at({r, c}) - m);
        along_cols += s / static_cast<double>(n);
    }
    return {along_rows / static_cast<double>(n), along_cols / static_cast<double>(n)};
}

}  // namespace

TEST(ClassNames, RoundTrip)
{
    ASSERT_EQ(texture_class_names().size(), kTextureClassCount);
    for (std::size_t i = 0; i < kTextureClassCount; ++i) {
        const auto c = texture_class_from_index(i);
        EXPECT_EQ(texture_class_from_name(texture_class_name(c)), c);
    }
    EXPECT_THROW(texture_class_from_name("plaid"), ContractError);
    EXPECT_THROW(texture_class_from_index(5), ContractError);
}

TEST(Generate, UniformIsFlat)
{
    for (std::uint64_t s = 0; s < 20; ++s) EXPECT_LT(std_of(generate(TextureClass::uniform, s, 32).image), 0.05);
}

TEST(Generate, LineOrientation)
{
    double h_ratio = 0, v_ratio = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        // Horizontal lines: constant along each row, varying along columns.
        const auto [hr, hc] = row_col_variance(generate(TextureClass::hlines, s, 32).image);
        h_ratio += hr / hc;
        const auto [vr, vc] = row_col_variance(generate(TextureClass::vlines, s, 32).image);
        v_ratio += vc / vr;
    }
    EXPECT_LT(h_ratio / 100.0, 0.2);
    EXPECT_LT(v_ratio / 100.0, 0.2);
}

TEST(Generate, DeterministicAndInRange)
{
    for (std::size_t c = 0; c < kTextureClassCount; ++c) {
        const auto cls = texture_class_from_index(c);
        const auto a = generate(cls, 77, 32), b = generate(cls, 77, 32), d = generate(cls, 78, 32);
        EXPECT_EQ(a.image, b.image);
        EXPECT_NE(a.image, d.image);
        EXPECT_EQ(a.label, cls);
        for (double v : a.image.storage()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    EXPECT_THROW(generate(TextureClass::dots, 1, 8), ContractError);
}

TEST(Generate, ClassesDiffer)
{
    // Same seed, different class: different image.
    std::set<std::vector<double>> seen;
    for (std::size_t c = 0; c < kTextureClassCount; ++c)
        seen.insert(generate(texture_class_from_index(c), 5, 32).image.storage());
    EXPECT_EQ(seen.size(), kTextureClassCount);
}

TEST(Augment, ChainRanges)
{
    for (std::uint64_t s = 0; s < 300; ++s) {
        const auto ch = sample_augment_chain(s, 32, 0.5);
        EXPECT_LE(std::abs(ch.rotation_deg), 15.0);
        EXPECT_GE(ch.scale, 0.9);
        EXPECT_LE(ch.scale, 1.1);
        EXPECT_LE(std::abs(ch.shear_deg), 5.0);
        EXPECT_GE(ch.brightness, 0.8);
        EXPECT_LE(ch.brightness, 1.2);
        EXPECT_GE(ch.contrast, 0.8);
        EXPECT_LE(ch.contrast, 1.2);
        const double frac = static_cast<double>(ch.erase_w * ch.erase_h) / (32.0 * 32.0);
        EXPECT_GE(frac, 0.28) << s;
        EXPECT_LE(frac, 0.32) << s;
        EXPECT_LE(ch.erase_x + ch.erase_w, 32u);
        EXPECT_LE(ch.erase_y + ch.erase_h, 32u);
        EXPECT_EQ(ch.mirror, Mirror::none);
    }
}

TEST(Augment, ErasedRegionHoldsFill)
{
    const auto base = generate(TextureClass::squares, 3, 32);
    const auto ch = sample_augment_chain(4, 32, 0.4375);
    const NdArray out = apply_augment_chain(base.image, ch);
    std::size_t filled = 0;
    for (std::size_t y = ch.erase_y; y < ch.erase_y + ch.erase_h; ++y)
        for (std::size_t x = ch.erase_x; x < ch.erase_x + ch.erase_w; ++x) filled += out.at({y, x}) == 0.4375;
    EXPECT_EQ(filled, ch.erase_w * ch.erase_h);
    AugmentChain bad = ch;
    bad.erase_x = 30;
    bad.erase_w = 5;
    EXPECT_THROW(apply_augment_chain(base.image, bad), ContractError);
}

TEST(Augment, OutputsAndMirrors)
{
    const auto base = generate(TextureClass::hlines, 9, 32, "hlines-00009");
    const auto out = augment(base, 1234, 0.5);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].id, "hlines-00009.m0");
    EXPECT_EQ(out[1].id, "hlines-00009.mh");
    EXPECT_EQ(out[2].id, "hlines-00009.mv");
    for (const auto& s : out) {
        EXPECT_EQ(s.label, TextureClass::hlines);
        for (double v : s.image.storage()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    EXPECT_EQ(out[1].image, mirror_horizontal(out[0].image));
    EXPECT_EQ(out[2].image, mirror_vertical(out[0].image));
    EXPECT_EQ(mirror_horizontal(mirror_horizontal(base.image)), base.image);
    EXPECT_EQ(mirror_vertical(mirror_vertical(base.image)), base.image);
    EXPECT_EQ(mirror_horizontal(base.image).at({3, 0}), base.image.at({3, 31}));
    EXPECT_EQ(mirror_vertical(base.image).at({0, 3}), base.image.at({31, 3}));

    const auto again = augment(base, 1234, 0.5);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(again[i].image, out[i].image);
}

TEST(Augment, ChainJsonRoundTrip)
{
    auto ch = sample_augment_chain(17, 32, 0.47);
    ch.mirror = Mirror::vertical;
    const auto back = AugmentChain::from_json(ch.to_json());
    EXPECT_EQ(back.to_json(), ch.to_json());
    const auto base = generate(TextureClass::dots, 2, 32);
    EXPECT_EQ(apply_augment_chain(base.image, back), apply_augment_chain(base.image, ch));
}

TEST(Dataset, PreSplitCounts)
{
    SplitSpec spec;
    spec.seed = 3;
    const Dataset ds = build_dataset(130, spec, 2);
    std::map<TextureClass, std::size_t> tr, te;
    for (const auto& r : ds.train) ++tr[r.label];
    for (const auto& r : ds.test) ++te[r.label];
    for (std::size_t c = 0; c < kTextureClassCount; ++c) {
        const auto cls = texture_class_from_index(c);
        EXPECT_EQ(te[cls], 26u);
        EXPECT_EQ(tr[cls], 104u * 2u * 3u);
    }
    for (const auto& r : ds.test) EXPECT_FALSE(r.chain.has_value());
    for (const auto& r : ds.train) EXPECT_TRUE(r.chain.has_value());

    // No base image is shared between partitions.
    std::set<std::string> test_bases;
    for (const auto& r : ds.test) test_bases.insert(r.id);
    for (const auto& r : ds.train) EXPECT_FALSE(test_bases.count(r.id.substr(0, r.id.find('.'))));
}

TEST(Dataset, PostSplitDisjointAndBalanced)
{
    SplitSpec spec;
    spec.mode = SplitMode::post;
    spec.seed = 4;
    const Dataset ds = build_dataset(20, spec, 2);
    std::set<std::string> ids;
    for (const auto& r : ds.train) ids.insert(r.id);
    for (const auto& r : ds.test) EXPECT_FALSE(ids.count(r.id)) << r.id;
    std::map<TextureClass, std::size_t> tr, te;
    for (const auto& r : ds.train) ++tr[r.label];
    for (const auto& r : ds.test) ++te[r.label];
    std::size_t lo = SIZE_MAX, hi = 0;
    for (std::size_t c = 0; c < kTextureClassCount; ++c) {
        const auto cls = texture_class_from_index(c);
        lo = std::min(lo, te[cls]);
        hi = std::max(hi, te[cls]);
        EXPECT_EQ(tr[cls] + te[cls], 20u * 2u * 3u);
    }
    EXPECT_LE(hi - lo, 1u);
}

TEST(Dataset, RejectsTinyClasses)
{
    EXPECT_THROW(build_dataset(5, SplitSpec{}, 2), ContractError);
    SplitSpec bad;
    bad.train_fraction = 1.0;
    EXPECT_THROW(bad.validate(), ContractError);
}

TEST(Manifest, DeterministicAndRoundTrips)
{
    SplitSpec spec;
    spec.seed = 11;
    const Dataset a = build_dataset(12, spec, 1), b = build_dataset(12, spec, 1);
    EXPECT_EQ(manifest_text(a), manifest_text(b));

    const auto dir = std::filesystem::temp_directory_path() / "lsconf_manifest_test";
    std::filesystem::create_directories(dir);
    write_manifest(dir / "m.jsonl", a);
    const auto recs = read_manifest(dir / "m.jsonl");
    ASSERT_EQ(recs.size(), a.train.size() + a.test.size());
    EXPECT_EQ(recs.front().split, "train");
    EXPECT_EQ(recs.back().split, "test");
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        EXPECT_EQ(recs[i].id, a.train[i].id);
        EXPECT_EQ(render(recs[i]), render(a.train[i]));
    }

    const NdArray img = render(recs[0]);
    std::filesystem::create_directories(dir / "cache");
    write_blob(dir / "cache" / (recs[0].id + ".f64"), img);
    EXPECT_EQ(read_blob(dir / "cache" / (recs[0].id + ".f64"), 32), img);
    EXPECT_EQ(load_image(recs[0], dir / "cache"), img);
    EXPECT_THROW(read_blob(dir / "cache" / (recs[0].id + ".f64"), 16), IoError);
    std::filesystem::remove_all(dir);

    EXPECT_THROW(parse_manifest("{not json"), IoError);
    EXPECT_THROW(read_manifest("/nonexistent/m.jsonl"), IoError);
}

TEST(Manifest, RenderMatchesGenerator)
{
    SplitSpec spec;
    spec.seed = 12;
    const Dataset ds = build_dataset(10, spec, 1);
    const auto& t = ds.test.front();
    EXPECT_EQ(render(t), generate(t.label, t.seed, t.hw).image);
    const auto& r = ds.train.front();
    NdArray want = apply_augment_chain(generate(r.label, r.seed, r.hw).image, *r.chain);
    EXPECT_EQ(render(r), want);
}
