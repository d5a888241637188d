#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lsconf/errors.hpp"
#include "lsconf/ls_geometry.hpp"

using namespace lsconf;

namespace {

constexpr double kPi = std::numbers::pi;

ClusterConfig paper_config() { return make_cluster_config(5, 0.85, {0.34}, 0.79); }

// Point at distance d from center i, along the outward radial direction.
std::vector<double> radial_point(const ClusterConfig& cfg, std::size_t i, double d)
{
    const auto c = cfg.center(i);
    const double ang = cfg.phase0() + 2.0 * kPi * static_cast<double>(i) / static_cast<double>(cfg.n_c());
    return {c[0] + d * std::cos(ang), c[1] + d * std::sin(ang)};
}

ClassSimilarityVector random_vector(std::mt19937_64& rng, std::size_t n)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ClassSimilarityVector v;
    for (std::size_t i = 0; i < n; ++i) v.v.push_back(u(rng) < 0.3 ? 0.0 : u(rng));
    return v;
}

}  // namespace

TEST(ClusterConfig, PaperNeighborDistanceAndSlope)
{
    const auto cfg = paper_config();
    EXPECT_NEAR(cfg.neighbor_distance(), 0.99924, 1e-4);
    EXPECT_NEAR(cfg.neighbor_distance(), 0.85 * 2.0 * std::sin(kPi / 5.0), 1e-14);
    EXPECT_NEAR(cfg.k_b(), 0.24957, 1e-4);
    EXPECT_DOUBLE_EQ(cfg.k_b(), 0.21 / std::sin(1.0));
}

TEST(ClusterConfig, FourClustersOnUnitCircle)
{
    const auto cfg = make_cluster_config(4, 1.0, {0.5}, 0.79);
    const double want[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(cfg.center(i)[0], want[i][0], 1e-15);
        EXPECT_NEAR(cfg.center(i)[1], want[i][1], 1e-15);
    }
    EXPECT_NEAR(cfg.neighbor_distance(), std::sqrt(2.0), 1e-15);
}

TEST(ClusterConfig, RejectsInvalidParameters)
{
    EXPECT_THROW(make_cluster_config(1, 0.85, {0.34}, 0.79), ConfigError);
    EXPECT_THROW(make_cluster_config(5, 0.0, {0.34}, 0.79), ConfigError);
    EXPECT_THROW(make_cluster_config(5, 0.85, {1.0}, 0.79), ConfigError);  // r_c >= R_d
    EXPECT_THROW(make_cluster_config(5, 0.85, {0.34}, 1.0), ConfigError);
    EXPECT_THROW(make_cluster_config(5, 0.85, {0.34}, 0.0), ConfigError);
    EXPECT_THROW(make_cluster_config(5, 0.85, {-0.1}, 0.79), ConfigError);
    EXPECT_THROW(make_cluster_config(5, 0.85, {0.3, 0.3}, 0.79), ConfigError);
}

TEST(ClusterConfig, HigherDimensionsEmbedInPlane)
{
    const auto cfg = make_cluster_config(5, 0.85, {0.34}, 0.79, 0.0, 4);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(cfg.center(i)[2], 0.0);
        EXPECT_EQ(cfg.center(i)[3], 0.0);
        EXPECT_NEAR(std::hypot(cfg.center(i)[0], cfg.center(i)[1]), 0.85, 1e-15);
    }
}

TEST(ClusterConfig, JsonRoundTripAndDerivedValidation)
{
    const auto cfg = make_cluster_config(5, 0.85, {0.3, 0.31, 0.32, 0.33, 0.34}, 0.79, 0.25);
    const auto j = cfg.to_json();
    EXPECT_EQ(ClusterConfig::from_json(j), cfg);
    auto bad = j;
    bad["R_d"] = 1.0;
    EXPECT_THROW(ClusterConfig::from_json(bad), ConfigError);
    auto bad_k = j;
    bad_k["k_b"] = 0.25;
    EXPECT_THROW(ClusterConfig::from_json(bad_k), ConfigError);
}

TEST(ClusterConfig, ExplicitCenters)
{
    ClusterConfig::Params p;
    p.n_c = 2;
    p.r_c = {0.2};
    p.explicit_centers = NdArray({2, 2}, std::vector<double>{1, 1, -1, -1});
    const ClusterConfig cfg(p);
    EXPECT_TRUE(cfg.has_explicit_centers());
    EXPECT_EQ(cfg.center(1)[0], -1.0);
    EXPECT_EQ(ClusterConfig::from_json(cfg.to_json()), cfg);
}

TEST(CenterDistances, Examples)
{
    const auto cfg = paper_config();
    const auto c0 = cfg.center(0);
    const auto d = center_distances(c0, cfg);
    EXPECT_EQ(d[0], 0.0);
    EXPECT_NEAR(d[1], cfg.neighbor_distance(), 1e-12);
    EXPECT_NEAR(d[2], 0.85 * std::sqrt(2.0 * (1.0 - std::cos(144.0 * kPi / 180.0))), 1e-12);
    EXPECT_NEAR(d[2], 1.6168, 1e-4);

    const std::vector<double> origin{0.0, 0.0};
    for (double di : center_distances(origin, cfg)) EXPECT_NEAR(di, 0.85, 1e-15);
    EXPECT_THROW(center_distances(std::vector<double>{1.0}, cfg), DimensionError);
}

TEST(ClassSimilarity, BranchValues)
{
    const auto cfg = paper_config();
    const std::vector<double> at_center{cfg.center(0)[0], cfg.center(0)[1]};
    EXPECT_EQ(class_similarity(at_center, cfg).v[0], 1.0);

    // Both branches evaluated independently at d = r_c.
    const double r = 0.34, rd = cfg.neighbor_distance();
    EXPECT_NEAR(1.0 - cfg.k_b() * std::sin(1.0), 0.79, 1e-15);
    EXPECT_NEAR(0.79 * (rd - r) / (rd - r), 0.79, 1e-15);
    const std::vector<double> dists{r, rd, rd + 0.5, 0.0, 0.5 * (r + rd)};
    const auto v = similarity_from_distances(dists, cfg);
    EXPECT_NEAR(v.v[0], 0.79, 1e-15);
    EXPECT_EQ(v.v[1], 0.0);
    EXPECT_EQ(v.v[2], 0.0);
    EXPECT_EQ(v.v[3], 1.0);
    EXPECT_NEAR(v.v[4], 0.79 * 0.5, 1e-15);
}

TEST(ClassSimilarity, ContinuousAtBoundary)
{
    const auto cfg = paper_config();
    for (std::size_t i = 0; i < 5; ++i) {
        const double eps = 1e-6;
        const double in = class_similarity(radial_point(cfg, i, 0.34 - eps), cfg).v[i];
        const double out = class_similarity(radial_point(cfg, i, 0.34 + eps), cfg).v[i];
        EXPECT_LT(std::abs(in - out), 1e-4);
    }
}

TEST(ClassSimilarity, MonotoneInDistance)
{
    const auto cfg = paper_config();
    double prev = 2.0;
    for (double d = 0.0; d <= 2.0; d += 1e-3) {
        std::vector<double> dist(5, 5.0);
        dist[0] = d;
        const double v = similarity_from_distances(dist, cfg).v[0];
        EXPECT_LE(v, prev + 1e-15);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        prev = v;
    }
}

TEST(PairwiseSimilarity, Examples)
{
    ClassSimilarityVector a{{1, 0, 0, 0, 0}}, b{{0.5, 0, 0, 0, 0}};
    EXPECT_DOUBLE_EQ(pairwise_similarity(a, b), 0.5);
    EXPECT_EQ(pairwise_similarity(a, a), 1.0);
    ClassSimilarityVector zero{{0, 0, 0, 0, 0}};
    EXPECT_EQ(pairwise_similarity(zero, zero), 0.0);
    EXPECT_EQ(pairwise_similarity(a, zero), 0.0);
    EXPECT_THROW(pairwise_similarity(a, ClassSimilarityVector{{1, 0}}), DimensionError);
}

TEST(PairwiseSimilarity, DistinctCentersAreDisjoint)
{
    const auto cfg = paper_config();
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            const auto vi = class_similarity(cfg.center(i), cfg);
            const auto vj = class_similarity(cfg.center(j), cfg);
            if (i == j)
                EXPECT_EQ(pairwise_similarity(vi, vj), 1.0);
            else
                EXPECT_EQ(pairwise_similarity(vi, vj), 0.0) << i << "," << j;
        }
}

TEST(PairwiseSimilarity, Properties)
{
    std::mt19937_64 rng(42);
    for (int t = 0; t < 2000; ++t) {
        const auto a = random_vector(rng, 5), b = random_vector(rng, 5);
        const double s = pairwise_similarity(a, b);
        EXPECT_EQ(s, pairwise_similarity(b, a));
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
        if (a.total() > 0) EXPECT_DOUBLE_EQ(pairwise_similarity(a, a), 1.0);
        ClassSimilarityVector a2 = a, b2 = b;
        for (auto& v : a2.v) v *= 3.7;
        for (auto& v : b2.v) v *= 3.7;
        EXPECT_NEAR(pairwise_similarity(a2, b2), s, 1e-14);
    }
}

TEST(RankBySimilarity, Examples)
{
    ClassSimilarityVector q{{1, 0.2, 0, 0, 0}};
    std::vector<ClassSimilarityVector> one{q};
    EXPECT_EQ(rank_by_similarity(q, one), std::vector<std::size_t>{0});
    std::vector<ClassSimilarityVector> two{{{0, 0, 1, 0, 0}}, q};
    EXPECT_EQ(rank_by_similarity(q, two), (std::vector<std::size_t>{1, 0}));
    EXPECT_THROW(rank_by_similarity(q, std::span<const ClassSimilarityVector>{}), ContractError);
}

TEST(RankBySimilarity, MatchesBruteForceOracle)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto q = random_vector(rng, 5);
        std::vector<ClassSimilarityVector> cands;
        for (int i = 0; i < 100; ++i) cands.push_back(random_vector(rng, 5));
        cands.push_back(cands[3]);  // guarantee a tie
        const auto got = rank_by_similarity(q, cands);

        // Oracle: selection sort picking the max score, earliest index on ties.
        std::vector<bool> used(cands.size(), false);
        std::vector<std::size_t> want;
        for (std::size_t k = 0; k < cands.size(); ++k) {
            std::size_t best = cands.size();
            double best_s = -1.0;
            for (std::size_t i = 0; i < cands.size(); ++i) {
                if (used[i]) continue;
                const double s = pairwise_similarity(q, cands[i]);
                if (s > best_s) {
                    best_s = s;
                    best = i;
                }
            }
            used[best] = true;
            want.push_back(best);
        }
        EXPECT_EQ(got, want);
    }
}
