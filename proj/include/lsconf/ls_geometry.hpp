#pragma once

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "lsconf/ndarray.hpp"

namespace lsconf {

/// Fixed cluster layout of a configured latent space.
///
/// Centers sit on a circle of radius d_c at angles phase0 + 2*pi*i/n_c in the
/// first two latent axes (remaining axes zero) unless explicit centers are
/// given. Immutable after construction.
class ClusterConfig {
public:
    struct Params {
        std::size_t n_c = 5;
        std::size_t n_d = 2;
        double d_c = 0.85;
        std::vector<double> r_c{0.34};  // one value broadcasts to all clusters
        double b_c = 0.79;
        double phase0 = 0.0;
        std::optional<NdArray> explicit_centers;  // [n_c, n_d]
    };

    explicit ClusterConfig(const Params& params);

    std::size_t n_c() const noexcept { return n_c_; }
    std::size_t n_d() const noexcept { return n_d_; }
    double d_c() const noexcept { return d_c_; }
    double b_c() const noexcept { return b_c_; }
    double phase0() const noexcept { return phase0_; }
    const std::vector<double>& r_c() const noexcept { return r_c_; }
    double r_c(std::size_t i) const { return r_c_.at(i); }
    /// Distance between neighbouring centers: d_c * sqrt(2 (1 - cos(2 pi / n_c))).
    double neighbor_distance() const noexcept { return r_d_; }
    /// Slope of the inside-cluster similarity: (1 - b_c) / sin(1).
    double k_b() const noexcept { return k_b_; }
    const NdArray& centers() const noexcept { return centers_; }
    std::span<const double> center(std::size_t i) const;
    bool has_explicit_centers() const noexcept { return explicit_; }

    nlohmann::json to_json() const;
    /// Derived fields (R_d, k_b, centers) are recomputed and checked against
    /// stored values when present.
    static ClusterConfig from_json(const nlohmann::json& j);

    friend bool operator==(const ClusterConfig& a, const ClusterConfig& b);

private:
    std::size_t n_c_, n_d_;
    double d_c_, b_c_, phase0_;
    std::vector<double> r_c_;
    double r_d_, k_b_;
    NdArray centers_;
    bool explicit_;
};

ClusterConfig make_cluster_config(std::size_t n_c, double d_c, std::vector<double> r_c, double b_c,
                                  double phase0 = 0.0, std::size_t n_d = 2);

/// Per-class similarities in [0, 1].
struct ClassSimilarityVector {
    std::vector<double> v;

    double total() const noexcept;
    std::size_t size() const noexcept { return v.size(); }
    friend bool operator==(const ClassSimilarityVector&, const ClassSimilarityVector&) = default;
};

std::vector<double> center_distances(std::span<const double> z, const ClusterConfig& cfg);
std::size_t nearest_center(std::span<const double> z, const ClusterConfig& cfg);

ClassSimilarityVector similarity_from_distances(std::span<const double> distances, const ClusterConfig& cfg);
ClassSimilarityVector class_similarity(std::span<const double> z, const ClusterConfig& cfg);

/// Overlap ratio sum(min(v1, v2)) / max(sum v1, sum v2); 0 when both sums are 0.
double pairwise_similarity(const ClassSimilarityVector& a, const ClassSimilarityVector& b);

/// Candidate indices by descending similarity to the query, ties by index.
std::vector<std::size_t> rank_by_similarity(const ClassSimilarityVector& query,
                                            std::span<const ClassSimilarityVector> candidates);

}  // namespace lsconf
