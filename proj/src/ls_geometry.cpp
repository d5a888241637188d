#include "lsconf/ls_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lsconf/errors.hpp"

namespace lsconf {

namespace {

bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace

ClusterConfig::ClusterConfig(const Params& p)
    : n_c_(p.n_c), n_d_(p.n_d), d_c_(p.d_c), b_c_(p.b_c), phase0_(p.phase0), explicit_(p.explicit_centers.has_value())
{
    if (n_c_ < 2) throw ConfigError("cluster config: n_c must be >= 2, got " + std::to_string(n_c_));
    if (n_d_ < 2) throw ConfigError("cluster config: n_d must be >= 2, got " + std::to_string(n_d_));
    if (!(d_c_ > 0.0) || !std::isfinite(d_c_)) throw ConfigError("cluster config: d_c must be positive");
    if (!(b_c_ > 0.0 && b_c_ < 1.0)) throw ConfigError("cluster config: b_c must lie in (0, 1)");
    if (!std::isfinite(phase0_)) throw ConfigError("cluster config: phase0 must be finite");

    if (p.r_c.size() == 1)
        r_c_.assign(n_c_, p.r_c[0]);
    else if (p.r_c.size() == n_c_)
        r_c_ = p.r_c;
    else
        throw ConfigError("cluster config: r_c needs 1 or n_c values, got " + std::to_string(p.r_c.size()));

    r_d_ = d_c_ * std::sqrt(2.0 * (1.0 - std::cos(2.0 * std::numbers::pi / static_cast<double>(n_c_))));
    k_b_ = (1.0 - b_c_) / std::sin(1.0);

    for (std::size_t i = 0; i < n_c_; ++i) {
        if (!(r_c_[i] > 0.0)) throw ConfigError("cluster config: r_c[" + std::to_string(i) + "] must be positive");
        if (!(r_c_[i] < r_d_))
            throw ConfigError("cluster config: r_c[" + std::to_string(i) + "] = " + std::to_string(r_c_[i]) +
                              " must be below the neighbour distance R_d = " + std::to_string(r_d_));
    }
    // Similarity must not increase with distance across the cluster boundary.
    if (b_c_ < 1.0 - k_b_ * std::sin(1.0) - 1e-15)
        throw ConfigError("cluster config: b_c yields a non-monotone similarity");

    if (p.explicit_centers) {
        const NdArray& c = *p.explicit_centers;
        if (c.rank() != 2 || c.dim(0) != n_c_ || c.dim(1) != n_d_)
            throw ConfigError("cluster config: explicit centers must have shape [" + std::to_string(n_c_) + "," +
                              std::to_string(n_d_) + "], got " + shape_to_string(c.shape()));
        if (!c.all_finite()) throw ConfigError("cluster config: explicit centers must be finite");
        centers_ = c;
    } else {
        centers_ = NdArray({n_c_, n_d_}, 0.0);
        for (std::size_t i = 0; i < n_c_; ++i) {
            const double a = phase0_ + 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_c_);
            centers_[i * n_d_] = d_c_ * std::cos(a);
            centers_[i * n_d_ + 1] = d_c_ * std::sin(a);
        }
    }
}

std::span<const double> ClusterConfig::center(std::size_t i) const
{
    if (i >= n_c_) throw ContractError("cluster index " + std::to_string(i) + " out of range");
    return {centers_.data() + i * n_d_, n_d_};
}

nlohmann::json ClusterConfig::to_json() const
{
    nlohmann::json j{{"n_c", n_c_}, {"n_d", n_d_},  {"d_c", d_c_}, {"r_c", r_c_},
                     {"b_c", b_c_}, {"phase0", phase0_}, {"R_d", r_d_}, {"k_b", k_b_}};
    if (explicit_) j["explicit_centers"] = centers_.storage();
    return j;
}

ClusterConfig ClusterConfig::from_json(const nlohmann::json& j)
{
    Params p;
    try {
        p.n_c = j.at("n_c").get<std::size_t>();
        p.n_d = j.value("n_d", std::size_t{2});
        p.d_c = j.at("d_c").get<double>();
        if (j.at("r_c").is_array())
            p.r_c = j.at("r_c").get<std::vector<double>>();
        else
            p.r_c = {j.at("r_c").get<double>()};
        p.b_c = j.at("b_c").get<double>();
        p.phase0 = j.value("phase0", 0.0);
        if (j.contains("explicit_centers") && !j["explicit_centers"].is_null())
            p.explicit_centers = NdArray({p.n_c, p.n_d}, j["explicit_centers"].get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("cluster config: ") + e.what());
    } catch (const DimensionError& e) {
        throw ConfigError(std::string("cluster config: explicit centers: ") + e.what());
    }
    ClusterConfig cfg(p);
    if (j.contains("R_d") && !close(cfg.r_d_, j["R_d"].get<double>()))
        throw ConfigError("cluster config: stored R_d disagrees with recomputed value");
    if (j.contains("k_b") && !close(cfg.k_b_, j["k_b"].get<double>()))
        throw ConfigError("cluster config: stored k_b disagrees with recomputed value");
    return cfg;
}

bool operator==(const ClusterConfig& a, const ClusterConfig& b)
{
    return a.n_c_ == b.n_c_ && a.n_d_ == b.n_d_ && a.d_c_ == b.d_c_ && a.b_c_ == b.b_c_ && a.phase0_ == b.phase0_ &&
           a.r_c_ == b.r_c_ && a.centers_ == b.centers_;
}

ClusterConfig make_cluster_config(std::size_t n_c, double d_c, std::vector<double> r_c, double b_c, double phase0,
                                  std::size_t n_d)
{
    ClusterConfig::Params p;
    p.n_c = n_c;
    p.n_d = n_d;
    p.d_c = d_c;
    p.r_c = std::move(r_c);
    p.b_c = b_c;
    p.phase0 = phase0;
    return ClusterConfig(p);
}

double ClassSimilarityVector::total() const noexcept { return std::accumulate(v.begin(), v.end(), 0.0); }

std::vector<double> center_distances(std::span<const double> z, const ClusterConfig& cfg)
{
    if (z.size() != cfg.n_d())
        throw DimensionError("center_distances: latent has " + std::to_string(z.size()) + " dims, clusters have " +
                             std::to_string(cfg.n_d()));
    std::vector<double> d(cfg.n_c());
    for (std::size_t i = 0; i < cfg.n_c(); ++i) {
        const auto c = cfg.center(i);
        double s = 0.0;
        for (std::size_t k = 0; k < z.size(); ++k) s += (z[k] - c[k]) * (z[k] - c[k]);
        d[i] = std::sqrt(s);
    }
    return d;
}

std::size_t nearest_center(std::span<const double> z, const ClusterConfig& cfg)
{
    const auto d = center_distances(z, cfg);
    return static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
}

constexpr double kRdSnap = 1e-12;

ClassSimilarityVector similarity_from_distances(std::span<const double> distances, const ClusterConfig& cfg)
{
    if (distances.size() != cfg.n_c()) throw DimensionError("class_similarity: distance count != n_c");
    ClassSimilarityVector out;
    out.v.resize(cfg.n_c());
    const double rd = cfg.neighbor_distance();
    // Neighbouring centers sit at distance R_d only up to rounding of their
    // coordinates; snap that band to R_d so distinct centers stay disjoint.
    const double rd_snap = rd * (1.0 - kRdSnap);
    for (std::size_t i = 0; i < cfg.n_c(); ++i) {
        const double d = distances[i];
        const double r = cfg.r_c(i);
        if (d <= r)
            out.v[i] = 1.0 - cfg.k_b() * std::sin(d / r);
        else if (d >= rd_snap)
            out.v[i] = 0.0;
        else
            out.v[i] = cfg.b_c() * (rd - d) / (rd - r);
    }
    return out;
}

ClassSimilarityVector class_similarity(std::span<const double> z, const ClusterConfig& cfg)
{
    const auto d = center_distances(z, cfg);
    return similarity_from_distances(d, cfg);
}

double pairwise_similarity(const ClassSimilarityVector& a, const ClassSimilarityVector& b)
{
    if (a.size() != b.size())
        throw DimensionError("pairwise_similarity: vectors of length " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()));
    double overlap = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        overlap += std::min(a.v[i], b.v[i]);
        sa += a.v[i];
        sb += b.v[i];
    }
    const double denom = std::max(sa, sb);
    return denom > 0.0 ? overlap / denom : 0.0;
}

std::vector<std::size_t> rank_by_similarity(const ClassSimilarityVector& query,
                                            std::span<const ClassSimilarityVector> candidates)
{
    if (candidates.empty()) throw ContractError("rank_by_similarity: empty candidate list");
    std::vector<double> score(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) score[i] = pairwise_similarity(query, candidates[i]);
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    return order;
}

}  // namespace lsconf
