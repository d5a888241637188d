#include "lsconf/losses.hpp"

#include <algorithm>
#include <cmath>

#include "lsconf/errors.hpp"

namespace lsconf {

void LossWeights::validate() const
{
    if (!(k_g >= 0.0) || !std::isfinite(k_g)) throw ConfigError("loss weights: k_g must be finite and >= 0");
    if (!(k_d >= 0.0) || !std::isfinite(k_d)) throw ConfigError("loss weights: k_d must be finite and >= 0");
}

nlohmann::json LossWeights::to_json() const { return {{"k_g", k_g}, {"k_d", k_d}}; }

LossWeights LossWeights::from_json(const nlohmann::json& j)
{
    LossWeights w;
    w.k_g = j.value("k_g", w.k_g);
    w.k_d = j.value("k_d", w.k_d);
    w.validate();
    return w;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels)
{
    if (logits.shape().size() != 2) throw DimensionError("cross_entropy: logits must be [N, n_c]");
    const std::size_t n = logits.dim(0), nc = logits.dim(1);
    if (labels.size() != n)
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                             std::to_string(n));
    for (auto y : labels)
        if (y >= nc)
            throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(nc) +
                                ")");

    NdArray probs({n, nc});
    double total = 0.0;
    const NdArray& x = logits.value();
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.data() + i * nc;
        const double mx = *std::max_element(row, row + nc);
        double s = 0.0;
        for (std::size_t c = 0; c < nc; ++c) s += std::exp(row[c] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t c = 0; c < nc; ++c) probs[i * nc + c] = std::exp(row[c] - lse);
        total += lse - row[labels[i]];
    }
    std::vector<std::size_t> y(labels.begin(), labels.end());
    return record("cross_entropy", NdArray::scalar(total / static_cast<double>(n)), {logits},
                  [probs = std::move(probs), y = std::move(y), n, nc](detail::Node& node) {
                      const auto& p = node.parents[0];
                      if (!p->requires_grad) return;
                      NdArray& g = p->grad_buffer();
                      const double s = node.grad[0] / static_cast<double>(n);
                      for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t c = 0; c < nc; ++c)
                              g[i * nc + c] += s * (probs[i * nc + c] - (c == y[i] ? 1.0 : 0.0));
                  });
}

Tensor mse(const Tensor& pred, const Tensor& target)
{
    if (pred.shape() != target.shape())
        throw DimensionError("mse: shape mismatch " + shape_to_string(pred.shape()) + " vs " +
                             shape_to_string(target.shape()));
    return mean(square(sub(pred, target)));
}

Tensor kld_loss(const Tensor& mu, const Tensor& sigma, KldForm form)
{
    if (mu.shape() != sigma.shape())
        throw DimensionError("kld_loss: mu " + shape_to_string(mu.shape()) + " vs sigma " +
                             shape_to_string(sigma.shape()));
    for (double s : sigma.value().values())
        if (!(s > 0.0)) throw ContractError("kld_loss: sigma must be strictly positive");
    if (form == KldForm::as_printed)
        return add_scalar(mean(sub(add(square(mu), square(sigma)), log(sigma))), -0.5);
    return scale(add_scalar(mean(sub(add(square(mu), square(sigma)), scale(log(sigma), 2.0))), -1.0), 0.5);
}

double f_d(double x, double r_c) { return std::exp(std::max(0.0, x - r_c)) - 1.0; }

Tensor geometric_loss(const Tensor& z, std::span<const std::size_t> labels, const ClusterConfig& clusters)
{
    if (z.shape().size() != 2) throw DimensionError("geometric_loss: z must be [b_s, n_d]");
    const std::size_t n = z.dim(0), nd = z.dim(1);
    if (nd != clusters.n_d())
        throw DimensionError("geometric_loss: z has " + std::to_string(nd) + " latent dims, clusters have " +
                             std::to_string(clusters.n_d()));
    if (labels.size() != n) throw DimensionError("geometric_loss: label count does not match batch");

    // Per-sample d(loss)/d(z_j) is f_d'(d) (z_j - C) / d, zero whenever d <= r.
    NdArray dz({n, nd}, 0.0);
    double total = 0.0;
    const NdArray& zv = z.value();
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t y = labels[j];
        if (y >= clusters.n_c())
            throw ContractError("geometric_loss: label " + std::to_string(y) + " has no configured cluster");
        const auto c = clusters.center(y);
        double s = 0.0;
        for (std::size_t k = 0; k < nd; ++k) s += (zv[j * nd + k] - c[k]) * (zv[j * nd + k] - c[k]);
        const double d = std::sqrt(s);
        const double r = clusters.r_c(y);
        total += f_d(d, r);
        if (d > r) {
            const double slope = std::exp(d - r) / d;
            for (std::size_t k = 0; k < nd; ++k) dz[j * nd + k] = slope * (zv[j * nd + k] - c[k]);
        }
    }
    return record("geometric_loss", NdArray::scalar(total), {z}, [dz = std::move(dz)](detail::Node& node) {
        const auto& p = node.parents[0];
        if (!p->requires_grad) return;
        NdArray& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[0] * dz[i];
    });
}

Tensor combined_supervised_loss(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& z,
                                const ClusterConfig& clusters, const LossWeights& w)
{
    w.validate();
    Tensor ce = cross_entropy(logits, labels);
    if (w.k_g == 0.0) return ce;
    return add(ce, scale(geometric_loss(z, labels, clusters), w.k_g));
}

Tensor combined_vae_loss(const Tensor& pred, const Tensor& target, const Tensor& mu, const Tensor& sigma,
                         const LossWeights& w, KldForm form)
{
    w.validate();
    return add(mse(pred, target), scale(kld_loss(mu, sigma, form), w.k_d));
}

}  // namespace lsconf
