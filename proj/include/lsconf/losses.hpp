#pragma once

#include <span>

#include <json.hpp>

#include "lsconf/autodiff.hpp"
#include "lsconf/ls_geometry.hpp"

namespace lsconf {

struct LossWeights {
    double k_g = 0.2;  // geometric term
    double k_d = 1.0;  // KLD term

    void validate() const;
    nlohmann::json to_json() const;
    static LossWeights from_json(const nlohmann::json& j);
};

/// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

Tensor mse(const Tensor& pred, const Tensor& target);

enum class KldForm {
    as_printed,  // mu^2 + sigma^2 - log(sigma) - 0.5
    textbook,    // 0.5 (mu^2 + sigma^2 - log(sigma^2) - 1)
};

/// Mean over all elements. Requires sigma > 0.
Tensor kld_loss(const Tensor& mu, const Tensor& sigma, KldForm form = KldForm::as_printed);

/// exp(relu(x - r_c)) - 1: zero inside the cluster, exponential outside.
double f_d(double x, double r_c);

/// Sum over the batch of f_d(|z_j - C_{y_j}|, r_{y_j}). Not divided by batch size.
Tensor geometric_loss(const Tensor& z, std::span<const std::size_t> labels, const ClusterConfig& clusters);

Tensor combined_supervised_loss(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& z,
                                const ClusterConfig& clusters, const LossWeights& w);

Tensor combined_vae_loss(const Tensor& pred, const Tensor& target, const Tensor& mu, const Tensor& sigma,
                         const LossWeights& w, KldForm form = KldForm::as_printed);

}  // namespace lsconf
