#include "lsconf/optim.hpp"

#include <cmath>

#include "lsconf/errors.hpp"

namespace lsconf {

void sgd_step(std::vector<NdArray*> params, const std::vector<const NdArray*>& grads, double lr)
{
    if (!(lr > 0.0)) throw ContractError("sgd_step: learning rate must be positive");
    if (params.size() != grads.size()) throw ContractError("sgd_step: parameter/gradient count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        NdArray& p = *params[k];
        const NdArray& g = *grads[k];
        if (p.shape() != g.shape()) throw DimensionError("sgd_step: gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
}

Sgd::Sgd(double lr) : lr_(lr)
{
    if (!(lr > 0.0)) throw ConfigError("sgd: learning rate must be positive");
}

void Sgd::step(std::vector<Tensor>& params)
{
    for (auto& p : params) {
        if (!p.has_grad()) continue;
        sgd_step({&p.mutable_value()}, {&p.grad()}, lr_);
        p.zero_grad();
    }
}

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps)
{
    if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
}

void Adam::step(std::vector<Tensor>& params)
{
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.shape(), 0.0);
            v_.emplace_back(p.shape(), 0.0);
        }
    }
    if (m_.size() != params.size()) throw ContractError("adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = params[k];
        if (!p.has_grad()) continue;
        NdArray& w = p.mutable_value();
        const NdArray& g = p.grad();
        NdArray& m = m_[k];
        NdArray& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
        p.zero_grad();
    }
}

OptimizerKind parse_optimizer_kind(const std::string& name)
{
    if (name == "adam") return OptimizerKind::adam;
    if (name == "sgd") return OptimizerKind::sgd;
    throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

}  // namespace lsconf
