#pragma once

#include <string>
#include <vector>

#include "lsconf/autodiff.hpp"

namespace lsconf {

/// p <- p - lr * g over parallel parameter/gradient arrays.
void sgd_step(std::vector<NdArray*> params, const std::vector<const NdArray*>& grads, double lr);

class Optimizer {
public:
    virtual ~Optimizer() = default;
    /// Applies one update from the accumulated grads and clears them.
    /// Parameters without a grad are left untouched.
    virtual void step(std::vector<Tensor>& params) = 0;
};

class Sgd final : public Optimizer {
public:
    explicit Sgd(double lr);
    void step(std::vector<Tensor>& params) override;

private:
    double lr_;
};

class Adam final : public Optimizer {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(std::vector<Tensor>& params) override;

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<NdArray> m_, v_;
};

enum class OptimizerKind { adam, sgd };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

}  // namespace lsconf
