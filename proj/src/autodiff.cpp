#include "lsconf/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "lsconf/errors.hpp"

namespace lsconf {

namespace {
thread_local Tape* g_active_tape = nullptr;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op)
{
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                             shape_to_string(b.shape()));
}
}  // namespace

NdArray& detail::Node::grad_buffer()
{
    if (grad.empty()) grad = NdArray(value.shape(), 0.0);
    return grad;
}

Tensor::Tensor(NdArray value, bool requires_grad) : node_(std::make_shared<detail::Node>())
{
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->op = "leaf";
}

double Tensor::item() const
{
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
    return node_->value[0];
}

const NdArray& Tensor::grad() const
{
    if (!has_grad()) throw ContractError("tensor has no gradient");
    return node_->grad;
}

void Tensor::zero_grad()
{
    if (node_) node_->grad = NdArray();
}

Tape::~Tape()
{
    if (g_active_tape == this) g_active_tape = nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() noexcept { return g_active_tape; }

void Tape::reset()
{
    nodes_.clear();
    frozen_ = false;
}

void Tape::backward(const Tensor& loss)
{
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward requires a scalar loss, got shape " +
                            (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
    if (frozen_) throw ContractError("backward on a frozen tape; call reset() first");
    if (!loss.requires_grad()) throw ContractError("loss does not depend on any parameter recorded on the tape");
    frozen_ = true;
    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        detail::Node& n = **it;
        if (n.grad.empty() || !n.backward) continue;
        n.backward(n);
    }
}

std::string Tape::first_non_finite_op() const
{
    for (const auto& n : nodes_)
        if (!n->value.all_finite()) return n->op;
    return {};
}

Tensor record(std::string op, NdArray value, std::vector<Tensor> parents,
              std::function<void(detail::Node&)> backward_fn)
{
    auto node = std::make_shared<detail::Node>();
    node->value = std::move(value);
    node->op = std::move(op);
    Tape* tape = g_active_tape;
    const bool any_grad =
        std::any_of(parents.begin(), parents.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (tape && any_grad) {
        if (tape->frozen_) throw ContractError("recording '" + node->op + "' on a frozen tape");
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node_ptr());
        node->backward = std::move(backward_fn);
        tape->nodes_.push_back(node);
    }
    return Tensor(std::move(node));
}

void accumulate(const std::shared_ptr<detail::Node>& parent, const NdArray& g)
{
    if (!parent->requires_grad) return;
    NdArray& buf = parent->grad_buffer();
    double* dst = buf.data();
    const double* src = g.data();
    for (std::size_t i = 0, n = buf.size(); i < n; ++i) dst[i] += src[i];
}

void backward(const Tensor& loss)
{
    Tape* tape = Tape::active();
    if (!tape) throw ContractError("backward called without an active tape");
    tape->backward(loss);
}

namespace {

// Elementwise unary op helper: f gives the value, df the local derivative
// expressed through the input x and the output y.
template <class F, class DF>
Tensor unary(const char* name, const Tensor& a, F f, DF df)
{
    NdArray out(a.shape());
    const NdArray& x = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    return record(name, std::move(out), {a}, [df](detail::Node& n) {
        const auto& p = n.parents[0];
        if (!p->requires_grad) return;
        NdArray& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * df(p->value[i], n.value[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "add");
    NdArray out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return record("add", std::move(out), {a, b}, [](detail::Node& n) {
        accumulate(n.parents[0], n.grad);
        accumulate(n.parents[1], n.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "sub");
    NdArray out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return record("sub", std::move(out), {a, b}, [](detail::Node& n) {
        accumulate(n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            NdArray& g = n.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "mul");
    NdArray out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return record("mul", std::move(out), {a, b}, [](detail::Node& n) {
        for (int k = 0; k < 2; ++k) {
            const auto& self = n.parents[k];
            const auto& other = n.parents[1 - k];
            if (!self->requires_grad) continue;
            NdArray& g = self->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * other->value[i];
        }
    });
}

Tensor scale(const Tensor& a, double s)
{
    return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s)
{
    return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a)
{
    return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor log(const Tensor& a)
{
    for (double v : a.value().values())
        if (!(v > 0.0)) throw ContractError("log: non-positive input");
    return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a)
{
    return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor softplus(const Tensor& a)
{
    // log(1 + e^x) evaluated without overflow for large |x|.
    return unary(
        "softplus", a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor relu(const Tensor& a)
{
    // NaN passes through so the non-finite diagnostic can still see it.
    return unary("relu", a, [](double x) { return x <= 0.0 ? 0.0 : x; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a)
{
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    return record("sum", NdArray::scalar(s), {a}, [](detail::Node& n) {
        const auto& p = n.parents[0];
        if (!p->requires_grad) return;
        NdArray& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor reshape(const Tensor& a, Shape shape)
{
    if (numel(shape) != a.size())
        throw DimensionError("reshape: " + shape_to_string(a.shape()) + " -> " + shape_to_string(shape));
    return record("reshape", a.value().reshaped(std::move(shape)), {a}, [](detail::Node& n) {
        const auto& p = n.parents[0];
        if (!p->requires_grad) return;
        NdArray& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

}  // namespace lsconf
