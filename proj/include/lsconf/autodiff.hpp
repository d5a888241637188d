#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lsconf/ndarray.hpp"

namespace lsconf {

class Tape;

namespace detail {

struct Node {
    NdArray value;
    NdArray grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::string op;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads `grad` of this node and accumulates into the parents' grads.
    std::function<void(Node&)> backward;

    NdArray& grad_buffer();
};

}  // namespace detail

/// Handle to a value participating in reverse-mode differentiation.
///
/// Copies share the underlying node. A tensor produced while a Tape is active
/// and from at least one grad-requiring input is recorded on that tape; other
/// tensors are plain constants and carry no graph.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NdArray value, bool requires_grad = false);

    static Tensor parameter(NdArray value) { return Tensor(std::move(value), true); }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const NdArray& value() const { return node_->value; }
    NdArray& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
    std::size_t size() const { return node_->value.size(); }
    double item() const;

    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
    const NdArray& grad() const;
    void zero_grad();
    const std::string& op() const { return node_->op; }

    detail::Node* node() const noexcept { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const noexcept { return node_; }

private:
    friend Tensor record(std::string, NdArray, std::vector<Tensor>, std::function<void(detail::Node&)>);
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
};

/// Ordered record of differentiable operations for one thread.
///
/// Nodes are appended in creation order, which is a topological order, so
/// backward is a single reverse sweep. After backward the tape is frozen until
/// reset().
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape();

    /// Makes this tape the active one for the calling thread while in scope.
    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    static Tape* active() noexcept;

    void backward(const Tensor& loss);
    void reset();

    bool frozen() const noexcept { return frozen_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Name of the first recorded op whose forward value is not finite, or an
    /// empty string.
    std::string first_non_finite_op() const;

private:
    friend Tensor record(std::string, NdArray, std::vector<Tensor>, std::function<void(detail::Node&)>);
    std::vector<std::shared_ptr<detail::Node>> nodes_;
    bool frozen_ = false;
};

/// Creates the output tensor of an op. The backward closure is kept only when
/// the result is recorded on the active tape.
Tensor record(std::string op, NdArray value, std::vector<Tensor> parents,
              std::function<void(detail::Node&)> backward);

/// Accumulates `g` into the grad of `parent` if it requires one.
void accumulate(const std::shared_ptr<detail::Node>& parent, const NdArray& g);

/// Runs backward on the active tape.
void backward(const Tensor& loss);

// Elementwise and reduction ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace lsconf
