#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "taskden/real.hpp"

namespace taskden {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorImpl;

/// One recorded operation. The node belongs to the tensor it produced and
/// holds strong references to its inputs, so a loss tensor keeps its whole
/// graph alive.
class Node {
public:
    /// Whether each input takes part in differentiation is fixed here, so
    /// later changes to a leaf's requires_grad do not affect this graph.
    explicit Node(std::vector<std::shared_ptr<TensorImpl>> inputs);
    virtual ~Node() = default;
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    /// Propagates `out.grad` into the gradients of the inputs that require one.
    virtual void backward(const TensorImpl& out) = 0;
    virtual const char* name() const = 0;

    const std::vector<std::shared_ptr<TensorImpl>>& inputs() const { return inputs_; }
    bool input_needs_grad(std::size_t i) const { return needs_grad_[i]; }

protected:
    /// Gradient buffer of input `i`, allocated on first use; nullptr when the
    /// input does not take part in differentiation.
    Real* input_grad(std::size_t i);

private:
    std::vector<std::shared_ptr<TensorImpl>> inputs_;
    std::vector<bool> needs_grad_;
};

struct TensorImpl {
    Shape shape;
    std::vector<Real> data;
    std::vector<Real> grad;  // empty until the first accumulation
    bool requires_grad = false;
    std::shared_ptr<Node> grad_fn;
};

/// Shared-handle n-dimensional array taking part in reverse-mode autodiff.
///
/// Copies of a Tensor alias the same storage (like a smart pointer); use
/// `clone()` or `detach()` for an independent value.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, Real fill = Real(0));
    Tensor(Shape shape, std::vector<Real> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), Real(0)); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), Real(1)); }
    static Tensor scalar(Real value) { return Tensor(Shape{1}, value); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;

    std::span<Real> data();
    std::span<const Real> data() const;
    Real item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool flag);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const Real> grad() const;
    std::span<Real> mutable_grad();
    void zero_grad();

    /// New leaf with copied data and no history.
    Tensor detach() const;
    /// Same as detach(), keeping the requires_grad flag.
    Tensor clone() const;

    /// Reverse-mode sweep from this scalar; leaf gradients accumulate.
    void backward() const;

    const std::shared_ptr<Node>& grad_fn() const;
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
    static Tensor from_impl(std::shared_ptr<TensorImpl> impl);

private:
    void require_defined() const;
    std::shared_ptr<TensorImpl> impl_;
};

/// Topologically ordered record of the operations reachable from a root.
/// Every operation appears after all operations producing its inputs.
class Graph {
public:
    static Graph trace(const Tensor& root);

    std::span<TensorImpl* const> operations() const { return ops_; }
    std::size_t size() const { return ops_.size(); }

private:
    std::vector<TensorImpl*> ops_;
};

/// Whether newly executed operations are recorded.
bool grad_mode_enabled();

/// Disables graph recording for the lifetime of the guard (inference).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Throws NumericError naming `what` if any value is not finite.
void check_finite(std::span<const Real> values, const char* what);

}  // namespace taskden
