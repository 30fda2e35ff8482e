#pragma once

#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "taskden/tensor.hpp"

namespace taskden::detail {

class FunctionNode final : public Node {
public:
    using BackwardFn = std::function<void(const TensorImpl& out, FunctionNode& node)>;

    FunctionNode(const char* name, std::vector<std::shared_ptr<TensorImpl>> inputs, BackwardFn fn)
        : Node(std::move(inputs)), name_(name), fn_(std::move(fn)) {}

    void backward(const TensorImpl& out) override { fn_(out, *this); }
    const char* name() const override { return name_; }

    Real* grad_of(std::size_t i) { return input_grad(i); }

private:
    const char* name_;
    BackwardFn fn_;
};

/// Wraps freshly computed data into a tensor, attaching a backward node when
/// grad mode is on and one of `inputs` requires a gradient.
inline Tensor make_result(Shape shape, std::vector<Real> data, const char* name,
                          std::initializer_list<const Tensor*> inputs, FunctionNode::BackwardFn fn) {
    Tensor out(std::move(shape), std::move(data));
    bool needs_grad = false;
    if (grad_mode_enabled()) {
        for (const Tensor* t : inputs) {
            if (t->defined() && t->requires_grad()) needs_grad = true;
        }
    }
    if (!needs_grad) return out;
    std::vector<std::shared_ptr<TensorImpl>> impls;
    impls.reserve(inputs.size());
    for (const Tensor* t : inputs) {
        // Undefined optional inputs (e.g. a missing bias) become inert placeholders.
        impls.push_back(t->defined() ? t->impl() : std::make_shared<TensorImpl>());
    }
    auto impl = out.impl();
    impl->requires_grad = true;
    impl->grad_fn = std::make_shared<FunctionNode>(name, std::move(impls), std::move(fn));
    return out;
}

inline void require(bool cond, const std::string& message) {
    if (!cond) throw ShapeError(message);
}

}  // namespace taskden::detail
