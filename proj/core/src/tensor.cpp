#include "taskden/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace taskden {

namespace {
thread_local bool g_grad_mode = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) n *= extent;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Node::Node(std::vector<std::shared_ptr<TensorImpl>> inputs) : inputs_(std::move(inputs)) {
    needs_grad_.reserve(inputs_.size());
    for (const auto& in : inputs_) needs_grad_.push_back(in->requires_grad);
}

Real* Node::input_grad(std::size_t i) {
    if (!needs_grad_[i]) return nullptr;
    TensorImpl& in = *inputs_[i];
    if (in.grad.empty()) in.grad.assign(in.data.size(), Real(0));
    return in.grad.data();
}

Tensor::Tensor(Shape shape, Real fill) : impl_(std::make_shared<TensorImpl>()) {
    for (std::size_t extent : shape) {
        if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
    }
    if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<Real> data) : impl_(std::make_shared<TensorImpl>()) {
    if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
    for (std::size_t extent : shape) {
        if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_string(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
}

Tensor Tensor::from_impl(std::shared_ptr<TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

void Tensor::require_defined() const {
    if (!impl_) throw std::logic_error("operation on an undefined tensor");
}

const Shape& Tensor::shape() const {
    require_defined();
    return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
    return s[axis];
}

std::size_t Tensor::numel() const {
    require_defined();
    return impl_->data.size();
}

std::span<Real> Tensor::data() {
    require_defined();
    return impl_->data;
}

std::span<const Real> Tensor::data() const {
    require_defined();
    return impl_->data;
}

Real Tensor::item() const {
    require_defined();
    if (impl_->data.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string(impl_->shape));
    return impl_->data[0];
}

bool Tensor::requires_grad() const {
    require_defined();
    return impl_->requires_grad;
}

Tensor& Tensor::set_requires_grad(bool flag) {
    require_defined();
    if (!flag && impl_->grad_fn) throw std::logic_error("cannot clear requires_grad on a non-leaf tensor");
    impl_->requires_grad = flag;
    return *this;
}

bool Tensor::is_leaf() const {
    require_defined();
    return impl_->grad_fn == nullptr;
}

bool Tensor::has_grad() const {
    require_defined();
    return !impl_->grad.empty();
}

std::span<const Real> Tensor::grad() const {
    require_defined();
    return impl_->grad;
}

std::span<Real> Tensor::mutable_grad() {
    require_defined();
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), Real(0));
    return impl_->grad;
}

void Tensor::zero_grad() {
    require_defined();
    impl_->grad.clear();
}

Tensor Tensor::detach() const {
    require_defined();
    return Tensor(impl_->shape, impl_->data);
}

Tensor Tensor::clone() const {
    Tensor t = detach();
    t.impl_->requires_grad = impl_->requires_grad && impl_->grad_fn == nullptr;
    return t;
}

const std::shared_ptr<Node>& Tensor::grad_fn() const {
    require_defined();
    return impl_->grad_fn;
}

Graph Graph::trace(const Tensor& root) {
    Graph g;
    if (!root.defined() || !root.grad_fn()) return g;
    // Iterative post-order DFS: an operation is emitted after all of its inputs.
    std::unordered_set<const TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    stack.emplace_back(root.impl().get(), 0);
    seen.insert(root.impl().get());
    while (!stack.empty()) {
        auto& [impl, next] = stack.back();
        const auto& inputs = impl->grad_fn->inputs();
        if (next < inputs.size()) {
            TensorImpl* in = inputs[next++].get();
            if (in->grad_fn && seen.insert(in).second) stack.emplace_back(in, 0);
            continue;
        }
        g.ops_.push_back(impl);
        stack.pop_back();
    }
    return g;
}

void Tensor::backward() const {
    require_defined();
    if (impl_->data.size() != 1) {
        throw ShapeError("backward() requires a scalar loss, got shape " + shape_string(impl_->shape));
    }
    if (!impl_->requires_grad) return;
    if (impl_->grad.empty()) impl_->grad.assign(1, Real(0));
    impl_->grad[0] += Real(1);
    if (!impl_->grad_fn) return;

    const Graph graph = Graph::trace(*this);
    auto ops = graph.operations();
    std::vector<TensorImpl*> leaves;
    for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
        TensorImpl* out = *it;
        if (!out->grad.empty()) {
            out->grad_fn->backward(*out);
            const auto& inputs = out->grad_fn->inputs();
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                if (!inputs[i]->grad_fn && out->grad_fn->input_needs_grad(i)) leaves.push_back(inputs[i].get());
            }
        }
        // Intermediate gradients are not retained.
        out->grad.clear();
        out->grad.shrink_to_fit();
    }
    for (TensorImpl* leaf : leaves) check_finite(leaf->grad, "leaf gradient");
}

bool grad_mode_enabled() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

void check_finite(std::span<const Real> values, const char* what) {
    for (Real v : values) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
    }
}

}  // namespace taskden
