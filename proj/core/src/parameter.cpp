#include "taskden/parameter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace taskden {

Parameter::Parameter(std::string name_, Tensor tensor_)
    : name(std::move(name_)), tensor(std::move(tensor_)), rms_accumulator(tensor.numel(), Real(0)) {
    tensor.set_requires_grad(true);
}

void rmsprop_step(std::span<Parameter* const> params, const RmspropOptions& opts) {
    for (Parameter* p : params) {
        if (!p->tensor.has_grad()) continue;
        auto values = p->tensor.data();
        auto grad = p->tensor.grad();
        auto& acc = p->rms_accumulator;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const Real g = grad[i];
            acc[i] = opts.decay * acc[i] + (Real(1) - opts.decay) * g * g;
            values[i] -= opts.lr * g / (std::sqrt(acc[i]) + opts.epsilon);
        }
        p->tensor.zero_grad();
    }
}

void clamp_parameters(std::span<Parameter* const> params, Real bound) {
    if (!(bound > 0)) throw std::invalid_argument("clamp_parameters: bound must be positive");
    for (Parameter* p : params) {
        for (Real& v : p->tensor.data()) v = std::clamp(v, -bound, bound);
    }
}

Real max_abs_value(std::span<Parameter* const> params) {
    Real m = 0;
    for (Parameter* p : params) {
        for (Real v : p->tensor.data()) m = std::max(m, std::abs(v));
    }
    return m;
}

void zero_grads(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->tensor.zero_grad();
}

}  // namespace taskden
