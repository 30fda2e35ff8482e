#pragma once

#include <span>
#include <string>
#include <vector>

#include "taskden/tensor.hpp"

namespace taskden {

/// A trainable tensor with its name path and RMSprop state.
struct Parameter {
    std::string name;
    Tensor tensor;                      // requires_grad unless the owner is frozen
    std::vector<Real> rms_accumulator;  // same length as tensor, values >= 0

    Parameter(std::string name_, Tensor tensor_);
};

struct RmspropOptions {
    Real lr = Real(5e-4);
    Real decay = Real(0.99);
    Real epsilon = Real(1e-8);
};

/// acc <- decay*acc + (1-decay)*g^2;  p <- p - lr*g/(sqrt(acc)+eps); then
/// clears the gradient. Parameters without a gradient (frozen, or not reached
/// by the last backward pass) are left untouched.
void rmsprop_step(std::span<Parameter* const> params, const RmspropOptions& opts);

/// Clamps every parameter value into [-bound, bound] (WGAN weight clipping).
void clamp_parameters(std::span<Parameter* const> params, Real bound);

/// Largest |value| over all parameters.
Real max_abs_value(std::span<Parameter* const> params);

void zero_grads(std::span<Parameter* const> params);

}  // namespace taskden
