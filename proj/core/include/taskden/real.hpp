#pragma once

#include <stdexcept>
#include <string>

namespace taskden {

// Scalar type of every tensor. The library is compiled once per precision:
// `taskden::core` uses float for training speed, `taskden::core_f64` defines
// TASKDEN_REAL_DOUBLE and is what the gradient-check suites link against.
#ifdef TASKDEN_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

inline constexpr bool kDoublePrecision = sizeof(Real) == sizeof(double);

/// Thrown when operand shapes do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces NaN/Inf or is otherwise numerically invalid.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File-system and format errors (checkpoints, images, manifests).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace taskden
