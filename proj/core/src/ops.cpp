#include <algorithm>
#include <cmath>

#include "op_support.hpp"
#include "taskden/ops.hpp"

namespace taskden {

namespace {

// Per-output-dimension strides into each operand (0 on broadcast axes).
struct BroadcastPlan {
    Shape out;
    std::vector<std::size_t> a_strides;
    std::vector<std::size_t> b_strides;
    bool same_shape = false;
};

std::vector<std::size_t> aligned_strides(const Shape& shape, const Shape& out) {
    const std::size_t offset = out.size() - shape.size();
    std::vector<std::size_t> strides(out.size(), 0);
    std::size_t stride = 1;
    for (std::size_t i = shape.size(); i-- > 0;) {
        strides[offset + i] = shape[i] == 1 ? 0 : stride;
        stride *= shape[i];
    }
    return strides;
}

BroadcastPlan broadcast_plan(const Tensor& a, const Tensor& b, const char* op) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    BroadcastPlan plan;
    if (sa == sb) {
        plan.out = sa;
        plan.same_shape = true;
        return plan;
    }
    const std::size_t rank = std::max(sa.size(), sb.size());
    plan.out.assign(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t ea = i < rank - sa.size() ? 1 : sa[i - (rank - sa.size())];
        const std::size_t eb = i < rank - sb.size() ? 1 : sb[i - (rank - sb.size())];
        if (ea != eb && ea != 1 && eb != 1) {
            throw ShapeError(std::string(op) + ": shapes " + shape_string(sa) + " and " + shape_string(sb) +
                             " are not broadcast-compatible");
        }
        plan.out[i] = std::max(ea, eb);
    }
    plan.a_strides = aligned_strides(sa, plan.out);
    plan.b_strides = aligned_strides(sb, plan.out);
    return plan;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
void for_each_broadcast(const BroadcastPlan& plan, Fn&& fn) {
    const std::size_t total = shape_numel(plan.out);
    if (plan.same_shape) {
        for (std::size_t i = 0; i < total; ++i) fn(i, i, i);
        return;
    }
    const std::size_t rank = plan.out.size();
    std::vector<std::size_t> counter(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < total; ++i) {
        fn(i, ia, ib);
        for (std::size_t axis = rank; axis-- > 0;) {
            ia += plan.a_strides[axis];
            ib += plan.b_strides[axis];
            if (++counter[axis] < plan.out[axis]) break;
            ia -= plan.a_strides[axis] * plan.out[axis];
            ib -= plan.b_strides[axis] * plan.out[axis];
            counter[axis] = 0;
        }
    }
}

enum class Binary { add, sub, mul, div };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* name) {
    BroadcastPlan plan = broadcast_plan(a, b, name);
    std::vector<Real> out(shape_numel(plan.out));
    const Real* pa = a.data().data();
    const Real* pb = b.data().data();
    for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        switch (kind) {
            case Binary::add: out[i] = pa[ia] + pb[ib]; break;
            case Binary::sub: out[i] = pa[ia] - pb[ib]; break;
            case Binary::mul: out[i] = pa[ia] * pb[ib]; break;
            case Binary::div: out[i] = pa[ia] / pb[ib]; break;
        }
    });
    Shape shape = plan.out;
    return detail::make_result(
        std::move(shape), std::move(out), name, {&a, &b},
        [plan = std::move(plan), kind](const TensorImpl& result, detail::FunctionNode& node) {
            const Real* va = node.inputs()[0]->data.data();
            const Real* vb = node.inputs()[1]->data.data();
            Real* ga = node.grad_of(0);
            Real* gb = node.grad_of(1);
            const Real* gy = result.grad.data();
            for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                const Real g = gy[i];
                switch (kind) {
                    case Binary::add:
                        if (ga) ga[ia] += g;
                        if (gb) gb[ib] += g;
                        break;
                    case Binary::sub:
                        if (ga) ga[ia] += g;
                        if (gb) gb[ib] -= g;
                        break;
                    case Binary::mul:
                        if (ga) ga[ia] += g * vb[ib];
                        if (gb) gb[ib] += g * va[ia];
                        break;
                    case Binary::div:
                        if (ga) ga[ia] += g / vb[ib];
                        if (gb) gb[ib] -= g * va[ia] / (vb[ib] * vb[ib]);
                        break;
                }
            });
        });
}

// Elementwise map whose derivative is expressed through the input value x
// and output value y.
template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, const char* name, Forward f, Derivative df) {
    auto src = x.data();
    std::vector<Real> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = f(src[i]);
    return detail::make_result(x.shape(), std::move(out), name, {&x},
                               [df](const TensorImpl& result, detail::FunctionNode& node) {
                                   Real* gx = node.grad_of(0);
                                   if (!gx) return;
                                   const auto& xs = node.inputs()[0]->data;
                                   for (std::size_t i = 0; i < xs.size(); ++i) {
                                       gx[i] += result.grad[i] * df(xs[i], result.data[i]);
                                   }
                               });
}

void require_nchw(const Tensor& x, const char* op) {
    detail::require(x.rank() == 4, std::string(op) + ": expected NCHW input, got " + shape_string(x.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::div, "div"); }

Tensor scale(const Tensor& x, Real factor) {
    return unary(
        x, "scale", [factor](Real v) { return v * factor; }, [factor](Real, Real) { return factor; });
}

Tensor add_scalar(const Tensor& x, Real value) {
    return unary(
        x, "add_scalar", [value](Real v) { return v + value; }, [](Real, Real) { return Real(1); });
}

Tensor square(const Tensor& x) {
    return unary(
        x, "square", [](Real v) { return v * v; }, [](Real v, Real) { return Real(2) * v; });
}

Tensor abs(const Tensor& x) {
    return unary(
        x, "abs", [](Real v) { return std::abs(v); },
        [](Real v, Real) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); });
}

Tensor clamp_values(const Tensor& x, Real lo, Real hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp_values: lo must not exceed hi");
    return unary(
        x, "clamp_values", [lo, hi](Real v) { return std::clamp(v, lo, hi); },
        [lo, hi](Real v, Real) { return (v >= lo && v <= hi) ? Real(1) : Real(0); });
}

Tensor leaky_relu(const Tensor& x, Real slope) {
    if (!(slope > 0 && slope < 1)) throw std::invalid_argument("leaky_relu: slope must lie in (0, 1)");
    return unary(
        x, "leaky_relu", [slope](Real v) { return v >= 0 ? v : slope * v; },
        [slope](Real v, Real) { return v >= 0 ? Real(1) : slope; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, "sigmoid",
        [](Real v) {
            // Branches keep exp() from overflowing for large |v|.
            if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
            const Real e = std::exp(v);
            return e / (Real(1) + e);
        },
        [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor sum(const Tensor& x) {
    Real acc = 0;
    for (Real v : x.data()) acc += v;
    return detail::make_result(Shape{1}, {acc}, "sum", {&x}, [](const TensorImpl& result, detail::FunctionNode& node) {
        Real* gx = node.grad_of(0);
        if (!gx) return;
        const std::size_t n = node.inputs()[0]->data.size();
        for (std::size_t i = 0; i < n; ++i) gx[i] += result.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    Real acc = 0;
    for (Real v : x.data()) acc += v;
    const auto n = static_cast<Real>(x.numel());
    return detail::make_result(Shape{1}, {acc / n}, "mean", {&x},
                               [n](const TensorImpl& result, detail::FunctionNode& node) {
                                   Real* gx = node.grad_of(0);
                                   if (!gx) return;
                                   const Real g = result.grad[0] / n;
                                   const std::size_t count = node.inputs()[0]->data.size();
                                   for (std::size_t i = 0; i < count; ++i) gx[i] += g;
                               });
}

Tensor reshape(const Tensor& x, Shape shape) {
    detail::require(shape_numel(shape) == x.numel(),
                    "reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    std::vector<Real> out(x.data().begin(), x.data().end());
    return detail::make_result(std::move(shape), std::move(out), "reshape", {&x},
                               [](const TensorImpl& result, detail::FunctionNode& node) {
                                   Real* gx = node.grad_of(0);
                                   if (!gx) return;
                                   for (std::size_t i = 0; i < result.grad.size(); ++i) gx[i] += result.grad[i];
                               });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_nchw(a, "concat_channels");
    require_nchw(b, "concat_channels");
    detail::require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
                    "concat_channels: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                        " differ outside the channel axis");
    const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
    std::vector<Real> out(n * (ca + cb) * plane);
    auto pa = a.data();
    auto pb = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(pa.begin() + i * ca * plane, ca * plane, out.begin() + i * (ca + cb) * plane);
        std::copy_n(pb.begin() + i * cb * plane, cb * plane, out.begin() + (i * (ca + cb) + ca) * plane);
    }
    return detail::make_result(Shape{n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), "concat_channels", {&a, &b},
                               [n, ca, cb, plane](const TensorImpl& result, detail::FunctionNode& node) {
                                   Real* ga = node.grad_of(0);
                                   Real* gb = node.grad_of(1);
                                   for (std::size_t i = 0; i < n; ++i) {
                                       const Real* src = result.grad.data() + i * (ca + cb) * plane;
                                       if (ga) {
                                           for (std::size_t k = 0; k < ca * plane; ++k) ga[i * ca * plane + k] += src[k];
                                       }
                                       if (gb) {
                                           for (std::size_t k = 0; k < cb * plane; ++k) {
                                               gb[i * cb * plane + k] += src[ca * plane + k];
                                           }
                                       }
                                   }
                               });
}

Tensor avg_pool2d(const Tensor& x, std::size_t window) {
    require_nchw(x, "avg_pool2d");
    detail::require(window > 0 && x.dim(2) % window == 0 && x.dim(3) % window == 0,
                    "avg_pool2d: spatial extents of " + shape_string(x.shape()) + " not divisible by " +
                        std::to_string(window));
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h / window, ow = w / window;
    const Real inv = Real(1) / static_cast<Real>(window * window);
    std::vector<Real> out(planes * oh * ow, Real(0));
    auto src = x.data();
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                out[(p * oh + y / window) * ow + xx / window] += src[(p * h + y) * w + xx] * inv;
            }
        }
    }
    return detail::make_result(Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), "avg_pool2d", {&x},
                               [=](const TensorImpl& result, detail::FunctionNode& node) {
                                   Real* gx = node.grad_of(0);
                                   if (!gx) return;
                                   for (std::size_t p = 0; p < planes; ++p) {
                                       for (std::size_t y = 0; y < h; ++y) {
                                           for (std::size_t xx = 0; xx < w; ++xx) {
                                               gx[(p * h + y) * w + xx] +=
                                                   result.grad[(p * oh + y / window) * ow + xx / window] * inv;
                                           }
                                       }
                                   }
                               });
}

Tensor upsample_nearest2d(const Tensor& x, std::size_t factor) {
    require_nchw(x, "upsample_nearest2d");
    detail::require(factor > 0, "upsample_nearest2d: factor must be positive");
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h * factor, ow = w * factor;
    std::vector<Real> out(planes * oh * ow);
    auto src = x.data();
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) {
                out[(p * oh + y) * ow + xx] = src[(p * h + y / factor) * w + xx / factor];
            }
        }
    }
    return detail::make_result(Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), "upsample_nearest2d", {&x},
                               [=](const TensorImpl& result, detail::FunctionNode& node) {
                                   Real* gx = node.grad_of(0);
                                   if (!gx) return;
                                   for (std::size_t p = 0; p < planes; ++p) {
                                       for (std::size_t y = 0; y < oh; ++y) {
                                           for (std::size_t xx = 0; xx < ow; ++xx) {
                                               gx[(p * h + y / factor) * w + xx / factor] +=
                                                   result.grad[(p * oh + y) * ow + xx];
                                           }
                                       }
                                   }
                               });
}

Tensor global_avg_pool2d(const Tensor& x) {
    require_nchw(x, "global_avg_pool2d");
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    const Real inv = Real(1) / static_cast<Real>(plane);
    std::vector<Real> out(n * c, Real(0));
    auto src = x.data();
    for (std::size_t p = 0; p < n * c; ++p) {
        Real acc = 0;
        for (std::size_t k = 0; k < plane; ++k) acc += src[p * plane + k];
        out[p] = acc * inv;
    }
    return detail::make_result(Shape{n, c}, std::move(out), "global_avg_pool2d", {&x},
                               [=](const TensorImpl& result, detail::FunctionNode& node) {
                                   Real* gx = node.grad_of(0);
                                   if (!gx) return;
                                   for (std::size_t p = 0; p < n * c; ++p) {
                                       const Real g = result.grad[p] * inv;
                                       for (std::size_t k = 0; k < plane; ++k) gx[p * plane + k] += g;
                                   }
                               });
}

Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                    Tensor& running_var, bool training, Real momentum, Real epsilon) {
    require_nchw(input, "batch_norm2d");
    const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
    for (const Tensor* t : {&gamma, &beta, static_cast<const Tensor*>(&running_mean),
                            static_cast<const Tensor*>(&running_var)}) {
        detail::require(t->numel() == c, "batch_norm2d: per-channel parameter " + shape_string(t->shape()) +
                                             " does not match input " + shape_string(input.shape()));
    }
    const std::size_t count = n * plane;
    if (training && count < 2) {
        throw NumericError("batch_norm2d: a single value per channel has zero variance in training mode");
    }

    auto x = input.data();
    auto g = gamma.data();
    auto b = beta.data();
    std::vector<Real> inv_std(c), normalized(x.size()), out(x.size());
    for (std::size_t ch = 0; ch < c; ++ch) {
        Real mu, var;
        if (training) {
            double acc = 0;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < plane; ++k) acc += x[(i * c + ch) * plane + k];
            }
            mu = static_cast<Real>(acc / static_cast<double>(count));
            double sq = 0;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < plane; ++k) {
                    const double d = x[(i * c + ch) * plane + k] - mu;
                    sq += d * d;
                }
            }
            var = static_cast<Real>(sq / static_cast<double>(count));
            auto rm = running_mean.data();
            auto rv = running_var.data();
            rm[ch] = (Real(1) - momentum) * rm[ch] + momentum * mu;
            rv[ch] = (Real(1) - momentum) * rv[ch] +
                     momentum * static_cast<Real>(sq / static_cast<double>(count - 1));
        } else {
            mu = running_mean.data()[ch];
            var = running_var.data()[ch];
        }
        inv_std[ch] = Real(1) / std::sqrt(var + epsilon);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < plane; ++k) {
                const std::size_t idx = (i * c + ch) * plane + k;
                normalized[idx] = (x[idx] - mu) * inv_std[ch];
                out[idx] = g[ch] * normalized[idx] + b[ch];
            }
        }
    }

    return detail::make_result(
        input.shape(), std::move(out), "batch_norm2d", {&input, &gamma, &beta},
        [n, c, plane, count, training, inv_std = std::move(inv_std), normalized = std::move(normalized)](
            const TensorImpl& result, detail::FunctionNode& node) {
            const Real* gy = result.grad.data();
            const Real* gam = node.inputs()[1]->data.data();
            Real* gx = node.grad_of(0);
            Real* ggamma = node.grad_of(1);
            Real* gbeta = node.grad_of(2);
            for (std::size_t ch = 0; ch < c; ++ch) {
                double sum_dy = 0, sum_dy_xhat = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t k = 0; k < plane; ++k) {
                        const std::size_t idx = (i * c + ch) * plane + k;
                        sum_dy += gy[idx];
                        sum_dy_xhat += static_cast<double>(gy[idx]) * normalized[idx];
                    }
                }
                if (ggamma) ggamma[ch] += static_cast<Real>(sum_dy_xhat);
                if (gbeta) gbeta[ch] += static_cast<Real>(sum_dy);
                if (!gx) continue;
                const Real scale_in = gam[ch] * inv_std[ch];
                if (!training) {
                    for (std::size_t i = 0; i < n; ++i) {
                        for (std::size_t k = 0; k < plane; ++k) {
                            const std::size_t idx = (i * c + ch) * plane + k;
                            gx[idx] += gy[idx] * scale_in;
                        }
                    }
                    continue;
                }
                // dx = gamma * inv_std / M * (M dy - sum(dy) - xhat * sum(dy xhat))
                const auto m = static_cast<double>(count);
                const double mean_dy = sum_dy / m;
                const double mean_dy_xhat = sum_dy_xhat / m;
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t k = 0; k < plane; ++k) {
                        const std::size_t idx = (i * c + ch) * plane + k;
                        gx[idx] += static_cast<Real>(scale_in *
                                                     (gy[idx] - mean_dy - normalized[idx] * mean_dy_xhat));
                    }
                }
            }
        });
}

}  // namespace taskden
