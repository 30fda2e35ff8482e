#include <Eigen/Core>

#include "op_support.hpp"
#include "taskden/ops.hpp"
#include "taskden/parallel.hpp"

namespace taskden {

namespace {

using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

struct ConvGeometry {
    std::size_t batch, channels, height, width;
    std::size_t out_channels, kernel_h, kernel_w;
    std::size_t out_h, out_w;
    Conv2dOptions opts;

    std::size_t patch() const { return channels * kernel_h * kernel_w; }
    std::size_t positions() const { return out_h * out_w; }
};

// Unrolls one sample (C x H x W) into a (C*Kh*Kw) x (Ho*Wo) row-major matrix.
void im2col(const Real* image, const ConvGeometry& g, Real* col) {
    const auto s = static_cast<std::ptrdiff_t>(g.opts.stride);
    const auto p = static_cast<std::ptrdiff_t>(g.opts.padding);
    const auto d = static_cast<std::ptrdiff_t>(g.opts.dilation);
    const auto H = static_cast<std::ptrdiff_t>(g.height);
    const auto W = static_cast<std::ptrdiff_t>(g.width);
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        const Real* plane = image + c * g.height * g.width;
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj, ++row) {
                Real* dst = col + row * g.positions();
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s - p + static_cast<std::ptrdiff_t>(ki) * d;
                    Real* out_row = dst + oy * g.out_w;
                    if (iy < 0 || iy >= H) {
                        std::fill(out_row, out_row + g.out_w, Real(0));
                        continue;
                    }
                    const Real* src = plane + iy * W;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox) * s - p + static_cast<std::ptrdiff_t>(kj) * d;
                        out_row[ox] = (ix >= 0 && ix < W) ? src[ix] : Real(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters column gradients back onto the image.
void col2im(const Real* col, const ConvGeometry& g, Real* image) {
    const auto s = static_cast<std::ptrdiff_t>(g.opts.stride);
    const auto p = static_cast<std::ptrdiff_t>(g.opts.padding);
    const auto d = static_cast<std::ptrdiff_t>(g.opts.dilation);
    const auto H = static_cast<std::ptrdiff_t>(g.height);
    const auto W = static_cast<std::ptrdiff_t>(g.width);
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        Real* plane = image + c * g.height * g.width;
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj, ++row) {
                const Real* src = col + row * g.positions();
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s - p + static_cast<std::ptrdiff_t>(ki) * d;
                    if (iy < 0 || iy >= H) continue;
                    Real* dst = plane + iy * W;
                    const Real* in_row = src + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox) * s - p + static_cast<std::ptrdiff_t>(kj) * d;
                        if (ix >= 0 && ix < W) dst[ix] += in_row[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const Conv2dOptions& opts) {
    const std::size_t span = opts.dilation * (kernel - 1) + 1;
    if (opts.stride == 0 || in + 2 * opts.padding < span) return 0;
    return (in + 2 * opts.padding - span) / opts.stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, const Conv2dOptions& opts) {
    detail::require(input.rank() == 4, "conv2d: input must be NCHW, got " + shape_string(input.shape()));
    detail::require(weight.rank() == 4, "conv2d: weight must be OIKK, got " + shape_string(weight.shape()));
    detail::require(input.dim(1) == weight.dim(1), "conv2d: input " + shape_string(input.shape()) +
                                                       " has a channel count different from weight " +
                                                       shape_string(weight.shape()));
    detail::require(opts.stride > 0 && opts.dilation > 0, "conv2d: stride and dilation must be positive");
    if (bias.defined()) {
        detail::require(bias.numel() == weight.dim(0), "conv2d: bias " + shape_string(bias.shape()) +
                                                           " does not match weight " + shape_string(weight.shape()));
    }

    ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0),
                   weight.dim(2), weight.dim(3), 0, 0, opts};
    g.out_h = conv_output_extent(g.height, g.kernel_h, opts);
    g.out_w = conv_output_extent(g.width, g.kernel_w, opts);
    detail::require(g.out_h > 0 && g.out_w > 0, "conv2d: kernel of weight " + shape_string(weight.shape()) +
                                                    " does not fit padded input " + shape_string(input.shape()));

    const std::size_t in_plane = g.channels * g.height * g.width;
    const std::size_t out_plane = g.out_channels * g.positions();
    std::vector<Real> out(g.batch * out_plane);
    const Real* x = input.data().data();
    const ConstMatrixMap w(weight.data().data(), static_cast<Eigen::Index>(g.out_channels),
                           static_cast<Eigen::Index>(g.patch()));
    const Real* b = bias.defined() ? bias.data().data() : nullptr;

    parallel_for(g.batch, [&](std::size_t n) {
        std::vector<Real> col(g.patch() * g.positions());
        im2col(x + n * in_plane, g, col.data());
        const ConstMatrixMap colm(col.data(), static_cast<Eigen::Index>(g.patch()),
                                  static_cast<Eigen::Index>(g.positions()));
        MatrixMap y(out.data() + n * out_plane, static_cast<Eigen::Index>(g.out_channels),
                    static_cast<Eigen::Index>(g.positions()));
        y.noalias() = w * colm;
        if (b) {
            for (std::size_t o = 0; o < g.out_channels; ++o) y.row(static_cast<Eigen::Index>(o)).array() += b[o];
        }
    });

    return detail::make_result(
        Shape{g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out), "conv2d", {&input, &weight, &bias},
        [g, in_plane, out_plane](const TensorImpl& result, detail::FunctionNode& node) {
            const auto& in = node.inputs();
            const Real* x = in[0]->data.data();
            const ConstMatrixMap w(in[1]->data.data(), static_cast<Eigen::Index>(g.out_channels),
                                   static_cast<Eigen::Index>(g.patch()));
            Real* gx = node.grad_of(0);
            Real* gw = node.grad_of(1);
            Real* gb = in[2]->data.empty() ? nullptr : node.grad_of(2);
            const Real* gy = result.grad.data();

            std::vector<Real> per_sample_gw;
            if (gw) per_sample_gw.assign(g.batch * g.out_channels * g.patch(), Real(0));
            if (gx || gw) {
                parallel_for(g.batch, [&](std::size_t n) {
                    const ConstMatrixMap gym(gy + n * out_plane, static_cast<Eigen::Index>(g.out_channels),
                                             static_cast<Eigen::Index>(g.positions()));
                    std::vector<Real> col(g.patch() * g.positions());
                    if (gw) {
                        im2col(x + n * in_plane, g, col.data());
                        const ConstMatrixMap colm(col.data(), static_cast<Eigen::Index>(g.patch()),
                                                  static_cast<Eigen::Index>(g.positions()));
                        MatrixMap gwn(per_sample_gw.data() + n * g.out_channels * g.patch(),
                                      static_cast<Eigen::Index>(g.out_channels), static_cast<Eigen::Index>(g.patch()));
                        gwn.noalias() = gym * colm.transpose();
                    }
                    if (gx) {
                        MatrixMap dcol(col.data(), static_cast<Eigen::Index>(g.patch()),
                                       static_cast<Eigen::Index>(g.positions()));
                        dcol.noalias() = w.transpose() * gym;
                        col2im(col.data(), g, gx + n * in_plane);
                    }
                });
            }
            if (gw) {
                // Fixed-order reduction keeps results independent of the thread count.
                const std::size_t wsize = g.out_channels * g.patch();
                for (std::size_t n = 0; n < g.batch; ++n) {
                    const Real* src = per_sample_gw.data() + n * wsize;
                    for (std::size_t i = 0; i < wsize; ++i) gw[i] += src[i];
                }
            }
            if (gb) {
                for (std::size_t n = 0; n < g.batch; ++n) {
                    for (std::size_t o = 0; o < g.out_channels; ++o) {
                        const Real* row = gy + n * out_plane + o * g.positions();
                        Real acc = 0;
                        for (std::size_t i = 0; i < g.positions(); ++i) acc += row[i];
                        gb[o] += acc;
                    }
                }
            }
        });
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    detail::require(input.rank() == 2 && weight.rank() == 2 && input.dim(1) == weight.dim(0),
                    "dense: input " + shape_string(input.shape()) + " incompatible with weight " +
                        shape_string(weight.shape()));
    const std::size_t n = input.dim(0), f = input.dim(1), o = weight.dim(1);
    if (bias.defined()) {
        detail::require(bias.numel() == o, "dense: bias " + shape_string(bias.shape()) + " does not match weight " +
                                               shape_string(weight.shape()));
    }
    std::vector<Real> out(n * o);
    const auto N = static_cast<Eigen::Index>(n), F = static_cast<Eigen::Index>(f), O = static_cast<Eigen::Index>(o);
    {
        MatrixMap y(out.data(), N, O);
        y.noalias() = ConstMatrixMap(input.data().data(), N, F) * ConstMatrixMap(weight.data().data(), F, O);
        if (bias.defined()) {
            const Real* b = bias.data().data();
            for (Eigen::Index r = 0; r < N; ++r) {
                for (Eigen::Index c = 0; c < O; ++c) y(r, c) += b[c];
            }
        }
    }
    return detail::make_result(
        Shape{n, o}, std::move(out), "dense", {&input, &weight, &bias},
        [N, F, O](const TensorImpl& result, detail::FunctionNode& node) {
            const auto& in = node.inputs();
            const ConstMatrixMap gy(result.grad.data(), N, O);
            if (Real* gx = node.grad_of(0)) {
                MatrixMap(gx, N, F).noalias() += gy * ConstMatrixMap(in[1]->data.data(), F, O).transpose();
            }
            if (Real* gw = node.grad_of(1)) {
                MatrixMap(gw, F, O).noalias() += ConstMatrixMap(in[0]->data.data(), N, F).transpose() * gy;
            }
            if (!in[2]->data.empty()) {
                if (Real* gb = node.grad_of(2)) {
                    for (Eigen::Index r = 0; r < N; ++r) {
                        for (Eigen::Index c = 0; c < O; ++c) gb[c] += gy(r, c);
                    }
                }
            }
        });
}

}  // namespace taskden
