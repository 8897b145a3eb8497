#pragma once

// Minimal layers for the tiny encoder: strided 3x3 convolution (im2col),
// single-group normalization, ReLU and separable bilinear upsampling.
// Activations are (rows*cols) x channels row-major matrices.

#include "scribbleseg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace scribbleseg::nn {

using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;
using VecRef = Eigen::Ref<Eigen::VectorXd>;

/// Spatial extent of an activation.
struct Extent {
    int rows = 0;
    int cols = 0;
    int cells() const noexcept { return rows * cols; }
};

/// 3x3 convolution, stride 2, zero padding 1. Weights are a (9*cin) x cout
/// matrix with row index (ky*3 + kx)*cin + ci, followed by cout biases.
struct Conv3x3s2 {
    int cin = 0;
    int cout = 0;

    Eigen::Index weight_count() const { return static_cast<Eigen::Index>(9) * cin * cout; }
    Eigen::Index param_count() const { return weight_count() + cout; }

    static Extent output_extent(Extent in) { return {(in.rows + 1) / 2, (in.cols + 1) / 2}; }

    RowMatrix im2col(const RowMatrix& x, Extent in) const {
        const Extent out = output_extent(in);
        RowMatrix col = RowMatrix::Zero(out.cells(), 9 * cin);
        for (int oy = 0; oy < out.rows; ++oy) {
            for (int ox = 0; ox < out.cols; ++ox) {
                const Eigen::Index r = static_cast<Eigen::Index>(oy) * out.cols + ox;
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = 2 * oy - 1 + ky;
                    if (iy < 0 || iy >= in.rows) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = 2 * ox - 1 + kx;
                        if (ix < 0 || ix >= in.cols) continue;
                        col.row(r).segment((ky * 3 + kx) * cin, cin) = x.row(static_cast<Eigen::Index>(iy) * in.cols + ix);
                    }
                }
            }
        }
        return col;
    }

    RowMatrix col2im(const RowMatrix& col, Extent in) const {
        const Extent out = output_extent(in);
        RowMatrix x = RowMatrix::Zero(in.cells(), cin);
        for (int oy = 0; oy < out.rows; ++oy) {
            for (int ox = 0; ox < out.cols; ++ox) {
                const Eigen::Index r = static_cast<Eigen::Index>(oy) * out.cols + ox;
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = 2 * oy - 1 + ky;
                    if (iy < 0 || iy >= in.rows) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = 2 * ox - 1 + kx;
                        if (ix < 0 || ix >= in.cols) continue;
                        x.row(static_cast<Eigen::Index>(iy) * in.cols + ix) += col.row(r).segment((ky * 3 + kx) * cin, cin);
                    }
                }
            }
        }
        return x;
    }

    /// Returns the output; `col` receives the im2col buffer for backward.
    RowMatrix forward(const RowMatrix& x, Extent in, ConstVecRef params, RowMatrix& col) const {
        col = im2col(x, in);
        Eigen::Map<const RowMatrix> weights(params.data(), 9 * cin, cout);
        RowMatrix y = col * weights;
        y.rowwise() += params.segment(weight_count(), cout).transpose();
        return y;
    }

    /// Accumulates parameter gradients into `grad_params`; returns dL/dx.
    RowMatrix backward(const RowMatrix& grad_y, const RowMatrix& col, Extent in, ConstVecRef params,
                       VecRef grad_params, bool need_input_grad = true) const {
        Eigen::Map<RowMatrix> grad_w(grad_params.data(), 9 * cin, cout);
        grad_w.noalias() += col.transpose() * grad_y;
        grad_params.segment(weight_count(), cout) += grad_y.colwise().sum().transpose();
        if (!need_input_grad) return {};
        Eigen::Map<const RowMatrix> weights(params.data(), 9 * cin, cout);
        const RowMatrix grad_col = grad_y * weights.transpose();
        return col2im(grad_col, in);
    }
};

/// Normalization over all cells and channels of one sample (a single group),
/// then a per-channel affine map. Parameters: gamma[c], beta[c].
struct GroupNorm1 {
    int channels = 0;
    double eps = 1e-5;

    Eigen::Index param_count() const { return 2 * channels; }

    struct Cache {
        RowMatrix normalized;
        double inv_std = 1.0;
    };

    RowMatrix forward(const RowMatrix& x, ConstVecRef params, Cache& cache) const {
        const double n = static_cast<double>(x.size());
        const double mean = x.sum() / n;
        const double var = (x.array() - mean).square().sum() / n;
        cache.inv_std = 1.0 / std::sqrt(var + eps);
        cache.normalized = (x.array() - mean) * cache.inv_std;
        RowMatrix y = cache.normalized * params.head(channels).asDiagonal();
        y.rowwise() += params.segment(channels, channels).transpose();
        return y;
    }

    RowMatrix backward(const RowMatrix& grad_y, const Cache& cache, ConstVecRef params, VecRef grad_params) const {
        grad_params.head(channels) += cache.normalized.cwiseProduct(grad_y).colwise().sum().transpose();
        grad_params.segment(channels, channels) += grad_y.colwise().sum().transpose();
        const RowMatrix grad_hat = grad_y * params.head(channels).asDiagonal();
        const double n = static_cast<double>(grad_y.size());
        const double sum_g = grad_hat.sum();
        const double sum_gx = grad_hat.cwiseProduct(cache.normalized).sum();
        return (cache.inv_std / n) * (n * grad_hat.array() - sum_g - cache.normalized.array() * sum_gx).matrix();
    }
};

inline RowMatrix relu(const RowMatrix& x) { return x.cwiseMax(0.0); }

inline RowMatrix relu_backward(const RowMatrix& y, const RowMatrix& grad_y) {
    return (y.array() > 0.0).select(grad_y, 0.0);
}

/// Bilinear interpolation weights (half-pixel centers, edge clamped) mapping
/// `in` samples to `out` samples along one axis, as an out x in matrix.
inline RowMatrix bilinear_axis(int in, int out) {
    RowMatrix u = RowMatrix::Zero(out, in);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        const double src = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
        const int i0 = static_cast<int>(std::floor(src));
        const int i1 = std::min(i0 + 1, in - 1);
        const double t = src - i0;
        u(o, i0) += 1.0 - t;
        u(o, i1) += t;
    }
    return u;
}

/// Separable bilinear resize of an (in.rows*in.cols) x C matrix.
struct BilinearResize {
    Extent in;
    Extent out;
    RowMatrix uy;  // out.rows x in.rows
    RowMatrix ux;  // out.cols x in.cols

    BilinearResize() = default;
    BilinearResize(Extent from, Extent to)
        : in(from), out(to), uy(bilinear_axis(from.rows, to.rows)), ux(bilinear_axis(from.cols, to.cols)) {}

    RowMatrix forward(const RowMatrix& x) const {
        RowMatrix y(out.cells(), x.cols());
        Eigen::MatrixXd plane(in.rows, in.cols);
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            for (int i = 0; i < in.rows; ++i) {
                for (int j = 0; j < in.cols; ++j) plane(i, j) = x(static_cast<Eigen::Index>(i) * in.cols + j, c);
            }
            const Eigen::MatrixXd up = uy * plane * ux.transpose();
            for (int i = 0; i < out.rows; ++i) {
                for (int j = 0; j < out.cols; ++j) y(static_cast<Eigen::Index>(i) * out.cols + j, c) = up(i, j);
            }
        }
        return y;
    }

    RowMatrix backward(const RowMatrix& grad_y) const {
        RowMatrix grad_x(in.cells(), grad_y.cols());
        Eigen::MatrixXd plane(out.rows, out.cols);
        for (Eigen::Index c = 0; c < grad_y.cols(); ++c) {
            for (int i = 0; i < out.rows; ++i) {
                for (int j = 0; j < out.cols; ++j) plane(i, j) = grad_y(static_cast<Eigen::Index>(i) * out.cols + j, c);
            }
            const Eigen::MatrixXd down = uy.transpose() * plane * ux;
            for (int i = 0; i < in.rows; ++i) {
                for (int j = 0; j < in.cols; ++j) grad_x(static_cast<Eigen::Index>(i) * in.cols + j, c) = down(i, j);
            }
        }
        return grad_x;
    }
};

}  // namespace scribbleseg::nn
