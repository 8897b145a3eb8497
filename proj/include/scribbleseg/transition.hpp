#pragma once

// Similarity measurement (row-softmax of the feature Gram matrix) and the
// random walk on neural representations, with hand-written backward passes.

#include "scribbleseg/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace scribbleseg {

/// M x N x K neural representation held as an MN x K row-major matrix.
struct FeatureMap {
    int m = 0;
    int n = 0;
    RowMatrix data;

    FeatureMap() = default;
    FeatureMap(int rows, int cols, RowMatrix values) : m(rows), n(cols), data(std::move(values)) {
        validate();
    }

    int k() const noexcept { return static_cast<int>(data.cols()); }
    int cells() const noexcept { return m * n; }

    void validate() const {
        if (m < 1 || n < 1 || data.cols() < 1) {
            throw std::invalid_argument("feature map needs M, N, K >= 1");
        }
        if (data.rows() != static_cast<Eigen::Index>(m) * n) {
            throw std::invalid_argument("feature matrix has " + std::to_string(data.rows()) +
                                        " rows, expected " + std::to_string(m * n));
        }
    }

    Grid<double> as_grid() const { return to_grid(data, m, n); }
    static FeatureMap from_grid(const Grid<double>& g) {
        return FeatureMap(g.height(), g.width(), to_matrix(g));
    }
};

/// MN x MN row-stochastic matrix over the cells of an M x N grid.
struct TransitionMatrix {
    int grid_m = 0;
    int grid_n = 0;
    RowMatrix p;

    int cells() const noexcept { return grid_m * grid_n; }
};

/// A NaN or infinity reached a numeric kernel.
class NonFiniteError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline void require_finite(const RowMatrix& m, const char* what) {
    if (!m.allFinite()) {
        throw NonFiniteError(std::string(what) + " contains non-finite values");
    }
}

/// Numerically stable softmax applied independently to every row.
inline RowMatrix row_softmax(const RowMatrix& logits) {
    RowMatrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double shift = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - shift).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

/// Backward of row_softmax: given y = softmax(x) row-wise and dL/dy, returns dL/dx.
inline RowMatrix row_softmax_backward(const RowMatrix& y, const RowMatrix& grad_y) {
    RowMatrix grad_x = y.cwiseProduct(grad_y);
    const Eigen::VectorXd dots = grad_x.rowwise().sum();
    grad_x -= y.cwiseProduct(dots.replicate(1, y.cols()));
    return grad_x;
}

/// P = softmax_rows(scale * F F^T). `scale` is 1 for the plain form.
inline TransitionMatrix compute_transition(const FeatureMap& f, double scale = 1.0) {
    f.validate();
    require_finite(f.data, "feature map");
    RowMatrix gram = scale * (f.data * f.data.transpose());
    return TransitionMatrix{f.m, f.n, row_softmax(gram)};
}

/// Gradient of a scalar loss w.r.t. F through P = compute_transition(F).
inline RowMatrix transition_backward(const FeatureMap& f, const TransitionMatrix& p,
                                     const RowMatrix& grad_p, double scale = 1.0) {
    const RowMatrix grad_gram = row_softmax_backward(p.p, grad_p);
    return scale * ((grad_gram + grad_gram.transpose()) * f.data);
}

inline void require_matching(const FeatureMap& f, const TransitionMatrix& p) {
    if (p.p.rows() != f.cells() || p.p.cols() != f.cells()) {
        throw std::invalid_argument("transition matrix is " + std::to_string(p.p.rows()) + "x" +
                                    std::to_string(p.p.cols()) + " but feature map has " +
                                    std::to_string(f.cells()) + " cells");
    }
}

/// f_out = alpha * P f + f (the form embedded in the network).
inline FeatureMap random_walk_embedded(const FeatureMap& f, const TransitionMatrix& p, double alpha) {
    f.validate();
    require_matching(f, p);
    RowMatrix out = f.data;
    if (alpha != 0.0) {
        out.noalias() += alpha * (p.p * f.data);
    }
    return FeatureMap(f.m, f.n, std::move(out));
}

struct RandomWalkGrad {
    RowMatrix grad_f;  // direct path only; the path through P is in grad_p
    RowMatrix grad_p;
    double grad_alpha = 0.0;
};

inline RandomWalkGrad random_walk_embedded_backward(const FeatureMap& f, const TransitionMatrix& p,
                                                    double alpha, const RowMatrix& grad_out) {
    RandomWalkGrad g;
    g.grad_alpha = grad_out.cwiseProduct(p.p * f.data).sum();
    g.grad_f = grad_out + alpha * (p.p.transpose() * grad_out);
    g.grad_p = alpha * (grad_out * f.data.transpose());
    return g;
}

/// Classic walk z = alpha * P y + (1 - alpha) * y. Reference only.
inline RowMatrix random_walk_classic(const RowMatrix& y, const TransitionMatrix& p, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("random walk alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
    if (p.p.cols() != y.rows()) {
        throw std::invalid_argument("state vector length does not match transition matrix");
    }
    return alpha * (p.p * y) + (1.0 - alpha) * y;
}

}  // namespace scribbleseg
