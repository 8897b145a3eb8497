#pragma once

// Spatial transforms on grids and the permutation ("computing") matrices that
// realize the same transform directly on a transition matrix.
//
// Translation is circular so every transform is a pure permutation of the
// row-major flattened cells.

#include "scribbleseg/grid.hpp"
#include "scribbleseg/transition.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

namespace scribbleseg {

enum class TransformKind { horizontal_flip, translation };

struct TransformSpec {
    TransformKind kind = TransformKind::horizontal_flip;
    int dx = 0;  // columns, translation only
    int dy = 0;  // rows, translation only

    static TransformSpec flip() { return {TransformKind::horizontal_flip, 0, 0}; }
    static TransformSpec translate(int dx, int dy) { return {TransformKind::translation, dx, dy}; }

    friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

inline std::string to_string(const TransformSpec& phi) {
    if (phi.kind == TransformKind::horizontal_flip) return "flip";
    return "translate(" + std::to_string(phi.dx) + "," + std::to_string(phi.dy) + ")";
}

inline void validate_transform(const TransformSpec& phi, int rows, int cols) {
    if (rows < 1 || cols < 1) {
        throw std::invalid_argument("transform target grid must be at least 1x1");
    }
    if (phi.kind == TransformKind::translation) {
        if (std::abs(phi.dx) >= cols || std::abs(phi.dy) >= rows) {
            throw std::invalid_argument("translation " + to_string(phi) + " exceeds grid " +
                                        std::to_string(rows) + "x" + std::to_string(cols));
        }
    } else if (phi.dx != 0 || phi.dy != 0) {
        throw std::invalid_argument("horizontal flip takes no shift parameters");
    }
}

/// Flattened source index for every destination cell: out[k] = in[source[k]].
inline std::vector<int> transform_source_indices(const TransformSpec& phi, int rows, int cols) {
    validate_transform(phi, rows, cols);
    std::vector<int> source(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            int si = i;
            int sj = cols - 1 - j;
            if (phi.kind == TransformKind::translation) {
                si = ((i - phi.dy) % rows + rows) % rows;
                sj = ((j - phi.dx) % cols + cols) % cols;
            }
            source[static_cast<std::size_t>(i) * cols + j] = si * cols + sj;
        }
    }
    return source;
}

template <typename T>
Grid<T> apply_spatial(const Grid<T>& x, const TransformSpec& phi) {
    if (x.empty()) {
        throw std::invalid_argument("cannot transform an empty grid");
    }
    const auto source = transform_source_indices(phi, x.height(), x.width());
    Grid<T> out(x.height(), x.width(), x.depth());
    const int depth = x.depth();
    for (std::size_t k = 0; k < source.size(); ++k) {
        const auto* src = x.data().data() + static_cast<std::size_t>(source[k]) * depth;
        std::copy(src, src + depth, out.data().data() + k * depth);
    }
    return out;
}

/// Applies the spatial transform to the rows of an MN x K matrix.
inline RowMatrix apply_spatial_rows(const RowMatrix& x, const TransformSpec& phi, int rows, int cols) {
    if (x.rows() != static_cast<Eigen::Index>(rows) * cols) {
        throw std::invalid_argument("matrix rows do not match the transform grid");
    }
    const auto source = transform_source_indices(phi, rows, cols);
    RowMatrix out(x.rows(), x.cols());
    for (std::size_t k = 0; k < source.size(); ++k) {
        out.row(static_cast<Eigen::Index>(k)) = x.row(source[k]);
    }
    return out;
}

inline FeatureMap apply_spatial(const FeatureMap& f, const TransformSpec& phi) {
    return FeatureMap(f.m, f.n, apply_spatial_rows(f.data, phi, f.m, f.n));
}

/// Pair of permutation matrices with T(P) = t_r * P * t_c and t_c = t_r^T.
struct ComputingMatrices {
    RowMatrix t_r;
    RowMatrix t_c;
    int grid_m = 0;
    int grid_n = 0;
    std::vector<int> source;  // t_r(k, source[k]) == 1
};

inline ComputingMatrices build_computing_matrices(const TransformSpec& phi, int m, int n) {
    ComputingMatrices cm;
    cm.grid_m = m;
    cm.grid_n = n;
    cm.source = transform_source_indices(phi, m, n);
    const Eigen::Index cells = static_cast<Eigen::Index>(m) * n;
    cm.t_r = RowMatrix::Zero(cells, cells);
    for (Eigen::Index k = 0; k < cells; ++k) {
        cm.t_r(k, cm.source[static_cast<std::size_t>(k)]) = 1.0;
    }
    cm.t_c = cm.t_r.transpose();
    return cm;
}

inline void require_matching(const TransitionMatrix& p, const ComputingMatrices& cm) {
    const Eigen::Index cells = static_cast<Eigen::Index>(cm.grid_m) * cm.grid_n;
    if (p.p.rows() != cells || p.p.cols() != cells) {
        throw std::invalid_argument("transition matrix " + std::to_string(p.p.rows()) + "x" +
                                    std::to_string(p.p.cols()) + " does not match computing matrices for " +
                                    std::to_string(cm.grid_m) + "x" + std::to_string(cm.grid_n) + " grid");
    }
}

inline TransitionMatrix apply_transform_to_transition(const TransitionMatrix& p, const ComputingMatrices& cm) {
    require_matching(p, cm);
    RowMatrix out = cm.t_r * p.p * cm.t_c;
    return TransitionMatrix{cm.grid_m, cm.grid_n, std::move(out)};
}

/// Backward of apply_transform_to_transition: dL/dP = t_r^T (dL/dT) t_c^T.
inline RowMatrix transform_transition_backward(const RowMatrix& grad_out, const ComputingMatrices& cm) {
    return cm.t_r.transpose() * grad_out * cm.t_c.transpose();
}

/// Maps an image-level transform onto a feature grid downsampled by `stride`.
/// Translations must be stride-aligned.
inline TransformSpec scale_to_grid(const TransformSpec& phi, int stride) {
    if (phi.kind == TransformKind::horizontal_flip) return phi;
    if (phi.dx % stride != 0 || phi.dy % stride != 0) {
        throw std::invalid_argument("translation " + to_string(phi) + " is not aligned to stride " +
                                    std::to_string(stride));
    }
    return TransformSpec::translate(phi.dx / stride, phi.dy / stride);
}

}  // namespace scribbleseg
