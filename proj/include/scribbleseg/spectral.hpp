#pragma once

// Eigen-analysis of transition matrices through the symmetric similar matrix
// S = D^{-1/2} W D^{-1/2}, where P = D^{-1} W and W = exp(G - g*).

#include "scribbleseg/gridtransform.hpp"
#include "scribbleseg/transition.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace scribbleseg {

/// Right eigenpairs of P, eigenvalues descending, column j paired with value j.
struct EigenSystem {
    Eigen::VectorXd eigenvalues;
    RowMatrix eigenvectors;
    int grid_m = 0;
    int grid_n = 0;
};

namespace detail {

/// Unit norm, largest-magnitude component positive (lowest index wins ties).
inline void normalize_and_fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
    const double norm = v.norm();
    if (norm > 0.0) v /= norm;
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        // strict comparison keeps the lowest index among equal magnitudes
        if (std::abs(v(i)) > best_abs + 1e-12) {
            best_abs = std::abs(v(i));
            best = i;
        }
    }
    if (v(best) < 0.0) v = -v;
}

}  // namespace detail

inline EigenSystem eigendecompose_transition(const TransitionMatrix& p, const FeatureMap& f, double scale = 1.0) {
    require_matching(f, p);
    require_finite(f.data, "feature map");
    const RowMatrix gram = scale * (f.data * f.data.transpose());
    const double shift = gram.maxCoeff();
    const RowMatrix w = (gram.array() - shift).exp().matrix();
    const Eigen::VectorXd degree = w.rowwise().sum();
    if ((degree.array() <= 0.0).any()) {
        throw std::invalid_argument("affinity row underflowed to zero; features are too large to decompose");
    }
    RowMatrix reconstructed = w;
    for (Eigen::Index r = 0; r < w.rows(); ++r) reconstructed.row(r) /= degree(r);
    const double mismatch = (reconstructed - p.p).cwiseAbs().maxCoeff();
    if (mismatch > 1e-6) {
        throw std::invalid_argument("transition matrix does not match its features (max deviation " +
                                    std::to_string(mismatch) + ")");
    }

    const Eigen::VectorXd inv_sqrt = degree.array().rsqrt();
    Eigen::MatrixXd sym = inv_sqrt.asDiagonal() * w * inv_sqrt.asDiagonal();
    sym = 0.5 * (sym + sym.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("symmetric eigensolver failed to converge");
    }

    const Eigen::Index n = sym.rows();
    EigenSystem es;
    es.grid_m = p.grid_m;
    es.grid_n = p.grid_n;
    es.eigenvalues.resize(n);
    es.eigenvectors.resize(n, n);
    // solver returns ascending order
    for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::Index src = n - 1 - j;
        es.eigenvalues(j) = solver.eigenvalues()(src);
        Eigen::VectorXd u = inv_sqrt.asDiagonal() * solver.eigenvectors().col(src);
        detail::normalize_and_fix_sign(u);
        es.eigenvectors.col(j) = u;
    }
    return es;
}

inline double trace(const TransitionMatrix& p) { return p.p.trace(); }

struct LaplacianReport {
    double max_eigenvalue_deviation = 0.0;  // |eig(L) - (1 - eig(P))| after sorting
    double max_imaginary = 0.0;             // largest |Im| among eig(L) from a general solver
    double max_residual = 0.0;              // max_j ||L u_j - (1 - lambda_j) u_j||_inf
};

/// Checks that L = I - P has eigenvalues 1 - lambda and shares P's eigenvectors.
/// eig(L) comes from a general nonsymmetric solver, independent of `es`.
inline LaplacianReport laplacian_relation_check(const EigenSystem& es, const TransitionMatrix& p) {
    const Eigen::Index n = p.p.rows();
    const Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd(p.p);

    LaplacianReport report;
    Eigen::EigenSolver<Eigen::MatrixXd> general(lap, false);
    std::vector<double> lap_values(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        lap_values[static_cast<std::size_t>(i)] = general.eigenvalues()(i).real();
        report.max_imaginary = std::max(report.max_imaginary, std::abs(general.eigenvalues()(i).imag()));
    }
    std::vector<double> expected(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) expected[static_cast<std::size_t>(i)] = 1.0 - es.eigenvalues(i);
    std::sort(lap_values.begin(), lap_values.end());
    std::sort(expected.begin(), expected.end());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        report.max_eigenvalue_deviation = std::max(report.max_eigenvalue_deviation, std::abs(lap_values[i] - expected[i]));
    }

    for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::VectorXd u = es.eigenvectors.col(j);
        const double residual = (lap * u - (1.0 - es.eigenvalues(j)) * u).cwiseAbs().maxCoeff();
        report.max_residual = std::max(report.max_residual, residual);
    }
    return report;
}

namespace detail {

inline Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& columns) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(columns);
    return qr.householderQ() * Eigen::MatrixXd::Identity(columns.rows(), columns.cols());
}

}  // namespace detail

/// Diagnostic for the explicit eigenspace consistency: mean squared difference
/// between the transformed top-k eigenvectors of `es_a` and those of `es_b`,
/// plus the mean squared difference of the top-k eigenvalues. Eigenvalues
/// closer than 1e-6 form a cluster whose spanned subspaces are compared via
/// orthogonal projectors.
inline double explicit_eigenspace_ss(const EigenSystem& es_a, const EigenSystem& es_b,
                                     const ComputingMatrices& cm, int k) {
    const Eigen::Index n = es_a.eigenvalues.size();
    if (es_b.eigenvalues.size() != n || static_cast<Eigen::Index>(cm.grid_m) * cm.grid_n != n) {
        throw std::invalid_argument("eigen systems and computing matrices disagree on grid size");
    }
    if (k < 1 || k > n) {
        throw std::invalid_argument("k must lie in [1, MN], got " + std::to_string(k));
    }

    double value_term = 0.0;
    for (int j = 0; j < k; ++j) {
        const double d = es_a.eigenvalues(j) - es_b.eigenvalues(j);
        value_term += d * d;
    }
    value_term /= k;

    constexpr double kDegenerate = 1e-6;
    double vector_term = 0.0;
    int compared = 0;
    int start = 0;
    while (start < k) {
        int end = start + 1;
        while (end < n && (std::abs(es_a.eigenvalues(end - 1) - es_a.eigenvalues(end)) < kDegenerate ||
                           std::abs(es_b.eigenvalues(end - 1) - es_b.eigenvalues(end)) < kDegenerate)) {
            ++end;
        }
        const int width = end - start;
        Eigen::MatrixXd ua = cm.t_r * es_a.eigenvectors.middleCols(start, width);
        Eigen::MatrixXd ub = es_b.eigenvectors.middleCols(start, width);
        if (width == 1) {
            const double same = (ua.col(0) - ub.col(0)).squaredNorm();
            const double flipped = (ua.col(0) + ub.col(0)).squaredNorm();
            vector_term += std::min(same, flipped) / static_cast<double>(n);
        } else {
            const Eigen::MatrixXd qa = detail::orthonormal_basis(ua);
            const Eigen::MatrixXd qb = detail::orthonormal_basis(ub);
            const Eigen::MatrixXd diff = qa * qa.transpose() - qb * qb.transpose();
            vector_term += diff.squaredNorm() / static_cast<double>(n);
        }
        compared += width;
        start = end;
    }
    vector_term /= compared;
    return vector_term + value_term;
}

/// Each of the first k eigenvectors reshaped to M x N and min-max scaled to [0, 255].
inline std::vector<Grid<std::uint8_t>> eigenvector_images(const EigenSystem& es, int k) {
    if (k < 0 || k > es.eigenvalues.size()) {
        throw std::invalid_argument("requested more eigenvectors than available");
    }
    std::vector<Grid<std::uint8_t>> images;
    for (int j = 0; j < k; ++j) {
        const Eigen::VectorXd v = es.eigenvectors.col(j);
        const double lo = v.minCoeff();
        const double span = v.maxCoeff() - lo;
        Grid<std::uint8_t> img(es.grid_m, es.grid_n, 1);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const double t = span > 0.0 ? (v(i) - lo) / span : 0.0;
            img.data()[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(255.0 * t));
        }
        images.push_back(std::move(img));
    }
    return images;
}

}  // namespace scribbleseg
