#pragma once

// Training losses and their analytic gradients.

#include "scribbleseg/grid.hpp"
#include "scribbleseg/gridtransform.hpp"
#include "scribbleseg/spectral.hpp"
#include "scribbleseg/transition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace scribbleseg {

inline constexpr std::uint8_t kIgnoreLabel = 255;
inline constexpr double kLogClamp = 1e-12;

/// Per-pixel categorical distributions, HW x C, row-major pixels.
struct Prediction {
    int h = 0;
    int w = 0;
    RowMatrix probs;

    int c() const noexcept { return static_cast<int>(probs.cols()); }
    int pixels() const noexcept { return h * w; }

    void validate(double tol = 1e-6) const {
        if (probs.rows() != static_cast<Eigen::Index>(h) * w || probs.cols() < 1) {
            throw std::invalid_argument("prediction shape does not match its grid");
        }
        if ((probs.array() < 0.0).any()) throw std::invalid_argument("prediction has negative probabilities");
        const double worst = (probs.rowwise().sum().array() - 1.0).abs().maxCoeff();
        if (worst > tol) throw std::invalid_argument("prediction rows do not sum to 1");
    }
};

struct LossWeights {
    double omega1 = 0.5;
    double omega2 = 0.1;
    double gamma = 1.0;
    double warmup_fraction = 0.5;

    void validate() const {
        if (omega1 < 0.0 || omega2 < 0.0 || gamma < 0.0) {
            throw std::invalid_argument("loss weights must be non-negative");
        }
        if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
            throw std::invalid_argument("warmup_fraction must lie in [0, 1]");
        }
    }
};

enum class Stage { warmup, full };

/// A scalar loss together with its gradient w.r.t. one matrix input.
struct LossGrad {
    double value = 0.0;
    RowMatrix grad;
};

namespace detail {

inline double safe_log(double v) { return std::log(std::max(v, kLogClamp)); }

inline void require_label_shape(const Prediction& pred, const Grid<std::uint8_t>& labels) {
    if (labels.height() != pred.h || labels.width() != pred.w || labels.depth() != 1) {
        throw std::invalid_argument("label map " + std::to_string(labels.height()) + "x" +
                                    std::to_string(labels.width()) + " does not match prediction " +
                                    std::to_string(pred.h) + "x" + std::to_string(pred.w));
    }
}

}  // namespace detail

/// Mean of -log p(labeled class) over labeled pixels; 0 without labels.
inline LossGrad partial_cross_entropy_grad(const Prediction& pred, const Grid<std::uint8_t>& labels) {
    detail::require_label_shape(pred, labels);
    LossGrad out{0.0, RowMatrix::Zero(pred.probs.rows(), pred.probs.cols())};
    const int classes = pred.c();
    Eigen::Index labeled = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::uint8_t y = labels.data()[i];
        if (y == kIgnoreLabel) continue;
        if (y >= classes) {
            throw std::invalid_argument("scribble class " + std::to_string(y) + " >= class count " +
                                        std::to_string(classes));
        }
        ++labeled;
    }
    if (labeled == 0) return out;
    const double inv = 1.0 / static_cast<double>(labeled);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::uint8_t y = labels.data()[i];
        if (y == kIgnoreLabel) continue;
        const auto row = static_cast<Eigen::Index>(i);
        const double p = pred.probs(row, y);
        out.value -= inv * detail::safe_log(p);
        if (p > kLogClamp) out.grad(row, y) = -inv / p;
    }
    return out;
}

inline double partial_cross_entropy(const Prediction& pred, const Grid<std::uint8_t>& labels) {
    return partial_cross_entropy_grad(pred, labels).value;
}

/// -(1/HW) sum over kept pixels of sum_c s log s. `keep` may be null (all pixels).
inline LossGrad masked_entropy_grad(const Prediction& pred, const Grid<std::uint8_t>* boundary) {
    LossGrad out{0.0, RowMatrix::Zero(pred.probs.rows(), pred.probs.cols())};
    const double inv = 1.0 / static_cast<double>(pred.pixels());
    for (Eigen::Index r = 0; r < pred.probs.rows(); ++r) {
        if (boundary != nullptr && boundary->data()[static_cast<std::size_t>(r)] != 0) continue;
        for (Eigen::Index c = 0; c < pred.probs.cols(); ++c) {
            const double s = pred.probs(r, c);
            const double log_s = detail::safe_log(s);
            out.value -= inv * s * log_s;
            out.grad(r, c) = -inv * (log_s + (s > kLogClamp ? 1.0 : 0.0));
        }
    }
    return out;
}

inline LossGrad entropy_full_grad(const Prediction& pred) { return masked_entropy_grad(pred, nullptr); }
inline double entropy_full(const Prediction& pred) { return entropy_full_grad(pred).value; }

/// Entropy summed over non-boundary pixels, still normalized by 1/HW.
inline LossGrad entropy_soft_grad(const Prediction& pred, const Grid<std::uint8_t>& boundary) {
    if (boundary.height() != pred.h || boundary.width() != pred.w || boundary.depth() != 1) {
        throw std::invalid_argument("boundary mask shape does not match prediction");
    }
    return masked_entropy_grad(pred, &boundary);
}

inline double entropy_soft(const Prediction& pred, const Grid<std::uint8_t>& boundary) {
    return entropy_soft_grad(pred, boundary).value;
}

/// Per-pixel entropy map, H x W.
inline Grid<double> entropy_per_pixel(const Prediction& pred) {
    Grid<double> map(pred.h, pred.w, 1);
    for (Eigen::Index r = 0; r < pred.probs.rows(); ++r) {
        double e = 0.0;
        for (Eigen::Index c = 0; c < pred.probs.cols(); ++c) {
            const double s = pred.probs(r, c);
            e -= s * detail::safe_log(s);
        }
        map.data()[static_cast<std::size_t>(r)] = e;
    }
    return map;
}

struct PairLossGrad {
    double value = 0.0;
    RowMatrix grad_a;
    RowMatrix grad_b;
};

/// Mean squared difference between T_phi(f_a) and f_b.
inline PairLossGrad feature_ss_grad(const FeatureMap& f_a, const FeatureMap& f_b, const TransformSpec& phi) {
    if (f_a.m != f_b.m || f_a.n != f_b.n || f_a.k() != f_b.k()) {
        throw std::invalid_argument("feature maps for self-supervision differ in shape");
    }
    const RowMatrix moved = apply_spatial_rows(f_a.data, phi, f_a.m, f_a.n);
    const RowMatrix diff = moved - f_b.data;
    const double inv = 1.0 / static_cast<double>(diff.size());
    PairLossGrad out;
    out.value = inv * diff.squaredNorm();
    const RowMatrix grad_moved = 2.0 * inv * diff;
    // inverse permutation: scatter rows back to their source cells
    const auto source = transform_source_indices(phi, f_a.m, f_a.n);
    out.grad_a = RowMatrix::Zero(diff.rows(), diff.cols());
    for (std::size_t k = 0; k < source.size(); ++k) {
        out.grad_a.row(source[k]) += grad_moved.row(static_cast<Eigen::Index>(k));
    }
    out.grad_b = -grad_moved;
    return out;
}

inline double feature_ss(const FeatureMap& f_a, const FeatureMap& f_b, const TransformSpec& phi) {
    return feature_ss_grad(f_a, f_b, phi).value;
}

namespace detail {

inline PairLossGrad kl_rows(const RowMatrix& a, const RowMatrix& b) {
    const double inv = 1.0 / static_cast<double>(a.rows());
    PairLossGrad out{0.0, RowMatrix(a.rows(), a.cols()), RowMatrix(a.rows(), a.cols())};
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            const double pa = std::max(a(r, c), kLogClamp);
            const double pb = std::max(b(r, c), kLogClamp);
            const double log_ratio = std::log(pa) - std::log(pb);
            out.value += inv * a(r, c) * log_ratio;
            out.grad_a(r, c) = inv * (log_ratio + (a(r, c) > kLogClamp ? 1.0 : 0.0));
            out.grad_b(r, c) = b(r, c) > kLogClamp ? -inv * a(r, c) / b(r, c) : 0.0;
        }
    }
    return out;
}

inline void require_same_size(const TransitionMatrix& a, const TransitionMatrix& b) {
    if (a.p.rows() != b.p.rows() || a.p.cols() != b.p.cols()) {
        throw std::invalid_argument("transition matrices differ in size");
    }
}

}  // namespace detail

/// (1/MN) sum_rows KL(p_a[row] || p_b[row]). Entries must be strictly positive.
inline PairLossGrad kl_rowwise_grad(const TransitionMatrix& p_a, const TransitionMatrix& p_b) {
    detail::require_same_size(p_a, p_b);
    if ((p_a.p.array() <= 0.0).any() || (p_b.p.array() <= 0.0).any()) {
        throw std::invalid_argument("KL divergence requires strictly positive entries");
    }
    return detail::kl_rows(p_a.p, p_b.p);
}

inline double kl_rowwise(const TransitionMatrix& p_a, const TransitionMatrix& p_b) {
    return kl_rowwise_grad(p_a, p_b).value;
}

/// KL(T(P(x)) || P(t(x))) + gamma * (tr T(P(x)) - tr P(t(x)))^2.
/// grad_a is w.r.t. p_x (before the transform), grad_b w.r.t. p_tx.
/// Entries that underflowed to zero are clamped at 1e-12 inside the logs.
inline PairLossGrad soft_eigenspace_ss_grad(const TransitionMatrix& p_x, const TransitionMatrix& p_tx,
                                            const ComputingMatrices& cm, double gamma) {
    const TransitionMatrix moved = apply_transform_to_transition(p_x, cm);
    detail::require_same_size(moved, p_tx);
    PairLossGrad kl = detail::kl_rows(moved.p, p_tx.p);
    const double trace_gap = moved.p.trace() - p_tx.p.trace();
    kl.value += gamma * trace_gap * trace_gap;
    kl.grad_a.diagonal().array() += 2.0 * gamma * trace_gap;
    kl.grad_b.diagonal().array() -= 2.0 * gamma * trace_gap;
    kl.grad_a = transform_transition_backward(kl.grad_a, cm);
    return kl;
}

inline double soft_eigenspace_ss(const TransitionMatrix& p_x, const TransitionMatrix& p_tx,
                                 const ComputingMatrices& cm, double gamma) {
    return soft_eigenspace_ss_grad(p_x, p_tx, cm, gamma).value;
}

/// Weighted sum of the loss terms. The self-supervision term only enters in
/// the full stage.
inline double total_loss(double partial_ce, double soft_entropy, double ss_value, const LossWeights& w,
                         Stage stage) {
    w.validate();
    double loss = partial_ce + w.omega1 * soft_entropy;
    if (stage == Stage::full) loss += w.omega2 * ss_value;
    return loss;
}

inline double total_loss(const Prediction& pred, const Grid<std::uint8_t>& scribbles,
                         const Grid<std::uint8_t>& boundary, double ss_value, const LossWeights& w, Stage stage) {
    return total_loss(partial_cross_entropy(pred, scribbles), entropy_soft(pred, boundary), ss_value, w, stage);
}

}  // namespace scribbleseg
