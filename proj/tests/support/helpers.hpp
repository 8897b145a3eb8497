#pragma once

#include "support/oracles.hpp"

#include <scribbleseg/transition.hpp>

#include <random>

namespace testing_support {

inline oracle::Mat to_mat(const scribbleseg::RowMatrix& m) {
    oracle::Mat out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    }
    return out;
}

inline scribbleseg::RowMatrix from_mat(const oracle::Mat& m) {
    scribbleseg::RowMatrix out(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m.empty() ? 0 : m[0].size()));
    for (std::size_t r = 0; r < m.size(); ++r) {
        for (std::size_t c = 0; c < m[r].size(); ++c) out(r, c) = m[r][c];
    }
    return out;
}

inline scribbleseg::RowMatrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    scribbleseg::RowMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

inline scribbleseg::FeatureMap random_features(std::mt19937_64& rng, int m, int n, int k, double scale = 0.5) {
    return scribbleseg::FeatureMap(m, n, random_matrix(rng, static_cast<Eigen::Index>(m) * n, k, scale));
}

/// Random row-stochastic matrix with strictly positive entries.
inline scribbleseg::RowMatrix random_stochastic(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    scribbleseg::RowMatrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
        m.row(r) /= m.row(r).sum();
    }
    return m;
}

/// max_i |a_i - b_i| / max(|b|_inf, floor)
inline double rel_error(const oracle::Vec& a, const oracle::Vec& b, double floor = 1e-8) {
    double worst = 0.0;
    double scale = floor;
    for (double v : b) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst / scale;
}

inline oracle::Vec flatten(const scribbleseg::RowMatrix& m) { return oracle::Vec(m.data(), m.data() + m.size()); }

inline scribbleseg::RowMatrix reshape(const oracle::Vec& v, Eigen::Index rows, Eigen::Index cols) {
    scribbleseg::RowMatrix m(rows, cols);
    std::copy(v.begin(), v.end(), m.data());
    return m;
}

}  // namespace testing_support
