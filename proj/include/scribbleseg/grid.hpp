#pragma once

// Dense H x W x D grids and the row-major matrix alias shared by every
// MN-indexed structure in the library.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace scribbleseg {

/// Row-major dynamic matrix. Rows of an MN x K feature matrix are spatial
/// cells flattened as index = row * N + col.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Value-semantic H x W x D array stored (row, col, channel) contiguously.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int height, int width, int depth, T fill = T{})
        : height_(height), width_(width), depth_(depth) {
        if (height < 0 || width < 0 || depth < 0) {
            throw std::invalid_argument("grid dimensions must be non-negative");
        }
        data_.assign(static_cast<std::size_t>(height) * width * depth, fill);
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int depth() const noexcept { return depth_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(int row, int col, int ch = 0) { return data_[index(row, col, ch)]; }
    const T& operator()(int row, int col, int ch = 0) const { return data_[index(row, col, ch)]; }

    std::size_t index(int row, int col, int ch = 0) const noexcept {
        return (static_cast<std::size_t>(row) * width_ + col) * depth_ + ch;
    }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    bool same_shape(const Grid& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_ && depth_ == other.depth_;
    }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.same_shape(b) && a.data_ == b.data_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    int depth_ = 0;
    std::vector<T> data_;
};

/// H x W x 3 image with channel values in [0, 1].
using Image = Grid<double>;
/// H x W single-channel class indices or flags.
using LabelGrid = Grid<std::uint8_t>;

/// Copies a grid into an (H*W) x D row-major matrix.
inline RowMatrix to_matrix(const Grid<double>& g) {
    RowMatrix m(static_cast<Eigen::Index>(g.height()) * g.width(), g.depth());
    std::copy(g.data().begin(), g.data().end(), m.data());
    return m;
}

inline Grid<double> to_grid(const RowMatrix& m, int height, int width) {
    if (static_cast<Eigen::Index>(height) * width != m.rows()) {
        throw std::invalid_argument("matrix rows do not match grid " + std::to_string(height) +
                                    "x" + std::to_string(width));
    }
    Grid<double> g(height, width, static_cast<int>(m.cols()));
    std::copy(m.data(), m.data() + m.size(), g.data().begin());
    return g;
}

}  // namespace scribbleseg
