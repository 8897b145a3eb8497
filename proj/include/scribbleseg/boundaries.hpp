#pragma once

// SLIC superpixels and the pseudo-boundary masks excluded from the entropy term.

#include "scribbleseg/grid.hpp"
#include "scribbleseg/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace scribbleseg {

struct SuperpixelLabeling {
    Grid<int> labels;
    int n_segments = 0;
};

/// true (1) marks a boundary pixel.
struct BoundaryMask {
    LabelGrid mask;
};

struct SlicParams {
    int n_segments = 0;  // 0 selects ceil(HW / 256)
    double compactness = 10.0;
    int max_iters = 10;
    int dilation = 1;

    int resolved_segments(int height, int width) const {
        return n_segments > 0 ? n_segments : std::max(1, (height * width + 255) / 256);
    }
};

namespace detail {

/// 4-connected components; returns component id per pixel and the count.
inline int connected_components(const Grid<int>& labels, Grid<int>& component) {
    const int h = labels.height();
    const int w = labels.width();
    component = Grid<int>(h, w, 1, -1);
    int count = 0;
    std::vector<int> stack;
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            if (component(i, j) >= 0) continue;
            const int value = labels(i, j);
            component(i, j) = count;
            stack.assign(1, i * w + j);
            while (!stack.empty()) {
                const int idx = stack.back();
                stack.pop_back();
                const int r = idx / w;
                const int c = idx % w;
                constexpr std::array<std::array<int, 2>, 4> kNeighbors{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
                for (const auto& d : kNeighbors) {
                    const int nr = r + d[0];
                    const int nc = c + d[1];
                    if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                    if (component(nr, nc) >= 0 || labels(nr, nc) != value) continue;
                    component(nr, nc) = count;
                    stack.push_back(nr * w + nc);
                }
            }
            ++count;
        }
    }
    return count;
}

/// Merges stray components (every component of a label except its largest)
/// into the largest adjacent component, one at a time and smallest first, so
/// the component count strictly decreases; then relabels densely in scan order.
inline int enforce_connectivity(Grid<int>& labels) {
    const int h = labels.height();
    const int w = labels.width();
    Grid<int> component;
    while (true) {
        const int n_comp = connected_components(labels, component);
        std::vector<int> comp_size(static_cast<std::size_t>(n_comp), 0);
        std::vector<int> comp_label(static_cast<std::size_t>(n_comp), 0);
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                ++comp_size[static_cast<std::size_t>(component(i, j))];
                comp_label[static_cast<std::size_t>(component(i, j))] = labels(i, j);
            }
        }
        // the largest component of each label keeps it (lowest component id on ties)
        std::map<int, int> keeper;
        for (int c = 0; c < n_comp; ++c) {
            const int lbl = comp_label[static_cast<std::size_t>(c)];
            auto it = keeper.find(lbl);
            if (it == keeper.end() || comp_size[static_cast<std::size_t>(c)] > comp_size[static_cast<std::size_t>(it->second)]) {
                keeper[lbl] = c;
            }
        }
        int stray = -1;
        for (int c = 0; c < n_comp; ++c) {
            if (keeper[comp_label[static_cast<std::size_t>(c)]] == c) continue;
            if (stray < 0 || comp_size[static_cast<std::size_t>(c)] < comp_size[static_cast<std::size_t>(stray)]) stray = c;
        }
        if (stray < 0) break;
        int best = -1;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                if (component(i, j) != stray) continue;
                constexpr std::array<std::array<int, 2>, 4> kNeighbors{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
                for (const auto& d : kNeighbors) {
                    const int nr = i + d[0];
                    const int nc = j + d[1];
                    if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                    const int other = component(nr, nc);
                    if (other == stray) continue;
                    if (best < 0 || comp_size[static_cast<std::size_t>(other)] > comp_size[static_cast<std::size_t>(best)] ||
                        (comp_size[static_cast<std::size_t>(other)] == comp_size[static_cast<std::size_t>(best)] && other < best)) {
                        best = other;
                    }
                }
            }
        }
        if (best < 0) break;  // a stray always touches another component unless it fills the image
        const int target = comp_label[static_cast<std::size_t>(best)];
        for (auto i = std::size_t{0}; i < labels.size(); ++i) {
            if (component.data()[i] == stray) labels.data()[i] = target;
        }
    }
    std::map<int, int> dense;
    for (auto& v : labels.data()) {
        auto [it, inserted] = dense.try_emplace(v, static_cast<int>(dense.size()));
        v = it->second;
    }
    return static_cast<int>(dense.size());
}

}  // namespace detail

/// Simple linear iterative clustering in the image's native color space
/// (channels scaled to 0..255). Distance D^2 = d_color^2 + (d_xy / S)^2 * m^2.
inline SuperpixelLabeling slic(const Image& image, int n_segments, double compactness = 10.0, int max_iters = 10) {
    const int h = image.height();
    const int w = image.width();
    if (image.empty()) throw std::invalid_argument("SLIC needs a non-empty image");
    if (n_segments < 1) throw std::invalid_argument("SLIC needs at least one segment");
    if (static_cast<long long>(n_segments) > static_cast<long long>(h) * w) {
        throw std::invalid_argument("SLIC segment count " + std::to_string(n_segments) + " exceeds pixel count");
    }
    const int channels = image.depth();
    const double step = std::sqrt(static_cast<double>(h) * w / n_segments);
    const int rows = std::max(1, static_cast<int>(std::lround(h / step)));
    const int cols = std::max(1, static_cast<int>(std::lround(w / step)));

    auto color = [&](int i, int j, int c) { return 255.0 * image(i, j, c); };
    auto gradient = [&](int i, int j) {
        double g = 0.0;
        for (int c = 0; c < channels; ++c) {
            const double gx = color(i, std::min(j + 1, w - 1), c) - color(i, std::max(j - 1, 0), c);
            const double gy = color(std::min(i + 1, h - 1), j, c) - color(std::max(i - 1, 0), j, c);
            g += gx * gx + gy * gy;
        }
        return g;
    };

    struct Center {
        std::vector<double> color;
        double y = 0.0;
        double x = 0.0;
    };
    std::vector<Center> centers;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            int cy = std::min(h - 1, static_cast<int>((r + 0.5) * h / rows));
            int cx = std::min(w - 1, static_cast<int>((c + 0.5) * w / cols));
            double best = gradient(cy, cx);
            int by = cy;
            int bx = cx;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int y = cy + dy;
                    const int x = cx + dx;
                    if (y < 0 || y >= h || x < 0 || x >= w) continue;
                    const double g = gradient(y, x);
                    if (g < best) {
                        best = g;
                        by = y;
                        bx = x;
                    }
                }
            }
            Center center;
            center.y = by;
            center.x = bx;
            for (int ch = 0; ch < channels; ++ch) center.color.push_back(color(by, bx, ch));
            centers.push_back(std::move(center));
        }
    }

    const double spatial_weight = (compactness / step) * (compactness / step);
    const int radius = static_cast<int>(std::ceil(step));
    Grid<int> labels(h, w, 1, -1);
    Grid<double> distance(h, w, 1);
    auto distance_to = [&](const Center& ctr, int i, int j) {
        double dc = 0.0;
        for (int ch = 0; ch < channels; ++ch) {
            const double d = color(i, j, ch) - ctr.color[static_cast<std::size_t>(ch)];
            dc += d * d;
        }
        const double dy = i - ctr.y;
        const double dx = j - ctr.x;
        return dc + (dx * dx + dy * dy) * spatial_weight;
    };

    for (int iter = 0; iter < std::max(1, max_iters); ++iter) {
        std::fill(distance.data().begin(), distance.data().end(), std::numeric_limits<double>::infinity());
        Grid<int> next(h, w, 1, -1);
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const Center& ctr = centers[k];
            const int y0 = std::max(0, static_cast<int>(ctr.y) - radius);
            const int y1 = std::min(h - 1, static_cast<int>(ctr.y) + radius);
            const int x0 = std::max(0, static_cast<int>(ctr.x) - radius);
            const int x1 = std::min(w - 1, static_cast<int>(ctr.x) + radius);
            for (int i = y0; i <= y1; ++i) {
                for (int j = x0; j <= x1; ++j) {
                    const double d = distance_to(ctr, i, j);
                    if (d < distance(i, j)) {
                        distance(i, j) = d;
                        next(i, j) = static_cast<int>(k);
                    }
                }
            }
        }
        // pixels outside every window fall back to the globally nearest center
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                if (next(i, j) >= 0) continue;
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k < centers.size(); ++k) {
                    const double d = distance_to(centers[k], i, j);
                    if (d < best) {
                        best = d;
                        next(i, j) = static_cast<int>(k);
                    }
                }
            }
        }
        const bool converged = next == labels;
        labels = std::move(next);
        if (converged) break;

        std::vector<Center> sums(centers.size());
        std::vector<int> counts(centers.size(), 0);
        for (auto& s : sums) s.color.assign(static_cast<std::size_t>(channels), 0.0);
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const auto k = static_cast<std::size_t>(labels(i, j));
                for (int ch = 0; ch < channels; ++ch) sums[k].color[static_cast<std::size_t>(ch)] += color(i, j, ch);
                sums[k].y += i;
                sums[k].x += j;
                ++counts[k];
            }
        }
        for (std::size_t k = 0; k < centers.size(); ++k) {
            if (counts[k] == 0) continue;
            for (int ch = 0; ch < channels; ++ch) {
                centers[k].color[static_cast<std::size_t>(ch)] = sums[k].color[static_cast<std::size_t>(ch)] / counts[k];
            }
            centers[k].y = sums[k].y / counts[k];
            centers[k].x = sums[k].x / counts[k];
        }
    }

    SuperpixelLabeling out;
    out.n_segments = detail::enforce_connectivity(labels);
    out.labels = std::move(labels);
    return out;
}

/// Pixels with a 4-neighbor in another segment, dilated by `dilation` (Chebyshev).
inline BoundaryMask boundary_mask(const SuperpixelLabeling& sp, int dilation) {
    if (dilation < 0) throw std::invalid_argument("dilation must be non-negative");
    const int h = sp.labels.height();
    const int w = sp.labels.width();
    LabelGrid edge(h, w, 1, 0);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const int v = sp.labels(i, j);
            if ((i > 0 && sp.labels(i - 1, j) != v) || (i + 1 < h && sp.labels(i + 1, j) != v) ||
                (j > 0 && sp.labels(i, j - 1) != v) || (j + 1 < w && sp.labels(i, j + 1) != v)) {
                edge(i, j) = 1;
            }
        }
    }
    if (dilation == 0) return BoundaryMask{std::move(edge)};
    LabelGrid dilated(h, w, 1, 0);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            if (edge(i, j) == 0) continue;
            for (int y = std::max(0, i - dilation); y <= std::min(h - 1, i + dilation); ++y) {
                for (int x = std::max(0, j - dilation); x <= std::min(w - 1, j + dilation); ++x) dilated(y, x) = 1;
            }
        }
    }
    return BoundaryMask{std::move(dilated)};
}

/// Reduces an image-resolution mask to a grid downsampled by `stride`: a cell
/// is boundary iff at least `threshold` of its pixels are.
inline LabelGrid reduce_mask(const BoundaryMask& mask, int stride, double threshold = 0.25) {
    const int h = mask.mask.height();
    const int w = mask.mask.width();
    if (stride < 1 || h % stride != 0 || w % stride != 0) {
        throw std::invalid_argument("mask size is not divisible by stride " + std::to_string(stride));
    }
    LabelGrid out(h / stride, w / stride, 1, 0);
    const double cell = static_cast<double>(stride) * stride;
    for (int r = 0; r < out.height(); ++r) {
        for (int c = 0; c < out.width(); ++c) {
            int marked = 0;
            for (int i = 0; i < stride; ++i) {
                for (int j = 0; j < stride; ++j) marked += mask.mask(r * stride + i, c * stride + j) != 0;
            }
            out(r, c) = marked >= threshold * cell ? 1 : 0;
        }
    }
    return out;
}

inline BoundaryMask compute_boundary(const Image& image, const SlicParams& params) {
    const auto sp = slic(image, params.resolved_segments(image.height(), image.width()), params.compactness,
                         params.max_iters);
    return boundary_mask(sp, params.dilation);
}

/// Cache key: hash of the quantized image plus every SLIC parameter.
inline std::string boundary_cache_key(const Image& image, const SlicParams& params) {
    const auto q = quantize_image(image);
    Fnv1a hash;
    hash.update_value(q.height()).update_value(q.width()).update_value(q.depth());
    hash.update(q.data().data(), q.data().size());
    hash.update_value(params.resolved_segments(image.height(), image.width()))
        .update_value(params.compactness)
        .update_value(params.max_iters)
        .update_value(params.dilation);
    return hash.hex();
}

/// Loads the mask from `cache_dir/<key>.png` (0 keep, 255 boundary) or computes and stores it.
inline BoundaryMask cached_boundary(const std::filesystem::path& cache_dir, const Image& image,
                                    const SlicParams& params) {
    const auto path = cache_dir / (boundary_cache_key(image, params) + ".png");
    if (std::filesystem::exists(path)) {
        auto png = read_png(path, 1);
        for (auto& v : png.data()) v = v != 0 ? 1 : 0;
        return BoundaryMask{std::move(png)};
    }
    BoundaryMask mask = compute_boundary(image, params);
    ensure_directory(cache_dir);
    LabelGrid png = mask.mask;
    for (auto& v : png.data()) v = v != 0 ? 255 : 0;
    write_png(path, png);
    return mask;
}

}  // namespace scribbleseg
