#pragma once

// Synthetic scribble-annotated scenes and the scribble-drop / scribble-shrink
// corruptions. Every generator is a pure function of its inputs and seed.

#include "scribbleseg/grid.hpp"
#include "scribbleseg/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace scribbleseg {

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Pixel {
    int row = 0;
    int col = 0;
    friend bool operator==(const Pixel&, const Pixel&) = default;
    friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

/// One rasterized polyline, pixels in drawing order.
struct Stroke {
    int class_id = 0;
    int object_id = 0;
    std::vector<Pixel> pixels;
    friend bool operator==(const Stroke&, const Stroke&) = default;
};

struct ScribbleMap {
    LabelGrid labels;  // kIgnoreLabel where unlabeled
    std::vector<Stroke> strokes;

    std::size_t labeled_pixels() const {
        return static_cast<std::size_t>(
            std::count_if(labels.data().begin(), labels.data().end(), [](std::uint8_t v) { return v != kIgnoreLabel; }));
    }
    friend bool operator==(const ScribbleMap&, const ScribbleMap&) = default;
};

/// Appearance knobs of the synthetic scenes.
struct SceneStyle {
    double noise_sigma = 0.02;
    double color_jitter = 0.12;   // per-channel spread of an object's color around its class palette entry
    double texture_amplitude = 0.10;
    double object_texture = 0.0;  // amplitude of a per-object stripe pattern
    double rim_fade = 0.0;        // blend toward the background tone at object rims (0 = flat objects)
    int min_visible_area = 32;
    int max_retries = 64;
};

struct SceneSpec {
    std::uint64_t seed = 0;
    int n_objects = 1;
    int classes = 2;  // background + object classes
    int height = 64;
    int width = 64;
    SceneStyle style{};

    void validate() const {
        if (n_objects < 1) throw std::invalid_argument("scene needs at least one object");
        if (classes < 2 || classes > 254) throw std::invalid_argument("class count must lie in [2, 254]");
        if (height < 8 || width < 8) throw std::invalid_argument("scene must be at least 8x8");
    }
};

struct Scene {
    Image image;
    LabelGrid labels;
};

/// splitmix64 finalizer used to derive independent seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace detail {

/// Class palette; class 0 is the background tone.
inline std::array<double, 3> palette_color(int class_id) {
    static constexpr std::array<std::array<double, 3>, 9> kPalette{{
        {0.45, 0.45, 0.40},
        {0.85, 0.20, 0.20},
        {0.20, 0.70, 0.25},
        {0.20, 0.30, 0.85},
        {0.90, 0.80, 0.20},
        {0.70, 0.25, 0.80},
        {0.15, 0.80, 0.80},
        {0.95, 0.55, 0.15},
        {0.55, 0.35, 0.20},
    }};
    if (class_id < static_cast<int>(kPalette.size())) return kPalette[static_cast<std::size_t>(class_id)];
    // deterministic fallback for large class counts
    const double t = class_id * 0.618033988749895;
    return {0.5 + 0.4 * std::sin(6.28318 * t), 0.5 + 0.4 * std::sin(6.28318 * (t + 0.33)),
            0.5 + 0.4 * std::sin(6.28318 * (t + 0.66))};
}

enum class ShapeKind { ellipse, rectangle, triangle };

struct Shape {
    ShapeKind kind = ShapeKind::ellipse;
    double cy = 0, cx = 0;  // center
    double ry = 0, rx = 0;  // half extents
    double angle = 0;
    std::array<std::array<double, 2>, 3> tri{};  // triangle vertices (y, x)

    bool contains(double y, double x) const {
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double ly = (y - cy) * c - (x - cx) * s;
        const double lx = (y - cy) * s + (x - cx) * c;
        switch (kind) {
            case ShapeKind::ellipse:
                return (ly * ly) / (ry * ry) + (lx * lx) / (rx * rx) <= 1.0;
            case ShapeKind::rectangle:
                return std::abs(ly) <= ry && std::abs(lx) <= rx;
            case ShapeKind::triangle: {
                auto side = [&](const std::array<double, 2>& a, const std::array<double, 2>& b) {
                    return (b[1] - a[1]) * (y - a[0]) - (b[0] - a[0]) * (x - a[1]);
                };
                const double d1 = side(tri[0], tri[1]);
                const double d2 = side(tri[1], tri[2]);
                const double d3 = side(tri[2], tri[0]);
                const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
                const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
                return !(neg && pos);
            }
        }
        return false;
    }

    /// 0 at the center, 1 on the outline (>1 outside).
    double radius(double y, double x) const {
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double ly = (y - cy) * c - (x - cx) * s;
        const double lx = (y - cy) * s + (x - cx) * c;
        switch (kind) {
            case ShapeKind::ellipse:
                return std::sqrt((ly * ly) / (ry * ry) + (lx * lx) / (rx * rx));
            case ShapeKind::rectangle:
                return std::max(std::abs(ly) / ry, std::abs(lx) / rx);
            case ShapeKind::triangle: {
                // barycentric coordinates; the smallest is 1/3 at the centroid and 0 on an edge
                const double det = (tri[1][0] - tri[2][0]) * (tri[0][1] - tri[2][1]) +
                                   (tri[2][1] - tri[1][1]) * (tri[0][0] - tri[2][0]);
                if (det == 0.0) return 1.0;
                const double b0 = ((tri[1][0] - tri[2][0]) * (x - tri[2][1]) + (tri[2][1] - tri[1][1]) * (y - tri[2][0])) / det;
                const double b1 = ((tri[2][0] - tri[0][0]) * (x - tri[2][1]) + (tri[0][1] - tri[2][1]) * (y - tri[2][0])) / det;
                const double b2 = 1.0 - b0 - b1;
                return 1.0 - 3.0 * std::min({b0, b1, b2});
            }
        }
        return 1.0;
    }
};

inline Shape random_shape(std::mt19937_64& rng, int height, int width) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double scale = std::min(height, width);
    Shape s;
    s.kind = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, 2)(rng));
    s.ry = scale * (0.08 + 0.14 * unit(rng));
    s.rx = scale * (0.08 + 0.14 * unit(rng));
    s.cy = s.ry * 0.5 + unit(rng) * (height - s.ry);
    s.cx = s.rx * 0.5 + unit(rng) * (width - s.rx);
    s.angle = (unit(rng) - 0.5) * std::numbers::pi / 2.0;
    if (s.kind == ShapeKind::triangle) {
        const double r = std::max(s.ry, s.rx) * 1.3;
        const double base = unit(rng) * 2.0 * std::numbers::pi;
        for (int v = 0; v < 3; ++v) {
            const double a = base + v * 2.0 * std::numbers::pi / 3.0 + (unit(rng) - 0.5) * 0.6;
            s.tri[static_cast<std::size_t>(v)] = {s.cy + r * std::sin(a), s.cx + r * std::cos(a)};
        }
        s.angle = 0.0;
    }
    return s;
}

}  // namespace detail

/// Places `n_objects` flat-colored ellipses, rectangles and triangles on a
/// textured background. Class 0 is background; later shapes occlude earlier
/// ones and every object keeps at least `min_visible_area` visible pixels.
inline Scene generate_scene(const SceneSpec& spec) {
    spec.validate();
    const int h = spec.height;
    const int w = spec.width;
    const auto& style = spec.style;

    for (int attempt = 0; attempt < style.max_retries; ++attempt) {
        std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(attempt)));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> noise(0.0, style.noise_sigma);

        Scene scene{Image(h, w, 3), LabelGrid(h, w, 1, 0)};
        Grid<int> owner(h, w, 1, -1);

        // background: palette tone shifted per scene, plus two low-frequency waves
        const auto bg = detail::palette_color(0);
        std::array<double, 3> base{};
        for (int c = 0; c < 3; ++c) base[static_cast<std::size_t>(c)] = bg[static_cast<std::size_t>(c)] + (unit(rng) - 0.5) * 0.2;
        const double fy = 0.05 + 0.25 * unit(rng);
        const double fx = 0.05 + 0.25 * unit(rng);
        const double ph1 = unit(rng) * 6.28318;
        const double ph2 = unit(rng) * 6.28318;
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const double wave = 0.5 * std::sin(fy * i + ph1) + 0.5 * std::sin(fx * j + ph2);
                for (int c = 0; c < 3; ++c) {
                    scene.image(i, j, c) = base[static_cast<std::size_t>(c)] + style.texture_amplitude * wave * (c == 1 ? -1.0 : 1.0);
                }
            }
        }

        std::vector<std::array<double, 3>> colors;
        std::vector<int> classes;
        std::vector<detail::Shape> shapes;
        std::vector<std::array<double, 3>> stripes;  // frequency, orientation, phase
        for (int o = 0; o < spec.n_objects; ++o) {
            const int cls = std::uniform_int_distribution<int>(1, spec.classes - 1)(rng);
            const detail::Shape shape = detail::random_shape(rng, h, w);
            auto color = detail::palette_color(cls);
            for (auto& v : color) v = std::clamp(v + (unit(rng) - 0.5) * 2.0 * style.color_jitter, 0.0, 1.0);
            // keep colors within a scene distinct
            for (const auto& other : colors) {
                double d = 0.0;
                for (int c = 0; c < 3; ++c) d += std::abs(other[static_cast<std::size_t>(c)] - color[static_cast<std::size_t>(c)]);
                if (d < 0.03) color[0] = std::clamp(color[0] + 0.05, 0.0, 1.0);
            }
            colors.push_back(color);
            classes.push_back(cls);
            shapes.push_back(shape);
            stripes.push_back({0.6 + 0.8 * unit(rng), unit(rng) * std::numbers::pi, unit(rng) * 6.28318});
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < w; ++j) {
                    if (shape.contains(i + 0.5, j + 0.5)) owner(i, j) = o;
                }
            }
        }

        std::vector<int> visible(static_cast<std::size_t>(spec.n_objects), 0);
        for (int v : owner.data()) {
            if (v >= 0) ++visible[static_cast<std::size_t>(v)];
        }
        if (std::any_of(visible.begin(), visible.end(), [&](int a) { return a < style.min_visible_area; })) continue;

        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const int o = owner(i, j);
                if (o >= 0) {
                    const auto oi = static_cast<std::size_t>(o);
                    scene.labels(i, j) = static_cast<std::uint8_t>(classes[oi]);
                    const double r = std::min(1.0, shapes[oi].radius(i + 0.5, j + 0.5));
                    const double fade = style.rim_fade * r * r;
                    const auto& st = stripes[oi];
                    const double stripe =
                        style.object_texture * std::sin(st[0] * (i * std::cos(st[1]) + j * std::sin(st[1])) + st[2]);
                    for (int c = 0; c < 3; ++c) {
                        const auto ci = static_cast<std::size_t>(c);
                        scene.image(i, j, c) = (1.0 - fade) * colors[oi][ci] + fade * scene.image(i, j, c) + stripe;
                    }
                }
                for (int c = 0; c < 3; ++c) scene.image(i, j, c) = std::clamp(scene.image(i, j, c) + noise(rng), 0.0, 1.0);
            }
        }
        return scene;
    }
    throw GenerationError("could not place " + std::to_string(spec.n_objects) + " objects with visible area >= " +
                          std::to_string(style.min_visible_area) + " after " + std::to_string(style.max_retries) +
                          " attempts (seed " + std::to_string(spec.seed) + ")");
}

namespace detail {

/// Objects of a label map: background (id 0, all class-0 pixels) and each
/// 4-connected component of every other class (ids 1.. in scan order).
struct Region {
    int class_id = 0;
    int object_id = 0;
    std::vector<Pixel> pixels;
};

inline std::vector<Region> label_regions(const LabelGrid& labels) {
    const int h = labels.height();
    const int w = labels.width();
    std::vector<Region> regions;
    Region background{0, 0, {}};
    Grid<int> seen(h, w, 1, 0);
    int next_id = 1;
    std::vector<Pixel> stack;
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const std::uint8_t v = labels(i, j);
            if (v == 0) background.pixels.push_back({i, j});
            if (v == 0 || v == kIgnoreLabel || seen(i, j)) continue;
            Region r{v, next_id++, {}};
            seen(i, j) = 1;
            stack.assign(1, {i, j});
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                r.pixels.push_back(p);
                constexpr std::array<std::array<int, 2>, 4> kNeighbors{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
                for (const auto& d : kNeighbors) {
                    const int y = p.row + d[0];
                    const int x = p.col + d[1];
                    if (y < 0 || y >= h || x < 0 || x >= w || seen(y, x) || labels(y, x) != v) continue;
                    seen(y, x) = 1;
                    stack.push_back({y, x});
                }
            }
            std::sort(r.pixels.begin(), r.pixels.end());
            regions.push_back(std::move(r));
        }
    }
    if (!background.pixels.empty()) regions.insert(regions.begin(), std::move(background));
    return regions;
}

inline std::vector<Pixel> erode(const std::vector<Pixel>& region, int h, int w, int radius) {
    Grid<std::uint8_t> in(h, w, 1, 0);
    for (const auto& p : region) in(p.row, p.col) = 1;
    std::vector<Pixel> out;
    for (const auto& p : region) {
        bool inside = true;
        for (int dy = -radius; dy <= radius && inside; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
                const int y = p.row + dy;
                const int x = p.col + dx;
                if (y < 0 || y >= h || x < 0 || x >= w || !in(y, x)) {
                    inside = false;
                    break;
                }
            }
        }
        if (inside) out.push_back(p);
    }
    return out;
}

/// Bresenham line from a to b, endpoints included.
inline std::vector<Pixel> raster_line(Pixel a, Pixel b) {
    std::vector<Pixel> out;
    int x0 = a.col, y0 = a.row;
    const int dx = std::abs(b.col - x0);
    const int dy = -std::abs(b.row - y0);
    const int sx = x0 < b.col ? 1 : -1;
    const int sy = y0 < b.row ? 1 : -1;
    int err = dx + dy;
    while (true) {
        out.push_back({y0, x0});
        if (x0 == b.col && y0 == b.row) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
    return out;
}

inline void rebuild_labels(ScribbleMap& s) {
    std::fill(s.labels.data().begin(), s.labels.data().end(), kIgnoreLabel);
    for (const auto& stroke : s.strokes) {
        for (const auto& p : stroke.pixels) s.labels(p.row, p.col) = static_cast<std::uint8_t>(stroke.class_id);
    }
}

}  // namespace detail

/// Draws one polyline scribble inside every object region (and the background).
/// Regions are eroded by 2 pixels when possible; 3-5 anchors are joined by
/// straight segments clipped to the region.
inline ScribbleMap scribble_from_mask(const LabelGrid& labels, std::uint64_t seed, int min_object_area = 32) {
    const int h = labels.height();
    const int w = labels.width();
    ScribbleMap out{LabelGrid(h, w, 1, kIgnoreLabel), {}};
    const auto regions = detail::label_regions(labels);
    for (const auto& region : regions) {
        if (region.object_id != 0 && static_cast<int>(region.pixels.size()) < min_object_area) continue;
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(region.object_id)));
        auto core = detail::erode(region.pixels, h, w, 2);
        if (core.empty()) core = region.pixels;
        Grid<std::uint8_t> member(h, w, 1, 0);
        for (const auto& p : region.pixels) member(p.row, p.col) = 1;

        const int anchors = std::uniform_int_distribution<int>(3, 5)(rng);
        const double reach = std::max(3.0, 0.35 * std::sqrt(static_cast<double>(region.pixels.size())));
        std::vector<Pixel> points;
        points.push_back(core[std::uniform_int_distribution<std::size_t>(0, core.size() - 1)(rng)]);
        for (int a = 1; a < anchors; ++a) {
            const Pixel prev = points.back();
            std::vector<Pixel> near;
            for (const auto& p : core) {
                const double d = std::hypot(p.row - prev.row, p.col - prev.col);
                if (d <= reach && !(p == prev)) near.push_back(p);
            }
            if (near.empty()) break;
            points.push_back(near[std::uniform_int_distribution<std::size_t>(0, near.size() - 1)(rng)]);
        }

        Stroke stroke{region.class_id, region.object_id, {}};
        std::set<Pixel> used;
        auto append = [&](const Pixel& p) {
            if (member(p.row, p.col) && used.insert(p).second) stroke.pixels.push_back(p);
        };
        append(points.front());
        for (std::size_t a = 1; a < points.size(); ++a) {
            for (const auto& p : detail::raster_line(points[a - 1], points[a])) append(p);
        }
        out.strokes.push_back(std::move(stroke));
    }
    detail::rebuild_labels(out);
    return out;
}

/// Treats each 4-connected same-class component of a bare scribble map as one
/// stroke (pixels in scan order). Used for external corpora without stroke files.
inline ScribbleMap strokes_from_components(const LabelGrid& scribbles) {
    ScribbleMap out{scribbles, {}};
    const int h = scribbles.height();
    const int w = scribbles.width();
    Grid<int> seen(h, w, 1, 0);
    int next_id = 0;
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const std::uint8_t v = scribbles(i, j);
            if (v == kIgnoreLabel || seen(i, j)) continue;
            Stroke s{v, next_id++, {}};
            std::vector<Pixel> stack{{i, j}};
            seen(i, j) = 1;
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                s.pixels.push_back(p);
                constexpr std::array<std::array<int, 2>, 4> kNeighbors{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
                for (const auto& d : kNeighbors) {
                    const int y = p.row + d[0];
                    const int x = p.col + d[1];
                    if (y < 0 || y >= h || x < 0 || x >= w || seen(y, x) || scribbles(y, x) != v) continue;
                    seen(y, x) = 1;
                    stack.push_back({y, x});
                }
            }
            std::sort(s.pixels.begin(), s.pixels.end());
            out.strokes.push_back(std::move(s));
        }
    }
    return out;
}

/// Deletes all strokes of each object independently with probability `rate`.
inline ScribbleMap drop_scribbles(const ScribbleMap& s, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("drop rate must lie in [0, 1]");
    ScribbleMap out{s.labels, {}};
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const auto& stroke : s.strokes) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(stroke.object_id)));
        if (unit(rng) < rate) continue;
        out.strokes.push_back(stroke);
    }
    detail::rebuild_labels(out);
    return out;
}

enum class ShrinkMode {
    uniform,  // per-stroke fraction drawn from U[0, rate]
    exact,    // every stroke loses exactly `rate`
};

/// Keeps the central (1 - r) part of every stroke; a stroke whose retained
/// length rounds to one pixel or less collapses to its middle pixel.
inline ScribbleMap shrink_scribbles(const ScribbleMap& s, double rate, std::uint64_t seed,
                                    ShrinkMode mode = ShrinkMode::uniform) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("shrink rate must lie in [0, 1]");
    ScribbleMap out{s.labels, {}};
    for (std::size_t k = 0; k < s.strokes.size(); ++k) {
        const Stroke& stroke = s.strokes[k];
        double r = rate;
        if (mode == ShrinkMode::uniform) {
            std::mt19937_64 rng(mix_seed(mix_seed(seed, k), static_cast<std::uint64_t>(stroke.object_id)));
            r = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * rate;
        }
        const auto len = static_cast<long>(stroke.pixels.size());
        if (len == 0) continue;
        const long keep = std::lround((1.0 - r) * static_cast<double>(len));
        Stroke kept{stroke.class_id, stroke.object_id, {}};
        if (keep <= 1) {
            kept.pixels.push_back(stroke.pixels[static_cast<std::size_t>((len - 1) / 2)]);
        } else {
            const long start = (len - keep) / 2;
            kept.pixels.assign(stroke.pixels.begin() + start, stroke.pixels.begin() + start + keep);
        }
        out.strokes.push_back(std::move(kept));
    }
    detail::rebuild_labels(out);
    return out;
}

/// Violations of the scribble invariants against the ground truth (empty if valid).
inline std::vector<std::string> audit_scribbles(const LabelGrid& truth, const ScribbleMap& s) {
    std::vector<std::string> problems;
    if (!truth.same_shape(s.labels)) {
        problems.emplace_back("scribble map shape differs from label map");
        return problems;
    }
    LabelGrid from_strokes(truth.height(), truth.width(), 1, kIgnoreLabel);
    for (const auto& stroke : s.strokes) {
        for (const auto& p : stroke.pixels) {
            if (p.row < 0 || p.row >= truth.height() || p.col < 0 || p.col >= truth.width()) {
                problems.push_back("stroke of object " + std::to_string(stroke.object_id) + " leaves the image");
                continue;
            }
            if (truth(p.row, p.col) != stroke.class_id) {
                problems.push_back("stroke of object " + std::to_string(stroke.object_id) + " leaves its object at (" +
                                   std::to_string(p.row) + "," + std::to_string(p.col) + ")");
            }
            from_strokes(p.row, p.col) = static_cast<std::uint8_t>(stroke.class_id);
        }
    }
    if (!(from_strokes == s.labels)) problems.emplace_back("labeled pixels differ from the union of strokes");
    return problems;
}

}  // namespace scribbleseg
