#pragma once

// Photometric / geometric data augmentation for training crops.

#include "scribbleseg/config.hpp"
#include "scribbleseg/grid.hpp"
#include "scribbleseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace scribbleseg {

namespace detail {

inline double sample_bilinear(const Image& img, double y, double x, int c, double fill) {
    if (y < -0.5 || x < -0.5 || y > img.height() - 0.5 || x > img.width() - 0.5) return fill;
    y = std::clamp(y, 0.0, img.height() - 1.0);
    x = std::clamp(x, 0.0, img.width() - 1.0);
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const int x1 = std::min(x0 + 1, img.width() - 1);
    const double ty = y - y0;
    const double tx = x - x0;
    return (1 - ty) * ((1 - tx) * img(y0, x0, c) + tx * img(y0, x1, c)) +
           ty * ((1 - tx) * img(y1, x0, c) + tx * img(y1, x1, c));
}

inline Image gaussian_blur3(const Image& img, double sigma) {
    const double w1 = std::exp(-1.0 / (2.0 * sigma * sigma));
    const double norm = 1.0 + 2.0 * w1;
    const double k[3] = {w1 / norm, 1.0 / norm, w1 / norm};
    Image tmp(img.height(), img.width(), img.depth());
    Image out(img.height(), img.width(), img.depth());
    for (int i = 0; i < img.height(); ++i) {
        for (int j = 0; j < img.width(); ++j) {
            for (int c = 0; c < img.depth(); ++c) {
                double v = 0.0;
                for (int d = -1; d <= 1; ++d) v += k[d + 1] * img(i, std::clamp(j + d, 0, img.width() - 1), c);
                tmp(i, j, c) = v;
            }
        }
    }
    for (int i = 0; i < img.height(); ++i) {
        for (int j = 0; j < img.width(); ++j) {
            for (int c = 0; c < img.depth(); ++c) {
                double v = 0.0;
                for (int d = -1; d <= 1; ++d) v += k[d + 1] * tmp(std::clamp(i + d, 0, img.height() - 1), j, c);
                out(i, j, c) = v;
            }
        }
    }
    return out;
}

}  // namespace detail

/// Random scale (0.5-2), rotation (+-10 deg), blur and horizontal flip, each
/// gated by its toggle, producing a crop x crop training item. Pixels mapped
/// from outside the source are gray in the image, ignore in the scribbles and
/// non-boundary in the mask.
template <typename Item>
Item augment_item(const Item& item, const Augmentation& aug, int crop, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool flip = aug.flip && unit(rng) < 0.5;
    const double scale = aug.scale ? 0.5 + 1.5 * unit(rng) : 1.0;
    const double angle = aug.rotate ? (unit(rng) - 0.5) * 20.0 * std::numbers::pi / 180.0 : 0.0;
    const bool blur = aug.blur && unit(rng) < 0.5;
    const double sigma = 0.3 + 0.7 * unit(rng);
    const double u_off_y = unit(rng) - 0.5;
    const double u_off_x = unit(rng) - 0.5;

    const int h = item.image.height();
    const int w = item.image.width();
    const bool identity_geometry = !flip && scale == 1.0 && angle == 0.0 && crop == h && crop == w;
    if (identity_geometry) {
        Item out = item;
        if (blur) out.image = detail::gaussian_blur3(item.image, sigma);
        return out;
    }

    // output pixel p maps to source s = R^{-1} (p - c_out) / scale + c_src
    const double slack_y = std::max(0.0, (scale * h - crop) / 2.0) / scale;
    const double slack_x = std::max(0.0, (scale * w - crop) / 2.0) / scale;
    const double src_cy = (h - 1) / 2.0 + 2.0 * u_off_y * slack_y;
    const double src_cx = (w - 1) / 2.0 + 2.0 * u_off_x * slack_x;
    const double out_c = (crop - 1) / 2.0;
    const double cos_a = std::cos(angle);
    const double sin_a = std::sin(angle);

    Item out{Image(crop, crop, item.image.depth()), LabelGrid(crop, crop, 1, kIgnoreLabel), LabelGrid(crop, crop, 1, 0)};
    for (int i = 0; i < crop; ++i) {
        for (int j = 0; j < crop; ++j) {
            const double oy = (i - out_c) / scale;
            const double ox = ((flip ? crop - 1 - j : j) - out_c) / scale;
            const double sy = cos_a * oy - sin_a * ox + src_cy;
            const double sx = sin_a * oy + cos_a * ox + src_cx;
            for (int c = 0; c < item.image.depth(); ++c) out.image(i, j, c) = detail::sample_bilinear(item.image, sy, sx, c, 0.5);
            const int ny = static_cast<int>(std::lround(sy));
            const int nx = static_cast<int>(std::lround(sx));
            if (ny >= 0 && ny < h && nx >= 0 && nx < w) {
                out.scribbles(i, j) = item.scribbles(ny, nx);
                out.boundary(i, j) = item.boundary(ny, nx);
            }
        }
    }
    if (blur) out.image = detail::gaussian_blur3(out.image, sigma);
    return out;
}

}  // namespace scribbleseg
