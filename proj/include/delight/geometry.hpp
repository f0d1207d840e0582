#pragma once

#include <cmath>

#include "delight/image.hpp"

namespace delight::imaging {

struct CropWindow {
    int y0 = 0, x0 = 0, height = 0, width = 0;
};

// Bilinear resize with half-pixel-centered sampling (matches the usual
// imaging convention; resize to the same size is the identity).
inline RasterImage resize(const RasterImage& img, int new_h, int new_w) {
    require(new_h >= 1 && new_w >= 1, "resize: target size must be >= 1");
    const int h = img.height(), w = img.width();
    RasterImage out(new_h, new_w, img.channels(), img.range());
    const double sy = static_cast<double>(h) / new_h;
    const double sx = static_cast<double>(w) / new_w;
    for (int c = 0; c < img.channels(); ++c) {
        const float* p = img.plane(c);
        float* q = out.plane(c);
        for (int y = 0; y < new_h; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            fy = clamp(fy, 0.0, static_cast<double>(h - 1));
            const int y0 = static_cast<int>(fy);
            const int y1 = y0 + 1 < h ? y0 + 1 : y0;
            const double wy = fy - y0;
            for (int x = 0; x < new_w; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                fx = clamp(fx, 0.0, static_cast<double>(w - 1));
                const int x0 = static_cast<int>(fx);
                const int x1 = x0 + 1 < w ? x0 + 1 : x0;
                const double wx = fx - x0;
                const double top = (1.0 - wx) * p[static_cast<std::size_t>(y0) * w + x0] +
                                   wx * p[static_cast<std::size_t>(y0) * w + x1];
                const double bot = (1.0 - wx) * p[static_cast<std::size_t>(y1) * w + x0] +
                                   wx * p[static_cast<std::size_t>(y1) * w + x1];
                q[static_cast<std::size_t>(y) * new_w + x] = static_cast<float>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

inline RasterImage flip_horizontal(const RasterImage& img) {
    RasterImage out(img.height(), img.width(), img.channels(), img.range());
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                out.at(c, y, x) = img.at(c, y, img.width() - 1 - x);
    return out;
}

inline RasterImage crop(const RasterImage& img, const CropWindow& win) {
    require(win.height >= 1 && win.width >= 1, "crop: empty window");
    require(win.y0 >= 0 && win.x0 >= 0 && win.y0 + win.height <= img.height() &&
                win.x0 + win.width <= img.width(),
            "crop: window exceeds image bounds");
    RasterImage out(win.height, win.width, img.channels(), img.range());
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < win.height; ++y)
            for (int x = 0; x < win.width; ++x)
                out.at(c, y, x) = img.at(c, win.y0 + y, win.x0 + x);
    return out;
}

inline MaskImage resize(const MaskImage& m, int new_h, int new_w) {
    return MaskImage::from_image(resize(m.as_image(), new_h, new_w));
}

inline MaskImage flip_horizontal(const MaskImage& m) {
    return MaskImage::from_image(flip_horizontal(m.as_image()));
}

inline MaskImage crop(const MaskImage& m, const CropWindow& win) {
    return MaskImage::from_image(crop(m.as_image(), win));
}

}  // namespace delight::imaging
