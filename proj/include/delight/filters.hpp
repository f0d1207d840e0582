#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "delight/image.hpp"

namespace delight::imaging {

namespace detail {

// Count-normalized box mean over the in-image part of a (2r+1)^2 window,
// O(HW) via a summed-area table in double.
inline void box_mean(const float* src, int h, int w, int radius, float* dst) {
    std::vector<double> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
    const auto S = [&](int y, int x) -> double& { return sat[static_cast<std::size_t>(y) * (w + 1) + x]; };
    for (int y = 0; y < h; ++y) {
        double row = 0.0;
        for (int x = 0; x < w; ++x) {
            row += src[static_cast<std::size_t>(y) * w + x];
            S(y + 1, x + 1) = S(y, x + 1) + row;
        }
    }
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
            const double sum = S(y1 + 1, x1 + 1) - S(y0, x1 + 1) - S(y1 + 1, x0) + S(y0, x0);
            const int count = (y1 - y0 + 1) * (x1 - x0 + 1);
            dst[static_cast<std::size_t>(y) * w + x] = static_cast<float>(sum / count);
        }
    }
}

inline int clamp_index(int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); }

}  // namespace detail

// Per-pixel |dx| + |dy| with forward differences, summed over channels.
// The last row/column uses a zero gradient beyond the border.
inline RasterImage grad_sum(const RasterImage& img) {
    const int h = img.height(), w = img.width();
    RasterImage out(h, w, 1, Range::unit);
    std::vector<float> acc(static_cast<std::size_t>(h) * w, 0.0f);
    for (int c = 0; c < img.channels(); ++c) {
        const float* p = img.plane(c);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float v = p[static_cast<std::size_t>(y) * w + x];
                const float gx = (x + 1 < w) ? p[static_cast<std::size_t>(y) * w + x + 1] - v : 0.0f;
                const float gy = (y + 1 < h) ? p[static_cast<std::size_t>(y + 1) * w + x] - v : 0.0f;
                acc[static_cast<std::size_t>(y) * w + x] += std::abs(gx) + std::abs(gy);
            }
    }
    // Gradient magnitudes can exceed the unit range; keep raw values.
    out.data() = std::move(acc);
    return out;
}

// He et al. guided filter. `edge_ref` supplies the edges that survive; a
// 1-channel reference guides all channels of a 3-channel input.
inline RasterImage guided_filter(const RasterImage& guide_input, const RasterImage& edge_ref,
                                 int radius, double regularizer = 1e-4) {
    require(guide_input.same_size(edge_ref), "guided_filter: size mismatch");
    require(radius >= 1, "guided_filter: radius must be >= 1");
    require(regularizer > 0.0, "guided_filter: regularizer must be positive");
    require(edge_ref.channels() == guide_input.channels() || edge_ref.channels() == 1,
            "guided_filter: incompatible channel counts");

    const int h = guide_input.height(), w = guide_input.width();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    RasterImage out(h, w, guide_input.channels(), guide_input.range());

    std::vector<float> mean_i(plane), mean_p(plane), mean_ip(plane), mean_ii(plane);
    std::vector<float> a(plane), b(plane), mean_a(plane), mean_b(plane), tmp(plane);

    for (int c = 0; c < guide_input.channels(); ++c) {
        const float* p = guide_input.plane(c);
        const float* g = edge_ref.plane(edge_ref.channels() == 1 ? 0 : c);

        detail::box_mean(g, h, w, radius, mean_i.data());
        detail::box_mean(p, h, w, radius, mean_p.data());
        for (std::size_t k = 0; k < plane; ++k) tmp[k] = g[k] * p[k];
        detail::box_mean(tmp.data(), h, w, radius, mean_ip.data());
        for (std::size_t k = 0; k < plane; ++k) tmp[k] = g[k] * g[k];
        detail::box_mean(tmp.data(), h, w, radius, mean_ii.data());

        for (std::size_t k = 0; k < plane; ++k) {
            const double var_i = static_cast<double>(mean_ii[k]) - static_cast<double>(mean_i[k]) * mean_i[k];
            const double cov_ip = static_cast<double>(mean_ip[k]) - static_cast<double>(mean_i[k]) * mean_p[k];
            const double ak = cov_ip / (var_i + regularizer);
            a[k] = static_cast<float>(ak);
            b[k] = static_cast<float>(mean_p[k] - ak * mean_i[k]);
        }
        detail::box_mean(a.data(), h, w, radius, mean_a.data());
        detail::box_mean(b.data(), h, w, radius, mean_b.data());

        float* q = out.plane(c);
        for (std::size_t k = 0; k < plane; ++k) q[k] = mean_a[k] * g[k] + mean_b[k];
    }
    out.clamp_to_range();
    return out;
}

// Per-channel k x k spatial median with edge-replicated padding.
inline RasterImage median_filter(const RasterImage& img, int k) {
    require(k >= 1 && (k % 2) == 1, "median_filter: k must be odd and >= 1");
    if (k == 1) return img;
    const int h = img.height(), w = img.width(), r = k / 2;
    RasterImage out(h, w, img.channels(), img.range());
    std::vector<float> window;
    window.reserve(static_cast<std::size_t>(k) * k);
    for (int c = 0; c < img.channels(); ++c) {
        const float* p = img.plane(c);
        float* q = out.plane(c);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                window.clear();
                for (int dy = -r; dy <= r; ++dy) {
                    const int yy = detail::clamp_index(y + dy, h);
                    for (int dx = -r; dx <= r; ++dx) {
                        const int xx = detail::clamp_index(x + dx, w);
                        window.push_back(p[static_cast<std::size_t>(yy) * w + xx]);
                    }
                }
                auto mid = window.begin() + window.size() / 2;
                std::nth_element(window.begin(), mid, window.end());
                q[static_cast<std::size_t>(y) * w + x] = *mid;
            }
    }
    return out;
}

inline std::vector<double> gaussian_kernel(double sigma) {
    require(sigma > 0.0, "gaussian_blur: sigma must be positive");
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + r)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable Gaussian, kernel truncated at 3*sigma, edge-replicated padding.
inline RasterImage gaussian_blur(const RasterImage& img, double sigma) {
    const auto kernel = gaussian_kernel(sigma);
    const int r = static_cast<int>(kernel.size() / 2);
    const int h = img.height(), w = img.width();
    RasterImage out(h, w, img.channels(), img.range());
    std::vector<double> row(static_cast<std::size_t>(h) * w);
    for (int c = 0; c < img.channels(); ++c) {
        const float* p = img.plane(c);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i)
                    acc += kernel[static_cast<std::size_t>(i + r)] *
                           p[static_cast<std::size_t>(y) * w + detail::clamp_index(x + i, w)];
                row[static_cast<std::size_t>(y) * w + x] = acc;
            }
        float* q = out.plane(c);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i)
                    acc += kernel[static_cast<std::size_t>(i + r)] *
                           row[static_cast<std::size_t>(detail::clamp_index(y + i, h)) * w + x];
                q[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
            }
    }
    return out;
}

struct InpaintOptions {
    int max_iterations = 500;
    double residual_tol = 1e-5;
};

// Harmonic (Laplace) diffusion fill of the hole region. Pixels outside the
// hole are left bit-identical; hole pixels converge to the discrete harmonic
// interpolant of the boundary values.
inline RasterImage inpaint_diffusion(const RasterImage& img, const MaskImage& hole,
                                     const InpaintOptions& opt = {}) {
    require(img.height() == hole.height() && img.width() == hole.width(),
            "inpaint_diffusion: size mismatch");
    require(hole.is_binary(), "inpaint_diffusion: hole mask must be binary");

    const int h = img.height(), w = img.width();
    std::vector<std::pair<int, int>> holes;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (hole.at(y, x) != 0.0f) holes.emplace_back(y, x);
    if (holes.empty()) return img;
    require(holes.size() < static_cast<std::size_t>(h) * w,
            "inpaint_diffusion: hole covers the entire image");

    RasterImage out = img;
    for (int c = 0; c < img.channels(); ++c) {
        // Seed hole pixels with the mean of the non-hole boundary for faster convergence.
        double boundary_sum = 0.0;
        std::size_t boundary_n = 0;
        for (const auto& [y, x] : holes) {
            const int ns[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
            for (const auto& n : ns) {
                if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
                if (hole.at(n[0], n[1]) != 0.0f) continue;
                boundary_sum += out.at(c, n[0], n[1]);
                ++boundary_n;
            }
        }
        const float seed = boundary_n ? static_cast<float>(boundary_sum / boundary_n) : 0.5f;
        for (const auto& [y, x] : holes) out.at(c, y, x) = seed;

        std::vector<float> next(holes.size());
        for (int it = 0; it < opt.max_iterations; ++it) {
            double residual = 0.0;
            for (std::size_t i = 0; i < holes.size(); ++i) {
                const auto [y, x] = holes[i];
                double acc = 0.0;
                int n = 0;
                const int ns[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
                for (const auto& nb : ns) {
                    if (nb[0] < 0 || nb[0] >= h || nb[1] < 0 || nb[1] >= w) continue;
                    acc += out.at(c, nb[0], nb[1]);
                    ++n;
                }
                next[i] = n ? static_cast<float>(acc / n) : out.at(c, y, x);
                residual = std::max(residual, static_cast<double>(std::abs(next[i] - out.at(c, y, x))));
            }
            for (std::size_t i = 0; i < holes.size(); ++i) out.at(c, holes[i].first, holes[i].second) = next[i];
            if (residual < opt.residual_tol) break;
        }
    }
    return out;
}

}  // namespace delight::imaging
