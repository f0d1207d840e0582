#pragma once

#include <array>
#include <cmath>

#include "delight/image.hpp"

namespace delight::imaging {

// sRGB <-> CIE Lab under D65, double precision internally.

inline double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double c) {
    if (c <= 0.0) return 0.0;
    return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

namespace detail {
constexpr double kD65[3] = {0.95047, 1.0, 1.08883};
constexpr double kRgbToXyz[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                                    {0.2126729, 0.7151522, 0.0721750},
                                    {0.0193339, 0.1191920, 0.9503041}};
constexpr double kXyzToRgb[3][3] = {{3.2404542, -1.5371385, -0.4985314},
                                    {-0.9692660, 1.8760108, 0.0415560},
                                    {0.0556434, -0.2040259, 1.0572252}};
constexpr double kLabEps = 216.0 / 24389.0;
constexpr double kLabKappa = 24389.0 / 27.0;

inline double lab_f(double t) {
    return t > kLabEps ? std::cbrt(t) : (kLabKappa * t + 16.0) / 116.0;
}

inline double lab_f_inv(double f) {
    const double f3 = f * f * f;
    return f3 > kLabEps ? f3 : (116.0 * f - 16.0) / kLabKappa;
}
}  // namespace detail

struct Lab {
    double l, a, b;  // l in [0,100]
};

inline Lab rgb_to_lab(double r, double g, double b) {
    using namespace detail;
    const double lin[3] = {srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b)};
    double xyz[3];
    for (int i = 0; i < 3; ++i)
        xyz[i] = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
    const double fx = lab_f(xyz[0] / kD65[0]);
    const double fy = lab_f(xyz[1] / kD65[1]);
    const double fz = lab_f(xyz[2] / kD65[2]);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline std::array<double, 3> lab_to_rgb(const Lab& lab) {
    using namespace detail;
    const double fy = (lab.l + 16.0) / 116.0;
    const double fx = fy + lab.a / 500.0;
    const double fz = fy - lab.b / 200.0;
    const double xyz[3] = {lab_f_inv(fx) * kD65[0], lab_f_inv(fy) * kD65[1], lab_f_inv(fz) * kD65[2]};
    std::array<double, 3> rgb{};
    for (int i = 0; i < 3; ++i) {
        const double lin =
            kXyzToRgb[i][0] * xyz[0] + kXyzToRgb[i][1] * xyz[1] + kXyzToRgb[i][2] * xyz[2];
        rgb[i] = linear_to_srgb(lin);
    }
    return rgb;
}

// Lab lightness of a 3-channel unit image, rescaled to [0,1] (L/100).
inline RasterImage luminance_lab(const RasterImage& img) {
    require(img.channels() == 3, "luminance_lab: expected a 3-channel image");
    require(img.range() == Range::unit, "luminance_lab: expected unit-range input");
    RasterImage out(img.height(), img.width(), 1, Range::unit);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const Lab lab = rgb_to_lab(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x));
            out.at(0, y, x) = static_cast<float>(clamp(lab.l / 100.0, 0.0, 1.0));
        }
    return out;
}

// Rec.709 luma of an sRGB-encoded triple. The metric suite and tint
// normalization use this cheap weighting rather than a full Lab round trip.
inline double rec709_luma(double r, double g, double b) {
    return 0.2126 * r + 0.7152 * g + 0.0722 * b;
}

inline RasterImage luma709(const RasterImage& img) {
    require(img.channels() == 3 || img.channels() == 1, "luma709: bad channel count");
    if (img.channels() == 1) return img;
    RasterImage out(img.height(), img.width(), 1, img.range());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            out.at(0, y, x) =
                static_cast<float>(rec709_luma(img.at(0, y, x), img.at(1, y, x), img.at(2, y, x)));
    return out;
}

// RGB gains of a blackbody radiator at the given temperature, normalized so
// the Rec.709 luma gain is exactly 1 (tinting shifts chroma, not exposure).
// Planckian locus xy via the Kim et al. cubic spline approximation.
inline std::array<double, 3> blackbody_gains(double kelvin) {
    using namespace detail;
    const double T = clamp(kelvin, 1667.0, 25000.0);
    const double iT = 1e3 / T, iT2 = iT * iT, iT3 = iT2 * iT;
    double x;
    if (T < 4000.0)
        x = -0.2661239 * iT3 - 0.2343589 * iT2 + 0.8776956 * iT + 0.179910;
    else
        x = -3.0258469 * iT3 + 2.1070379 * iT2 + 0.2226347 * iT + 0.240390;
    const double x2 = x * x, x3 = x2 * x;
    double y;
    if (T < 2222.0)
        y = -1.1063814 * x3 - 1.34811020 * x2 + 2.18555832 * x - 0.20219683;
    else if (T < 4000.0)
        y = -0.9549476 * x3 - 1.37418593 * x2 + 2.09137015 * x - 0.16748867;
    else
        y = 3.0817580 * x3 - 5.87338670 * x2 + 3.75112997 * x - 0.37001483;

    const double X = x / y, Y = 1.0, Z = (1.0 - x - y) / y;
    std::array<double, 3> rgb{};
    const double xyz[3] = {X, Y, Z};
    for (int i = 0; i < 3; ++i) {
        double v = kXyzToRgb[i][0] * xyz[0] + kXyzToRgb[i][1] * xyz[1] + kXyzToRgb[i][2] * xyz[2];
        rgb[i] = v < 0.0 ? 0.0 : v;
    }
    const double luma = rec709_luma(rgb[0], rgb[1], rgb[2]);
    for (double& v : rgb) v /= luma;
    return rgb;
}

}  // namespace delight::imaging
