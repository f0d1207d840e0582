#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "delight/datasynth.hpp"
#include "delight/rng.hpp"

namespace delight::fixtures {

using datasynth::OlatCapture;
using imaging::MaskImage;
using imaging::Range;
using imaging::RasterImage;

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator*(double k) const { return {x * k, y * k, z * k}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{0, 0, 1};
    }
};

struct DirectionalLight {
    Vec3 dir;          // unit vector from surface toward the light
    double intensity = 0.9;
};

// Azimuth rotates around the vertical axis (0 = camera-facing, 180 = behind
// the subject); elevation lifts the light upward. Angles in degrees.
inline Vec3 light_dir(double azimuth_deg, double elevation_deg) {
    const double az = azimuth_deg * std::numbers::pi / 180.0;
    const double el = elevation_deg * std::numbers::pi / 180.0;
    return Vec3{std::sin(az) * std::cos(el), -std::sin(el), std::cos(az) * std::cos(el)}.normalized();
}

// Toy portrait: a sphere head with freckled skin albedo over a striped
// rounded-rectangle torso, lit by directional lights with hard cast shadows.
// Everything is deterministic in (scene, seed).
struct FixtureScene {
    int height = 480, width = 480;
    double head_cx = 0.5, head_cy = 0.36;     // relative to width/height
    double head_radius = 0.21;                // relative to min(h, w)
    double torso_half_width = 0.36, torso_top = 0.62, torso_corner = 0.10;
    double ambient = 0.01;
    double light_softness = 0.05;             // angular light radius, radians
    int freckles = 60;
    bool specular = false;                    // adds a Phong room-light highlight
    std::vector<DirectionalLight> lights;
    std::uint64_t seed = 11;

    void validate() const {
        require(lights.size() >= 2, "FixtureScene: at least 2 lights required");
        require(height >= 32 && width >= 32, "FixtureScene: resolution too small");
        require(ambient >= 0.0, "FixtureScene: ambient must be non-negative");
    }
};

// Per-light ground truth retained by the renderer: pure single-light renders
// (no ambient), the dense-ring uniform-light image and the albedo itself.
struct GroundTruth {
    std::vector<RasterImage> single_light;
    RasterImage uniform;
    RasterImage albedo;
};

namespace detail {

struct Surface {
    bool hit = false;
    Vec3 point;    // 3D position, pixels; z toward the camera
    Vec3 normal;
    float albedo[3] = {0, 0, 0};
};

struct SceneGeom {
    Vec3 head_center;
    double head_r = 0;
    double torso_x0 = 0, torso_x1 = 0, torso_y0 = 0, torso_y1 = 0, corner_r = 0, torso_z = 0;
};

inline SceneGeom make_geom(const FixtureScene& sc) {
    SceneGeom g;
    const double m = std::min(sc.height, sc.width);
    g.head_r = sc.head_radius * m;
    g.head_center = {sc.head_cx * sc.width, sc.head_cy * sc.height, 0.0};
    g.torso_x0 = (sc.head_cx - sc.torso_half_width) * sc.width;
    g.torso_x1 = (sc.head_cx + sc.torso_half_width) * sc.width;
    g.torso_y0 = sc.torso_top * sc.height;
    g.torso_y1 = sc.height - 1.0;
    g.corner_r = sc.torso_corner * m;
    g.torso_z = -0.5 * g.head_r;
    return g;
}

// Signed distance to the rounded rectangle (negative inside) and the outward
// 2D direction used for edge bevels.
inline double rounded_rect_sdf(double x, double y, const SceneGeom& g, double* ox, double* oy) {
    const double cx = clamp(x, g.torso_x0 + g.corner_r, g.torso_x1 - g.corner_r);
    const double cy = clamp(y, g.torso_y0 + g.corner_r, g.torso_y1 - g.corner_r);
    const double dx = x - cx, dy = y - cy;
    const double d = std::sqrt(dx * dx + dy * dy) - g.corner_r;
    if (dx == 0.0 && dy == 0.0) {
        *ox = 0.0;
        *oy = -1.0;
    } else {
        const double n = std::sqrt(dx * dx + dy * dy);
        *ox = dx / n;
        *oy = dy / n;
    }
    return d;
}

struct Freckle {
    double x, y, r2;
};

inline std::vector<Freckle> make_freckles(const FixtureScene& sc, const SceneGeom& g) {
    std::vector<Freckle> out;
    Rng rng(sc.seed);
    out.reserve(static_cast<std::size_t>(sc.freckles));
    for (int i = 0; i < sc.freckles; ++i) {
        const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double rad = std::sqrt(rng.uniform()) * 0.85 * g.head_r;
        const double fr = rng.uniform(1.0, 2.6);
        out.push_back({g.head_center.x + std::cos(ang) * rad, g.head_center.y + std::sin(ang) * rad,
                       fr * fr});
    }
    return out;
}

inline void head_albedo(const std::vector<Freckle>& freckles, double x, double y, float* rgb) {
    // Skin-ish base with deterministic freckle dots.
    double r = 0.82, gg = 0.64, b = 0.52;
    for (const auto& f : freckles) {
        const double dx = x - f.x, dy = y - f.y;
        if (dx * dx + dy * dy < f.r2) {
            r *= 0.58;
            gg *= 0.52;
            b *= 0.5;
            break;
        }
    }
    rgb[0] = static_cast<float>(clamp(r, 0.05, 0.95));
    rgb[1] = static_cast<float>(clamp(gg, 0.05, 0.95));
    rgb[2] = static_cast<float>(clamp(b, 0.05, 0.95));
}

inline void torso_albedo(const SceneGeom& g, double x, double y, float* rgb) {
    const double stripe = std::fmod(x - g.torso_x0 + 2.0 * (y - g.torso_y0), 36.0);
    if (stripe < 18.0) {
        rgb[0] = 0.20f;
        rgb[1] = 0.32f;
        rgb[2] = 0.72f;
    } else {
        rgb[0] = 0.86f;
        rgb[1] = 0.78f;
        rgb[2] = 0.34f;
    }
}

inline Surface trace(const std::vector<Freckle>& freckles, const SceneGeom& g, int px, int py) {
    Surface s;
    const double x = px + 0.5, y = py + 0.5;
    const double dx = x - g.head_center.x, dy = y - g.head_center.y;
    const double rr = g.head_r * g.head_r;
    if (dx * dx + dy * dy <= rr) {
        const double z = std::sqrt(rr - dx * dx - dy * dy);
        s.hit = true;
        s.point = {x, y, z};
        s.normal = Vec3{dx, dy, z}.normalized();
        head_albedo(freckles, x, y, s.albedo);
        return s;
    }
    double ox = 0, oy = 0;
    const double d = rounded_rect_sdf(x, y, g, &ox, &oy);
    if (d <= 0.0) {
        s.hit = true;
        s.point = {x, y, g.torso_z};
        const double bevel = g.corner_r;
        const double t = clamp(-d / bevel, 0.0, 1.0);  // 0 at edge, 1 inside
        const double tilt = (1.0 - t) * 0.9;
        s.normal = Vec3{ox * tilt, oy * tilt, std::sqrt(std::max(1e-6, 1.0 - tilt * tilt))}.normalized();
        torso_albedo(g, x, y, s.albedo);
        return s;
    }
    return s;
}

// Binary visibility: the head sphere is the only occluder.
inline bool shadowed(const SceneGeom& g, const Vec3& p, const Vec3& l) {
    const Vec3 to_center = g.head_center - p;
    const double b = l.dot(to_center);
    const double disc = b * b - (to_center.dot(to_center) - g.head_r * g.head_r);
    if (disc <= 0.0) return false;
    const double s1 = b - std::sqrt(disc);
    return s1 > 1e-6;
}

// Fractional visibility of a light with a small angular radius, from five
// shadow rays fanned around the main direction. Gives shadow borders a
// penumbra a few pixels wide, like the LDR captures the pipeline expects.
inline double soft_visibility(const SceneGeom& g, const Vec3& p, const Vec3& l, double softness) {
    if (softness <= 0.0) return shadowed(g, p, l) ? 0.0 : 1.0;
    const Vec3 up = std::abs(l.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{0, 1, 0};
    const Vec3 t1 = Vec3{l.y * up.z - l.z * up.y, l.z * up.x - l.x * up.z,
                         l.x * up.y - l.y * up.x}.normalized();
    const Vec3 t2 = Vec3{l.y * t1.z - l.z * t1.y, l.z * t1.x - l.x * t1.z,
                         l.x * t1.y - l.y * t1.x}.normalized();
    const Vec3 dirs[5] = {l,
                          (l + t1 * softness).normalized(),
                          (l - t1 * softness).normalized(),
                          (l + t2 * softness).normalized(),
                          (l - t2 * softness).normalized()};
    int lit = 0;
    for (const auto& d : dirs)
        if (!shadowed(g, p, d)) ++lit;
    return lit / 5.0;
}

inline double phong_spot(const Surface& s) {
    static const Vec3 kRoomLight = Vec3{0.35, -0.5, 0.82}.normalized();
    const double ndl = s.normal.dot(kRoomLight);
    if (ndl <= 0.0) return 0.0;
    const Vec3 refl = s.normal * (2.0 * ndl) - kRoomLight;
    const double rv = clamp(refl.z, 0.0, 1.0);  // view direction is +z
    return 0.97 * std::pow(rv, 90.0);
}

}  // namespace detail

inline FixtureScene make_ring_scene(int n_lights, std::uint64_t seed, double elevation_deg = 35.0,
                                    int resolution = 480) {
    FixtureScene sc;
    sc.height = sc.width = resolution;
    sc.seed = seed;
    for (int i = 0; i < n_lights; ++i) {
        const double az = 360.0 * i / n_lights;
        sc.lights.push_back({light_dir(az, elevation_deg), 0.9});
    }
    return sc;
}

// Default capture rig: mostly frontal arcs like a photo room, two side lights
// and two rim lights from behind.
inline FixtureScene make_default_scene(std::uint64_t seed, int n_lights = 18, int resolution = 480) {
    FixtureScene sc;
    sc.height = sc.width = resolution;
    sc.seed = seed;
    Rng rng(seed ^ 0xf117u);
    require(n_lights >= 2, "make_default_scene: need at least 2 lights");
    for (int i = 0; i < n_lights; ++i) {
        double az, el;
        if (n_lights >= 6 && i >= n_lights - 2) {
            az = i % 2 ? 135.0 : -135.0;  // rim lights
            el = 12.0;
        } else if (n_lights >= 6 && i >= n_lights - 4) {
            az = i % 2 ? 90.0 : -90.0;
            el = 20.0;
        } else {
            const int k = n_lights > 4 ? n_lights - 4 : n_lights;
            az = -70.0 + 140.0 * (i % k) / std::max(1, k - 1);
            el = (i % 2) ? 38.0 : 14.0;
        }
        sc.lights.push_back({light_dir(az, el), rng.uniform(0.78, 1.0)});
    }
    return sc;
}

struct RenderedCapture {
    OlatCapture capture;
    GroundTruth truth;
};

// Renders one OLAT capture: per-light flash images (room ambient included),
// the room-only image, masks, plus the retained ground-truth bundle.
inline RenderedCapture render_olat_capture(const FixtureScene& scene, const std::string& id) {
    scene.validate();
    const auto geom = detail::make_geom(scene);
    const auto freckles = detail::make_freckles(scene, geom);
    const int h = scene.height, w = scene.width;
    const auto n_lights = scene.lights.size();

    RenderedCapture out;
    out.capture.id = id;
    out.capture.room_image = RasterImage(h, w, 3);
    out.capture.foreground = MaskImage(h, w);
    out.capture.nose = MaskImage(h, w);
    out.capture.mouth = MaskImage(h, w);
    out.truth.albedo = RasterImage(h, w, 3);
    out.truth.uniform = RasterImage(h, w, 3);
    for (std::size_t i = 0; i < n_lights; ++i) {
        out.capture.flash_images.emplace_back(h, w, 3);
        out.truth.single_light.emplace_back(h, w, 3);
    }

    // Dense quadrature ring for the uniform-light reference, at the
    // intensity-weighted mean elevation of the scene's lights.
    double mean_intensity = 0.0, mean_el = 0.0;
    for (const auto& l : scene.lights) {
        mean_intensity += l.intensity;
        mean_el += std::asin(clamp(-l.dir.y, -1.0, 1.0));
    }
    mean_intensity /= static_cast<double>(n_lights);
    mean_el /= static_cast<double>(n_lights);
    constexpr int kDense = 720;
    std::vector<Vec3> dense;
    dense.reserve(kDense);
    for (int i = 0; i < kDense; ++i)
        dense.push_back(light_dir(360.0 * i / kDense, mean_el * 180.0 / std::numbers::pi));

    // Nose / mouth proxy ellipses on the head.
    const double nx = geom.head_center.x, ny = geom.head_center.y + 0.18 * geom.head_r;
    const double my = geom.head_center.y + 0.58 * geom.head_r;
    const double nose_a = 0.16 * geom.head_r, nose_b = 0.13 * geom.head_r;
    const double mouth_a = 0.30 * geom.head_r, mouth_b = 0.11 * geom.head_r;

    std::size_t fg_pixels = 0;
    for (int py = 0; py < h; ++py)
        for (int px = 0; px < w; ++px) {
            const auto s = detail::trace(freckles, geom, px, py);
            if (!s.hit) continue;
            ++fg_pixels;
            out.capture.foreground.at(py, px) = 1.0f;

            const double ex = (px + 0.5 - nx) / nose_a, ey = (py + 0.5 - ny) / nose_b;
            const double mx = (px + 0.5 - nx) / mouth_a, myy = (py + 0.5 - my) / mouth_b;
            if (ex * ex + ey * ey <= 1.0)
                out.capture.nose.at(py, px) = 1.0f;
            else if (mx * mx + myy * myy <= 1.0)
                out.capture.mouth.at(py, px) = 1.0f;

            const double spec = scene.specular ? detail::phong_spot(s) : 0.0;
            for (int c = 0; c < 3; ++c)
                out.truth.albedo.at(c, py, px) = s.albedo[c];

            double uniform_shade = 0.0;
            for (const auto& l : dense) {
                const double ndl = s.normal.dot(l);
                if (ndl <= 0.0 || detail::shadowed(geom, s.point, l)) continue;
                uniform_shade += ndl;
            }
            uniform_shade = uniform_shade / kDense * mean_intensity;
            for (int c = 0; c < 3; ++c)
                out.truth.uniform.at(c, py, px) = clamp01(static_cast<float>(s.albedo[c] * uniform_shade));

            const double room_term = scene.ambient;
            for (int c = 0; c < 3; ++c)
                out.capture.room_image.at(c, py, px) =
                    clamp01(static_cast<float>(s.albedo[c] * room_term + spec));

            for (std::size_t li = 0; li < n_lights; ++li) {
                const auto& light = scene.lights[li];
                double shade = 0.0;
                const double ndl = s.normal.dot(light.dir);
                if (ndl > 0.0)
                    shade = ndl * light.intensity *
                            detail::soft_visibility(geom, s.point, light.dir, scene.light_softness);
                out.truth.single_light[li].at(0, py, px) = clamp01(static_cast<float>(s.albedo[0] * shade));
                out.truth.single_light[li].at(1, py, px) = clamp01(static_cast<float>(s.albedo[1] * shade));
                out.truth.single_light[li].at(2, py, px) = clamp01(static_cast<float>(s.albedo[2] * shade));
                for (int c = 0; c < 3; ++c)
                    out.capture.flash_images[li].at(c, py, px) =
                        clamp01(static_cast<float>(s.albedo[c] * (room_term + shade) + spec));
            }
        }

    require(fg_pixels > 0, "render_olat_capture: zero-area foreground");
    out.capture.validate();
    return out;
}

}  // namespace delight::fixtures
