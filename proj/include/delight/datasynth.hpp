#pragma once

#include <string>
#include <vector>

#include "delight/color.hpp"
#include "delight/filters.hpp"
#include "delight/geometry.hpp"
#include "delight/rng.hpp"

namespace delight::datasynth {

using imaging::MaskImage;
using imaging::Range;
using imaging::RasterImage;

// One subject/pose: per-flash images, the room-lights-only image, the binary
// foreground mask and the nose/mouth parsing masks. M_other is implied as
// foreground minus nose minus mouth.
struct OlatCapture {
    std::string id;
    std::vector<RasterImage> flash_images;
    RasterImage room_image;
    MaskImage foreground;
    MaskImage nose;
    MaskImage mouth;

    void validate() const {
        require(!flash_images.empty(), "OlatCapture: needs at least one flash image");
        for (const auto& f : flash_images)
            require(f.same_size(room_image), "OlatCapture: image sizes differ");
        require(foreground.height() == room_image.height() && foreground.width() == room_image.width(),
                "OlatCapture: mask size mismatch");
        require(foreground.is_binary() && nose.is_binary() && mouth.is_binary(),
                "OlatCapture: masks must be binary");
        for (int y = 0; y < foreground.height(); ++y)
            for (int x = 0; x < foreground.width(); ++x) {
                require(!(nose.at(y, x) != 0.0f && mouth.at(y, x) != 0.0f),
                        "OlatCapture: nose and mouth masks overlap");
                require(!((nose.at(y, x) != 0.0f || mouth.at(y, x) != 0.0f) && foreground.at(y, x) == 0.0f),
                        "OlatCapture: parsing masks must lie inside the foreground");
            }
    }
};

// The supervised tuple of one training example.
struct TrainingSample {
    std::string id;
    RasterImage src;        // unit
    RasterImage dlt;        // unit
    RasterImage off;        // offset range, src - dlt
    RasterImage soft;       // unit
    RasterImage soft_off;   // offset range, soft - dlt
    MaskImage hf_mask;      // W
    MaskImage foreground;
    std::size_t fg_count = 0;

    void validate(float tol = 1e-6f) const {
        require(fg_count == foreground.count_nonzero(), "TrainingSample: fg_count mismatch");
        require(fg_count > 0, "TrainingSample: empty foreground");
        for (int y = 0; y < foreground.height(); ++y)
            for (int x = 0; x < foreground.width(); ++x) {
                const bool fg = foreground.at(y, x) != 0.0f;
                for (int c = 0; c < 3; ++c) {
                    if (fg) {
                        require(std::abs(off.at(c, y, x) - (src.at(c, y, x) - dlt.at(c, y, x))) <= tol,
                                "TrainingSample: off != src - dlt");
                        require(std::abs(soft_off.at(c, y, x) - (soft.at(c, y, x) - dlt.at(c, y, x))) <= tol,
                                "TrainingSample: soft_off != soft - dlt");
                    } else {
                        require(src.at(c, y, x) == 0.0f && dlt.at(c, y, x) == 0.0f &&
                                    soft.at(c, y, x) == 0.0f,
                                "TrainingSample: background must be filled with 0");
                        require(off.at(c, y, x) == 0.0f && soft_off.at(c, y, x) == 0.0f,
                                "TrainingSample: offset background must be 0");
                    }
                }
                if (!fg)
                    require(hf_mask.at(y, x) == 0.0f, "TrainingSample: hf mask outside foreground");
            }
    }
};

// Source-image variants for environment compositing: two-OLAT blends plus
// the color-adjusted de-lit / room-only entries.
enum class SourceVariant { environment, environment_boosted, tinted_delit, tinted_room };

struct CompositeParams {
    int index_a = 0, index_b = 1;
    double blend = 0.5;                    // weight of OLAT a
    double temp_a = 6500.0, temp_b = 6500.0;  // Kelvin
    double boost = 1.0;                    // intensity gain, 1 = none
    SourceVariant variant = SourceVariant::environment;
};

struct SynthConfig {
    int epsilon_radius = 7;                 // small radius for nose/mouth
    int kappa_lo = 7, kappa_hi = 35;        // large radius sampling bounds
    double tint_temp_lo = 2500.0, tint_temp_hi = 10000.0;
    double boost_lo = 1.2, boost_hi = 1.8;
    double guided_regularizer = 1e-4;
    // Sampling weights of the source variants.
    double p_env = 0.70, p_env_boost = 0.15, p_tinted_delit = 0.10;  // remainder: tinted_room
    std::uint64_t rng_seed = 0;

    void validate() const {
        require(epsilon_radius >= 1, "SynthConfig: epsilon must be >= 1");
        require(kappa_lo <= kappa_hi, "SynthConfig: kappa bounds inverted");
        require(epsilon_radius <= kappa_lo, "SynthConfig: epsilon must not exceed kappa");
        require(tint_temp_lo <= tint_temp_hi, "SynthConfig: tint range inverted");
    }
};

// ---- room-light removal -----------------------------------------------------

// (1 - L(room)/L(flash)) * flash with the luminance ratio clamped to [0,1]
// and the denominator floored at 1e-4; pixels whose flash luminance vanishes
// come out black.
inline RasterImage remove_ambient(const RasterImage& flash, const RasterImage& room) {
    require(flash.same_size(room), "remove_ambient: size mismatch");
    const auto l_flash = imaging::luminance_lab(flash);
    const auto l_room = imaging::luminance_lab(room);
    RasterImage out(flash.height(), flash.width(), flash.channels(), Range::unit);
    for (int y = 0; y < flash.height(); ++y)
        for (int x = 0; x < flash.width(); ++x) {
            const float denom = std::max(l_flash.at(0, y, x), 1e-4f);
            const float ratio = clamp01(1.0f - l_room.at(0, y, x) / denom);
            for (int c = 0; c < flash.channels(); ++c)
                out.at(c, y, x) = ratio * flash.at(c, y, x);
        }
    return out;
}

// ---- specular detection -----------------------------------------------------

// (min(1, room^2 / flash_mean))^4 per channel, max over channels, binarized
// at 0.5. flash_mean is the per-pixel mean over every flash image.
inline MaskImage detect_speculars(const RasterImage& room, const RasterImage& flash_mean,
                                  float threshold = 0.5f) {
    require(room.same_size(flash_mean), "detect_speculars: size mismatch");
    MaskImage mask(room.height(), room.width());
    for (int y = 0; y < room.height(); ++y)
        for (int x = 0; x < room.width(); ++x) {
            float best = 0.0f;
            for (int c = 0; c < room.channels(); ++c) {
                const float r = room.at(c, y, x);
                const float m = std::max(flash_mean.at(c, y, x), 1e-4f);
                const float t = std::min(1.0f, r * r / m);
                const float v = t * t * t * t;
                best = std::max(best, v);
            }
            mask.at(y, x) = best >= threshold ? 1.0f : 0.0f;
        }
    return mask;
}

inline RasterImage mean_image(const std::vector<RasterImage>& images) {
    require(!images.empty(), "mean_image: empty list");
    RasterImage out(images[0].height(), images[0].width(), images[0].channels(), Range::unit);
    std::vector<double> acc(out.size(), 0.0);
    for (const auto& img : images) {
        require(img.same_size(images[0]), "mean_image: size mismatch");
        for (std::size_t i = 0; i < img.size(); ++i) acc[i] += img.data()[i];
    }
    for (std::size_t i = 0; i < acc.size(); ++i)
        out.data()[i] = static_cast<float>(acc[i] / static_cast<double>(images.size()));
    return out;
}

struct OlatSet {
    std::vector<RasterImage> olats;
    RasterImage room_nospec;
    MaskImage specular_mask;
};

// Full OLAT synthesis: ambient removal per flash image, then specular repair
// over the room-light highlight regions (the same mask is applied to the room
// image to produce room_nospec).
inline OlatSet build_olat_set(const OlatCapture& capture) {
    capture.validate();
    OlatSet out;
    const auto flash_mean = mean_image(capture.flash_images);
    out.specular_mask = detect_speculars(capture.room_image, flash_mean);
    out.olats.reserve(capture.flash_images.size());
    for (const auto& flash : capture.flash_images) {
        auto no_ambient = remove_ambient(flash, capture.room_image);
        out.olats.push_back(imaging::inpaint_diffusion(no_ambient, out.specular_mask));
    }
    out.room_nospec = imaging::inpaint_diffusion(capture.room_image, out.specular_mask);
    return out;
}

// ---- de-lit target ----------------------------------------------------------

// Mean over the OLAT images, then L(dlt) += 6 * L(room_nospec) in Lab space,
// reconverted to sRGB and clamped.
inline RasterImage build_delit_target(const std::vector<RasterImage>& olats,
                                      const RasterImage& room_nospec) {
    require(!olats.empty(), "build_delit_target: empty OLAT list");
    auto mean = mean_image(olats);
    require(mean.same_size(room_nospec), "build_delit_target: size mismatch");
    RasterImage out(mean.height(), mean.width(), 3, Range::unit);
    for (int y = 0; y < mean.height(); ++y)
        for (int x = 0; x < mean.width(); ++x) {
            auto lab = imaging::rgb_to_lab(mean.at(0, y, x), mean.at(1, y, x), mean.at(2, y, x));
            const auto lab_room = imaging::rgb_to_lab(room_nospec.at(0, y, x), room_nospec.at(1, y, x),
                                                      room_nospec.at(2, y, x));
            lab.l = clamp(lab.l + 6.0 * lab_room.l, 0.0, 100.0);
            const auto rgb = imaging::lab_to_rgb(lab);
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = static_cast<float>(clamp(rgb[c], 0.0, 1.0));
        }
    return out;
}

// ---- environment compositing ------------------------------------------------

inline RasterImage tint_image(const RasterImage& img, double kelvin, double gain = 1.0) {
    const auto g = imaging::blackbody_gains(kelvin);
    RasterImage out = img;
    for (int c = 0; c < img.channels(); ++c) {
        const float k = static_cast<float>(g[static_cast<std::size_t>(c)] * gain);
        float* p = out.plane(c);
        for (std::size_t i = 0; i < static_cast<std::size_t>(img.height()) * img.width(); ++i)
            p[i] = clamp01(p[i] * k);
    }
    return out;
}

// Deterministic core: blends two tinted OLAT images (or returns a tinted
// de-lit / room variant) according to explicit parameters.
inline RasterImage apply_composite(const std::vector<RasterImage>& olats, const RasterImage& dlt,
                                   const RasterImage& room_nospec, const CompositeParams& p) {
    if (p.variant == SourceVariant::tinted_delit) return tint_image(dlt, p.temp_a, p.boost);
    if (p.variant == SourceVariant::tinted_room) return tint_image(room_nospec, p.temp_a, p.boost);

    require(olats.size() >= 2, "composite_environment: need at least two OLAT images");
    require(p.index_a != p.index_b, "composite_environment: OLAT indices must differ");
    const auto& a = olats[static_cast<std::size_t>(p.index_a)];
    const auto& b = olats[static_cast<std::size_t>(p.index_b)];
    const auto ga = imaging::blackbody_gains(p.temp_a);
    const auto gb = imaging::blackbody_gains(p.temp_b);
    RasterImage out(a.height(), a.width(), a.channels(), Range::unit);
    const auto w = static_cast<float>(p.blend);
    const auto boost = static_cast<float>(p.boost);
    for (int c = 0; c < a.channels(); ++c) {
        const auto ka = static_cast<float>(ga[static_cast<std::size_t>(c)]);
        const auto kb = static_cast<float>(gb[static_cast<std::size_t>(c)]);
        for (int y = 0; y < a.height(); ++y)
            for (int x = 0; x < a.width(); ++x)
                out.at(c, y, x) =
                    clamp01(boost * (w * ka * a.at(c, y, x) + (1.0f - w) * kb * b.at(c, y, x)));
    }
    return out;
}

inline CompositeParams sample_composite_params(std::size_t olat_count, Rng& rng,
                                               const SynthConfig& cfg) {
    CompositeParams p;
    const double u = rng.uniform();
    if (u < cfg.p_env)
        p.variant = SourceVariant::environment;
    else if (u < cfg.p_env + cfg.p_env_boost)
        p.variant = SourceVariant::environment_boosted;
    else if (u < cfg.p_env + cfg.p_env_boost + cfg.p_tinted_delit)
        p.variant = SourceVariant::tinted_delit;
    else
        p.variant = SourceVariant::tinted_room;

    p.index_a = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(olat_count) - 1));
    p.index_b = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(olat_count) - 2));
    if (p.index_b >= p.index_a) ++p.index_b;
    p.blend = rng.uniform(0.2, 0.8);
    p.temp_a = rng.uniform(cfg.tint_temp_lo, cfg.tint_temp_hi);
    p.temp_b = rng.uniform(cfg.tint_temp_lo, cfg.tint_temp_hi);
    p.boost = p.variant == SourceVariant::environment_boosted ? rng.uniform(cfg.boost_lo, cfg.boost_hi)
                                                              : 1.0;
    return p;
}

inline RasterImage composite_environment(const std::vector<RasterImage>& olats,
                                         const RasterImage& dlt, const RasterImage& room_nospec,
                                         Rng& rng, const SynthConfig& cfg,
                                         CompositeParams* chosen = nullptr) {
    auto p = sample_composite_params(olats.size(), rng, cfg);
    if (chosen) *chosen = p;
    return apply_composite(olats, dlt, room_nospec, p);
}

// ---- soft-shadow synthesis --------------------------------------------------

struct ParsingMasks {
    MaskImage nose;
    MaskImage mouth;
};

inline MaskImage other_mask(const MaskImage& foreground, const ParsingMasks& parsing) {
    MaskImage other(foreground.height(), foreground.width());
    for (int y = 0; y < foreground.height(); ++y)
        for (int x = 0; x < foreground.width(); ++x)
            other.at(y, x) = foreground.at(y, x) != 0.0f && parsing.nose.at(y, x) == 0.0f &&
                                     parsing.mouth.at(y, x) == 0.0f
                                 ? 1.0f
                                 : 0.0f;
    return other;
}

// I_soft = M_nose . GF(src, dlt, eps) + M_mouth . GF(src, dlt, eps)
//        + M_other . GF(src, dlt, kappa), restricted to the foreground.
inline RasterImage synth_soft_shadow(const RasterImage& src, const RasterImage& dlt,
                                     const ParsingMasks& parsing, const MaskImage& foreground,
                                     int epsilon, int kappa, double regularizer = 1e-4) {
    require(src.same_size(dlt), "synth_soft_shadow: size mismatch");
    require(epsilon >= 1 && epsilon <= kappa, "synth_soft_shadow: need 1 <= epsilon <= kappa");
    for (int y = 0; y < foreground.height(); ++y)
        for (int x = 0; x < foreground.width(); ++x)
            require(!(parsing.nose.at(y, x) != 0.0f && parsing.mouth.at(y, x) != 0.0f),
                    "synth_soft_shadow: overlapping parsing masks");

    const auto fine = imaging::guided_filter(src, dlt, epsilon, regularizer);
    const auto coarse = imaging::guided_filter(src, dlt, kappa, regularizer);
    RasterImage out(src.height(), src.width(), src.channels(), Range::unit);
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x) {
            if (foreground.at(y, x) == 0.0f) continue;
            const bool fine_region = parsing.nose.at(y, x) != 0.0f || parsing.mouth.at(y, x) != 0.0f;
            const auto& pick = fine_region ? fine : coarse;
            for (int c = 0; c < src.channels(); ++c) out.at(c, y, x) = pick.at(c, y, x);
        }
    return out;
}

// ---- high-frequency mask ----------------------------------------------------

// a = 10 * max(grad(src) - grad(GF(src, dlt, 15)), 0); b = median5(a);
// W = min(b + gauss3(b), 1), zeroed outside the foreground.
inline MaskImage build_hf_mask(const RasterImage& src, const RasterImage& dlt,
                               const MaskImage& foreground, double regularizer = 1e-4) {
    require(src.same_size(dlt), "build_hf_mask: size mismatch");
    const auto smoothed = imaging::guided_filter(src, dlt, 15, regularizer);
    const auto g_src = imaging::grad_sum(src);
    const auto g_smooth = imaging::grad_sum(smoothed);

    RasterImage a(src.height(), src.width(), 1, Range::unit);
    for (std::size_t i = 0; i < a.size(); ++i)
        a.data()[i] = 10.0f * std::max(g_src.data()[i] - g_smooth.data()[i], 0.0f);

    const auto b = imaging::median_filter(a, 5);
    const auto blurred = imaging::gaussian_blur(b, 3.0);
    MaskImage w(src.height(), src.width());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x) {
            const float v = std::min(b.at(0, y, x) + blurred.at(0, y, x), 1.0f);
            w.at(y, x) = foreground.at(y, x) != 0.0f ? std::max(v, 0.0f) : 0.0f;
        }
    return w;
}

// ---- full chain -------------------------------------------------------------

struct SampleMeta {
    CompositeParams composite;
    int kappa = 0;
    int epsilon = 0;
};

namespace detail {

inline TrainingSample assemble_from_parts(const OlatCapture& capture, const SynthConfig& cfg,
                                          const OlatSet& olat_set, const RasterImage& dlt_full,
                                          const CompositeParams& cp, int kappa, SampleMeta* meta);

}  // namespace detail

// OLATs -> de-lit target -> environment source -> soft variant -> offsets ->
// high-frequency mask, with background fill and invariant validation.
inline TrainingSample assemble_sample(const OlatCapture& capture, const SynthConfig& cfg, Rng& rng,
                                      SampleMeta* meta = nullptr) {
    cfg.validate();
    const auto olat_set = build_olat_set(capture);
    const auto dlt_full = build_delit_target(olat_set.olats, olat_set.room_nospec);
    const auto cp = sample_composite_params(olat_set.olats.size(), rng, cfg);
    const int kappa = static_cast<int>(rng.uniform_int(cfg.kappa_lo, cfg.kappa_hi));
    return detail::assemble_from_parts(capture, cfg, olat_set, dlt_full, cp, kappa, meta);
}

// Same chain with explicit composite parameters and kappa; used for
// controlled lighting variants (held-out or back-lit sources).
inline TrainingSample assemble_sample_forced(const OlatCapture& capture, const SynthConfig& cfg,
                                             const CompositeParams& cp, int kappa,
                                             SampleMeta* meta = nullptr) {
    cfg.validate();
    const auto olat_set = build_olat_set(capture);
    const auto dlt_full = build_delit_target(olat_set.olats, olat_set.room_nospec);
    return detail::assemble_from_parts(capture, cfg, olat_set, dlt_full, cp, kappa, meta);
}

namespace detail {

inline TrainingSample assemble_from_parts(const OlatCapture& capture, const SynthConfig& cfg,
                                          const OlatSet& olat_set, const RasterImage& dlt_full,
                                          const CompositeParams& cp, int kappa, SampleMeta* meta) {
    const auto src_full = apply_composite(olat_set.olats, dlt_full, olat_set.room_nospec, cp);
    ParsingMasks parsing{capture.nose, capture.mouth};
    const auto soft_full = synth_soft_shadow(src_full, dlt_full, parsing, capture.foreground,
                                             cfg.epsilon_radius, kappa, cfg.guided_regularizer);

    TrainingSample s;
    s.id = capture.id;
    s.foreground = capture.foreground;
    s.fg_count = capture.foreground.count_nonzero();
    s.src = imaging::apply_mask(src_full, capture.foreground, 0.0f);
    s.dlt = imaging::apply_mask(dlt_full, capture.foreground, 0.0f);
    s.soft = imaging::apply_mask(soft_full, capture.foreground, 0.0f);
    s.hf_mask = build_hf_mask(s.src, s.dlt, capture.foreground, cfg.guided_regularizer);

    auto difference = [](const RasterImage& x, const RasterImage& y) {
        RasterImage d(x.height(), x.width(), x.channels(), Range::offset);
        for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] = x.data()[i] - y.data()[i];
        return d;
    };
    s.off = difference(s.src, s.dlt);
    s.soft_off = difference(s.soft, s.dlt);

    if (meta) {
        meta->composite = cp;
        meta->kappa = kappa;
        meta->epsilon = cfg.epsilon_radius;
    }
    s.validate();
    return s;
}

}  // namespace detail

}  // namespace delight::datasynth
