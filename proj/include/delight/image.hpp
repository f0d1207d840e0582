#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "delight/common.hpp"

namespace delight::imaging {

// Declared value range of a RasterImage. `unit` is [0,1] display-referred,
// `signed_range` is the [-1,1] network domain, `offset` is a [-1,1] difference
// image (src - dlt) whose sign is meaningful.
enum class Range { unit, signed_range, offset };

inline float range_lo(Range r) { return r == Range::unit ? 0.0f : -1.0f; }
inline float range_hi(Range) { return 1.0f; }

inline const char* range_name(Range r) {
    switch (r) {
        case Range::unit: return "unit";
        case Range::signed_range: return "signed";
        default: return "offset";
    }
}

// H x W x C image, planar channel storage (px[(c*h + y)*w + x]).
// Values are clamped into the declared range on construction; NaNs are rejected.
class RasterImage {
public:
    RasterImage() = default;

    RasterImage(int h, int w, int c, Range range = Range::unit, float fill = 0.0f)
        : h_(h), w_(w), c_(c), range_(range) {
        require(h >= 1 && w >= 1, "RasterImage: H and W must be >= 1");
        require(c == 1 || c == 3, "RasterImage: channels must be 1 or 3");
        fill = clamp(fill, range_lo(range), range_hi(range));
        px_.assign(static_cast<std::size_t>(h) * w * c, fill);
    }

    static RasterImage from_data(int h, int w, int c, Range range, std::vector<float> data) {
        RasterImage img(h, w, c, range);
        require(data.size() == img.px_.size(), "RasterImage: payload size mismatch");
        const float lo = range_lo(range), hi = range_hi(range);
        for (float& v : data) {
            require(std::isfinite(v), "RasterImage: non-finite pixel");
            v = clamp(v, lo, hi);
        }
        img.px_ = std::move(data);
        return img;
    }

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    Range range() const { return range_; }
    std::size_t size() const { return px_.size(); }
    bool empty() const { return px_.empty(); }

    float& at(int c, int y, int x) { return px_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x]; }
    float at(int c, int y, int x) const { return px_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x]; }

    float* plane(int c) { return px_.data() + static_cast<std::size_t>(c) * h_ * w_; }
    const float* plane(int c) const { return px_.data() + static_cast<std::size_t>(c) * h_ * w_; }

    std::vector<float>& data() { return px_; }
    const std::vector<float>& data() const { return px_; }

    bool same_size(const RasterImage& o) const { return h_ == o.h_ && w_ == o.w_; }

    void clamp_to_range() {
        const float lo = range_lo(range_), hi = range_hi(range_);
        for (float& v : px_) v = clamp(v, lo, hi);
    }

    RasterImage with_range(Range r) const {
        RasterImage out = *this;
        out.range_ = r;
        out.clamp_to_range();
        return out;
    }

private:
    int h_ = 0, w_ = 0, c_ = 0;
    Range range_ = Range::unit;
    std::vector<float> px_;
};

// Single-channel weight/selection mask with values in [0,1].
class MaskImage {
public:
    MaskImage() = default;

    MaskImage(int h, int w, float fill = 0.0f) : h_(h), w_(w) {
        require(h >= 1 && w >= 1, "MaskImage: H and W must be >= 1");
        px_.assign(static_cast<std::size_t>(h) * w, clamp01(fill));
    }

    static MaskImage from_data(int h, int w, std::vector<float> data) {
        MaskImage m(h, w);
        require(data.size() == m.px_.size(), "MaskImage: payload size mismatch");
        for (float& v : data) {
            require(std::isfinite(v), "MaskImage: non-finite value");
            v = clamp01(v);
        }
        m.px_ = std::move(data);
        return m;
    }

    int height() const { return h_; }
    int width() const { return w_; }
    std::size_t size() const { return px_.size(); }
    bool empty() const { return px_.empty(); }

    float& at(int y, int x) { return px_[static_cast<std::size_t>(y) * w_ + x]; }
    float at(int y, int x) const { return px_[static_cast<std::size_t>(y) * w_ + x]; }

    std::vector<float>& data() { return px_; }
    const std::vector<float>& data() const { return px_; }

    bool is_binary() const {
        for (float v : px_)
            if (v != 0.0f && v != 1.0f) return false;
        return true;
    }

    std::size_t count_nonzero() const {
        std::size_t n = 0;
        for (float v : px_) n += (v != 0.0f);
        return n;
    }

    RasterImage as_image() const {
        return RasterImage::from_data(h_, w_, 1, Range::unit, px_);
    }

    static MaskImage from_image(const RasterImage& img) {
        require(img.channels() == 1, "MaskImage: expected 1-channel image");
        return from_data(img.height(), img.width(), img.data());
    }

private:
    int h_ = 0, w_ = 0;
    std::vector<float> px_;
};

// Multiplies every channel by the mask; pixels where the mask is 0 take `fill`.
inline RasterImage apply_mask(const RasterImage& img, const MaskImage& mask, float fill = 0.0f) {
    require(img.height() == mask.height() && img.width() == mask.width(),
            "apply_mask: size mismatch");
    RasterImage out = img;
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x) {
                const float m = mask.at(y, x);
                out.at(c, y, x) = m * img.at(c, y, x) + (1.0f - m) * fill;
            }
    return out;
}

}  // namespace delight::imaging
