#pragma once

#include <cstddef>
#include <vector>

#include "delight/common.hpp"
#include "delight/image.hpp"

namespace delight::nn {

// Dense NCHW tensor. Biases use (1,C,1,1), scalars (1,1,1,1).
template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
        require(n_ >= 1 && c_ >= 1 && h_ >= 1 && w_ >= 1, "Tensor: bad shape");
    }

    static Tensor scalar(T value) {
        Tensor t(1, 1, 1, 1);
        t.v[0] = value;
        return t;
    }

    std::size_t numel() const { return v.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

    T& at(int in, int ic, int iy, int ix) {
        return v[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    T at(int in, int ic, int iy, int ix) const {
        return v[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
    }

    T* sample(int in) { return v.data() + static_cast<std::size_t>(in) * c * h * w; }
    const T* sample(int in) const { return v.data() + static_cast<std::size_t>(in) * c * h * w; }

    bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

    void fill(T value) { std::fill(v.begin(), v.end(), value); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.n = n; out.c = c; out.h = h; out.w = w;
        out.v.assign(v.begin(), v.end());
        return out;
    }
};

// Unit image -> [-1,1] network tensor (N=1).
template <typename T>
Tensor<T> to_signed_tensor(const imaging::RasterImage& img) {
    Tensor<T> t(1, img.channels(), img.height(), img.width());
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                t.at(0, c, y, x) = static_cast<T>(img.at(c, y, x) * 2.0f - 1.0f);
    return t;
}

// Tensor in any range -> tensor without rescaling (N=1).
template <typename T>
Tensor<T> to_tensor(const imaging::RasterImage& img) {
    Tensor<T> t(1, img.channels(), img.height(), img.width());
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                t.at(0, c, y, x) = static_cast<T>(img.at(c, y, x));
    return t;
}

template <typename T>
Tensor<T> to_tensor(const imaging::MaskImage& mask) {
    Tensor<T> t(1, 1, mask.height(), mask.width());
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x) t.at(0, 0, y, x) = static_cast<T>(mask.at(y, x));
    return t;
}

// [-1,1] network tensor (sample in0) -> unit image, clamped.
template <typename T>
imaging::RasterImage signed_tensor_to_image(const Tensor<T>& t, int in = 0) {
    std::vector<float> px(static_cast<std::size_t>(t.c) * t.h * t.w);
    for (int c = 0; c < t.c; ++c)
        for (int y = 0; y < t.h; ++y)
            for (int x = 0; x < t.w; ++x)
                px[(static_cast<std::size_t>(c) * t.h + y) * t.w + x] =
                    clamp01(static_cast<float>((t.at(in, c, y, x) + T(1)) * T(0.5)));
    return imaging::RasterImage::from_data(t.h, t.w, t.c, imaging::Range::unit, std::move(px));
}

}  // namespace delight::nn
