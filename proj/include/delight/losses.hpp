#pragma once

#include <vector>

#include "delight/extractor.hpp"
#include "delight/geometry.hpp"
#include "delight/tensor.hpp"

namespace delight::losses {

// All loss inputs are single images (N == 1) in the extractor's [0,1] input
// domain. Signed network outputs and offset images are mapped through
// (x + 1) / 2 before they reach these functions.

template <typename T>
struct LossBreakdown {
    T l_dlt = T(0);
    T l_off = T(0);
    T l_soft_dlt = T(0);
    T l_soft_off = T(0);
    T l_msk = T(0);
    T total = T(0);
};

namespace detail {

// Bilinear mask pyramid for the masked loss: the full-resolution weight mask
// resized to each stage's spatial size.
template <typename T>
nn::Tensor<T> resize_mask(const nn::Tensor<T>& mask, int h, int w) {
    std::vector<float> px(mask.numel());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(mask.v[i]);
    auto img = imaging::RasterImage::from_data(mask.h, mask.w, 1, imaging::Range::unit, std::move(px));
    auto resized = imaging::resize(img, h, w);
    nn::Tensor<T> out(1, 1, h, w);
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] = static_cast<T>(resized.data()[i]);
    return out;
}

}  // namespace detail

// Perceptual-loss body over already-extracted stage features plus the pixel images.
template <typename T>
nn::NodeRef<T> perceptual_from_features(const std::vector<nn::NodeRef<T>>& fa,
                                        const std::vector<nn::NodeRef<T>>& fb,
                                        const nn::NodeRef<T>& a, const nn::NodeRef<T>& b,
                                        std::size_t fg_count) {
    require(fg_count > 0, "perceptual_loss: foreground pixel count must be positive");
    require(fa.size() == fb.size(), "perceptual_loss: stage count mismatch");
    auto loss = nn::scalar_zero<T>();
    for (std::size_t s = 0; s < fa.size(); ++s) {
        const auto n_i = static_cast<T>(fa[s]->value.numel());
        auto stage = nn::abs_sum(nn::sub(fa[s], fb[s]));
        loss = nn::scalar_add(loss, nn::scalar_scale(stage, T(1) / n_i));
    }
    auto pixel = nn::abs_sum(nn::sub(a, b));
    return nn::scalar_add(loss, nn::scalar_scale(pixel, T(0.2) / static_cast<T>(fg_count)));
}

// Sum of the five stage-normalized L1 feature distances plus the 0.2/M pixel
// term.
template <typename T>
nn::NodeRef<T> perceptual_loss_graph(const FeatureExtractor<T>& fx, const nn::NodeRef<T>& a,
                                     const nn::NodeRef<T>& b, std::size_t fg_count) {
    require(fg_count > 0, "perceptual_loss: foreground pixel count must be positive");
    require(a->value.same_shape(b->value), "perceptual_loss: shape mismatch");
    require(a->value.n == 1, "perceptual_loss: single image expected");
    return perceptual_from_features(fx.extract(a), fx.extract(b), a, b, fg_count);
}

template <typename T>
T perceptual_loss(const FeatureExtractor<T>& fx, const nn::Tensor<T>& a, const nn::Tensor<T>& b,
                  std::size_t fg_count) {
    return perceptual_loss_graph(fx, nn::constant(a), nn::constant(b), fg_count)->value.v[0];
}

// De-lit loss: perceptual distance between the de-lit target and D1's output.
template <typename T>
nn::NodeRef<T> delit_loss_graph(const FeatureExtractor<T>& fx, const nn::NodeRef<T>& dlt_gt,
                                const nn::NodeRef<T>& d1_out, std::size_t fg_count) {
    return perceptual_loss_graph(fx, dlt_gt, d1_out, fg_count);
}

// Shading-offset loss: perceptual distance between the offset target and D2's
// output, both pre-mapped to [0,1].
template <typename T>
nn::NodeRef<T> offset_loss_graph(const FeatureExtractor<T>& fx, const nn::NodeRef<T>& off_gt,
                                 const nn::NodeRef<T>& d2_out, std::size_t fg_count) {
    return perceptual_loss_graph(fx, off_gt, d2_out, fg_count);
}

// The pair of 0.6/M-weighted L1 regularizers for the soft-shadow pass.
template <typename T>
std::pair<nn::NodeRef<T>, nn::NodeRef<T>> soft_losses_graph(const nn::NodeRef<T>& dlt_gt,
                                                            const nn::NodeRef<T>& soft_off_gt,
                                                            const nn::NodeRef<T>& d1_soft_out,
                                                            const nn::NodeRef<T>& d2_soft_out,
                                                            std::size_t fg_count) {
    require(fg_count > 0, "soft_losses: foreground pixel count must be positive");
    const T weight = T(0.6) / static_cast<T>(fg_count);
    auto soft_dlt = nn::scalar_scale(nn::abs_sum(nn::sub(dlt_gt, d1_soft_out)), weight);
    auto soft_off = nn::scalar_scale(nn::abs_sum(nn::sub(soft_off_gt, d2_soft_out)), weight);
    return {soft_dlt, soft_off};
}

template <typename T>
std::pair<T, T> soft_losses(const nn::Tensor<T>& dlt_gt, const nn::Tensor<T>& soft_off_gt,
                            const nn::Tensor<T>& d1_soft_out, const nn::Tensor<T>& d2_soft_out,
                            std::size_t fg_count) {
    auto [a, b] = soft_losses_graph(nn::constant(dlt_gt), nn::constant(soft_off_gt),
                                    nn::constant(d1_soft_out), nn::constant(d2_soft_out), fg_count);
    return {a->value.v[0], b->value.v[0]};
}

// Masked-loss body over already-extracted stage features.
template <typename T>
nn::NodeRef<T> masked_from_features(const std::vector<nn::NodeRef<T>>& fa,
                                    const std::vector<nn::NodeRef<T>>& fb,
                                    const nn::Tensor<T>& hf_mask) {
    auto loss = nn::scalar_zero<T>();
    for (int s = 0; s < 3; ++s) {
        const auto& ref = fa[static_cast<std::size_t>(s)]->value;
        auto w_i = detail::resize_mask(hf_mask, ref.h, ref.w);
        double s_i = 0.0;
        for (const T& v : w_i.v) s_i += static_cast<double>(v);
        if (s_i < 1e-6) continue;
        auto diff = nn::sub(fa[static_cast<std::size_t>(s)], fb[static_cast<std::size_t>(s)]);
        auto masked = nn::weighted(diff, std::move(w_i));
        loss = nn::scalar_add(loss, nn::scalar_scale(nn::abs_sum(masked), static_cast<T>(1.0 / s_i)));
    }
    return loss;
}

// Masked high-frequency loss over the first three stages. W is resized to
// each stage, broadcast across channels, and each stage is normalized by the
// resized mask's sum S_i; stages with S_i below 1e-6 contribute zero.
template <typename T>
nn::NodeRef<T> masked_loss_graph(const FeatureExtractor<T>& fx, const nn::NodeRef<T>& dlt_gt,
                                 const nn::NodeRef<T>& d1_out, const nn::Tensor<T>& hf_mask) {
    require(dlt_gt->value.same_shape(d1_out->value), "masked_loss: shape mismatch");
    require(hf_mask.c == 1 && hf_mask.h == dlt_gt->value.h && hf_mask.w == dlt_gt->value.w,
            "masked_loss: mask shape mismatch");
    return masked_from_features(fx.extract(dlt_gt), fx.extract(d1_out), hf_mask);
}

template <typename T>
T masked_loss(const FeatureExtractor<T>& fx, const nn::Tensor<T>& dlt_gt,
              const nn::Tensor<T>& d1_out, const nn::Tensor<T>& hf_mask) {
    return masked_loss_graph(fx, nn::constant(dlt_gt), nn::constant(d1_out), hf_mask)->value.v[0];
}

template <typename T>
struct TotalLossInputs {
    // Ground truth, [0,1] domain.
    nn::NodeRef<T> dlt_gt, off_gt, soft_off_gt;
    // Network outputs, [0,1] domain (mapped from tanh range by the caller).
    nn::NodeRef<T> d1_src, d2_src, d1_soft, d2_soft;
    nn::Tensor<T> hf_mask;
    std::size_t fg_count = 0;
    // Ablation switches; l_dlt is always active.
    bool enable_off = true, enable_soft = true, enable_msk = true;
};

template <typename T>
struct TotalLossGraph {
    nn::NodeRef<T> l_dlt, l_off, l_soft_dlt, l_soft_off, l_msk, total;

    LossBreakdown<T> breakdown() const {
        LossBreakdown<T> b;
        b.l_dlt = l_dlt->value.v[0];
        b.l_off = l_off->value.v[0];
        b.l_soft_dlt = l_soft_dlt->value.v[0];
        b.l_soft_off = l_soft_off->value.v[0];
        b.l_msk = l_msk->value.v[0];
        b.total = total->value.v[0];
        return b;
    }
};

// Five-term sum; disabled terms are zero constants, so they contribute
// exactly nothing to value or gradient. The de-lit pair's stage features are
// extracted once and shared with the masked term.
template <typename T>
TotalLossGraph<T> total_loss_graph(const FeatureExtractor<T>& fx, const TotalLossInputs<T>& in) {
    TotalLossGraph<T> g;
    require(in.dlt_gt->value.same_shape(in.d1_src->value), "total_loss: shape mismatch");
    const auto f_dlt_gt = fx.extract(in.dlt_gt);
    const auto f_d1_src = fx.extract(in.d1_src);
    g.l_dlt = perceptual_from_features(f_dlt_gt, f_d1_src, in.dlt_gt, in.d1_src, in.fg_count);
    g.l_off = in.enable_off ? offset_loss_graph(fx, in.off_gt, in.d2_src, in.fg_count)
                            : nn::scalar_zero<T>();
    if (in.enable_soft) {
        auto [sd, so] = soft_losses_graph(in.dlt_gt, in.soft_off_gt, in.d1_soft, in.d2_soft, in.fg_count);
        g.l_soft_dlt = sd;
        g.l_soft_off = so;
    } else {
        g.l_soft_dlt = nn::scalar_zero<T>();
        g.l_soft_off = nn::scalar_zero<T>();
    }
    g.l_msk = in.enable_msk ? masked_from_features(f_dlt_gt, f_d1_src, in.hf_mask)
                            : nn::scalar_zero<T>();
    g.total = nn::scalar_add(nn::scalar_add(nn::scalar_add(g.l_dlt, g.l_off),
                             nn::scalar_add(g.l_soft_dlt, g.l_soft_off)),
                             g.l_msk);
    return g;
}

}  // namespace delight::losses
