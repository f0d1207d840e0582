#pragma once

#include <array>
#include <string>
#include <vector>

#include "delight/autodiff.hpp"
#include "delight/checkpoint.hpp"
#include "delight/rng.hpp"

namespace delight::losses {

using nn::NodeRef;
using nn::Tensor;

// Frozen staged feature extractor. Stage i yields the activations before the
// i-th max-pool boundary of a VGG-16-family convolutional stack; five stages,
// spatial size halving between stages. Weights are constants: gradients flow
// through the features to the images but never into the extractor.
//
// Two construction paths share this contract:
//   * miniature(): a fixed-seed random-weight stack for tests and offline
//     runs (no pretrained download needed);
//   * from_file(): real VGG-16 conv weights exported with
//     tools/export_vgg16.py for full-quality training.
template <typename T = float>
class FeatureExtractor {
public:
    struct Conv {
        Tensor<T> w;  // (Cout,Cin,3,3)
        Tensor<T> b;  // (1,Cout,1,1)
    };

    static constexpr int kStages = 5;

    // Per-channel input statistics; images arrive in [0,1] and are
    // standardized as (x - mean) / std before the first convolution.
    std::array<T, 3> input_mean{T(0), T(0), T(0)};
    std::array<T, 3> input_std{T(1), T(1), T(1)};

    static FeatureExtractor miniature(std::uint64_t seed = 97) {
        FeatureExtractor fx;
        Rng rng(seed);
        const int widths[kStages] = {8, 8, 16, 16, 16};
        int cin = 3;
        for (int s = 0; s < kStages; ++s) {
            std::vector<Conv> stage;
            stage.push_back(make_conv(cin, widths[s], rng));
            fx.stages_.push_back(std::move(stage));
            cin = widths[s];
        }
        return fx;
    }

    // Loads conv stacks {2,2,3,3,3} x widths {64,128,256,512,512} from the
    // tensor container produced by tools/export_vgg16.py.
    static FeatureExtractor from_file(const std::string& path);

    int stage_count() const { return kStages; }

    // Minimum input size so every stage keeps at least one pixel.
    int min_input() const { return 1 << (kStages - 1); }

    // Element count (C*H*W) of stage i for a given input size; the N_i
    // normalizers of the stage-wise feature distances.
    std::size_t stage_elements(int stage, int h, int w) const {
        int sh = h >> stage, sw = w >> stage;
        const auto& convs = stages_[static_cast<std::size_t>(stage)];
        const int ch = convs.back().w.n;
        return static_cast<std::size_t>(ch) * sh * sw;
    }

    // Runs the staged stack on an in-graph image in [0,1]; returns the five
    // pre-pool activation nodes.
    std::vector<NodeRef<T>> extract(const NodeRef<T>& image01) const {
        const auto& v = image01->value;
        require(v.c == 3, "FeatureExtractor: expected 3-channel input");
        require(v.h >= min_input() && v.w >= min_input(),
                "FeatureExtractor: input too small for 5 stages");
        NodeRef<T> h = standardize(image01);
        std::vector<NodeRef<T>> features;
        features.reserve(kStages);
        for (int s = 0; s < kStages; ++s) {
            if (s > 0) h = nn::maxpool2(h);
            for (const auto& conv : stages_[static_cast<std::size_t>(s)])
                h = nn::relu(nn::conv3x3(h, nn::constant(conv.w), nn::constant(conv.b), 1));
            features.push_back(h);
        }
        return features;
    }

    std::vector<Tensor<T>> features(const Tensor<T>& image01) const {
        auto nodes = extract(nn::constant(image01));
        std::vector<Tensor<T>> out;
        out.reserve(nodes.size());
        for (auto& n : nodes) out.push_back(n->value);
        return out;
    }

    template <typename U>
    FeatureExtractor<U> cast() const {
        FeatureExtractor<U> out;
        for (int i = 0; i < 3; ++i) {
            out.input_mean[static_cast<std::size_t>(i)] = static_cast<U>(input_mean[static_cast<std::size_t>(i)]);
            out.input_std[static_cast<std::size_t>(i)] = static_cast<U>(input_std[static_cast<std::size_t>(i)]);
        }
        for (const auto& stage : stages_) {
            std::vector<typename FeatureExtractor<U>::Conv> s;
            for (const auto& c : stage)
                s.push_back({c.w.template cast<U>(), c.b.template cast<U>()});
        out.stages_.push_back(std::move(s));
        }
        return out;
    }

    std::vector<std::vector<Conv>>& stages() { return stages_; }
    const std::vector<std::vector<Conv>>& stages() const { return stages_; }

private:
    template <typename>
    friend class FeatureExtractor;

    static Conv make_conv(int cin, int cout, Rng& rng) {
        Conv c;
        c.w = Tensor<T>(cout, cin, 3, 3);
        const double stddev = std::sqrt(2.0 / (9.0 * cin));
        for (auto& v : c.w.v) v = static_cast<T>(rng.normal(0.0, stddev));
        c.b = Tensor<T>(1, cout, 1, 1);
        return c;
    }

    NodeRef<T> standardize(const NodeRef<T>& x) const {
        if (input_mean == std::array<T, 3>{T(0), T(0), T(0)} &&
            input_std == std::array<T, 3>{T(1), T(1), T(1)})
            return x;
        // Per-channel affine via a weight map plus shift folded into one pass.
        Tensor<T> scale(x->value.n, x->value.c, x->value.h, x->value.w);
        Tensor<T> shifted = x->value;
        const std::size_t plane = scale.plane();
        for (int in = 0; in < scale.n; ++in)
            for (int ic = 0; ic < 3; ++ic) {
                T* sp = scale.v.data() + (static_cast<std::size_t>(in) * 3 + ic) * plane;
                const T s = T(1) / input_std[static_cast<std::size_t>(ic)];
                for (std::size_t i = 0; i < plane; ++i) sp[i] = s;
            }
        auto scaled = nn::weighted(x, std::move(scale));
        // subtract mean/std per channel as a constant image
        Tensor<T> mean_map(x->value.n, x->value.c, x->value.h, x->value.w);
        for (int in = 0; in < mean_map.n; ++in)
            for (int ic = 0; ic < 3; ++ic) {
                T* mp = mean_map.v.data() + (static_cast<std::size_t>(in) * 3 + ic) * plane;
                const T m = input_mean[static_cast<std::size_t>(ic)] / input_std[static_cast<std::size_t>(ic)];
                for (std::size_t i = 0; i < plane; ++i) mp[i] = m;
            }
        return nn::sub(scaled, nn::constant(std::move(mean_map)));
    }

    std::vector<std::vector<Conv>> stages_;
};

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::from_file(const std::string& path) {
    if (!std::filesystem::exists(path)) throw missing_artifact_error("missing extractor weights: " + path);
    auto f = imaging::detail::open_file(path, "rb");
    if (model::ckpt::read_u64(f.get()) != model::ckpt::kMagic)
        throw bad_input_error("extractor weights: bad magic");
    if (model::ckpt::read_u32(f.get()) != model::ckpt::kVersion)
        throw bad_input_error("extractor weights: unsupported version");
    model::ckpt::read_u64(f.get());  // config hash, unused here
    model::ckpt::read_u64(f.get());  // step, unused
    model::ckpt::read_u32(f.get());  // flags
    const std::uint32_t count = model::ckpt::read_u32(f.get());

    FeatureExtractor fx;
    // ImageNet statistics; tools/export_vgg16.py writes weights matching them.
    fx.input_mean = {T(0.485), T(0.456), T(0.406)};
    fx.input_std = {T(0.229), T(0.224), T(0.225)};
    const int convs_per_stage[kStages] = {2, 2, 3, 3, 3};
    fx.stages_.resize(kStages);

    std::map<std::string, nn::Tensor<float>> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto nt = model::ckpt::read_tensor(f.get());
        tensors[nt.name] = std::move(nt.tensor);
    }
    for (int s = 0; s < kStages; ++s)
        for (int ci = 0; ci < convs_per_stage[s]; ++ci) {
            const std::string base = "stage" + std::to_string(s) + ".conv" + std::to_string(ci);
            auto wi = tensors.find(base + ".w");
            auto bi = tensors.find(base + ".b");
            require(wi != tensors.end() && bi != tensors.end(),
                    "extractor weights: missing tensor " + base);
            Conv c;
            c.w = wi->second.template cast<T>();
            c.b = bi->second.template cast<T>();
            fx.stages_[static_cast<std::size_t>(s)].push_back(std::move(c));
        }
    return fx;
}

}  // namespace delight::losses
