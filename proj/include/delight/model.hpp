#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "delight/autodiff.hpp"
#include "delight/rng.hpp"

namespace delight::model {

using nn::NodeRef;
using nn::Tensor;

struct ModelConfig {
    int input_channels = 3;
    int output_channels = 3;
    // One width per encoder level; the bottleneck reuses the last width.
    // The input spatial size must be divisible by 2^depth with depth = widths.size().
    std::vector<int> widths = {32, 64, 128, 256, 512};
    // Whether the offset decoder D2 receives encoder skip connections
    // (D1 always does). Kept as a switch so the bottleneck-only wiring can
    // be ablated.
    bool d2_skips = true;
    std::uint64_t seed = 1;

    int depth() const { return static_cast<int>(widths.size()); }
    int divisor() const { return 1 << depth(); }
};

// Named parameter slot. Gradients and Adam moments live beside the values so
// checkpoints can capture the full optimizer state.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> adam_m;
    Tensor<T> adam_v;
};

template <typename T>
struct ForwardResult {
    Tensor<T> dlt;                   // D1 output in (-1,1)
    std::optional<Tensor<T>> off;    // D2 output, present when requested
};

template <typename T>
struct GraphForward {
    NodeRef<T> dlt;
    NodeRef<T> off;  // null unless requested
};

// Shared-encoder, dual-decoder U-Net. Every block is 3x3 convolution ->
// instance normalization -> PReLU; downsampling by stride-2 convolution,
// upsampling by nearest-neighbour + convolution; each decoder ends in a
// 3x3 convolution and tanh.
template <typename T = float>
class DelightModel {
public:
    explicit DelightModel(const ModelConfig& config = {}) : cfg_(config) {
        require(!cfg_.widths.empty(), "DelightModel: widths must be non-empty");
        Rng rng(cfg_.seed);
        build_params(rng);
    }

    const ModelConfig& config() const { return cfg_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

    std::vector<Param<T>>& params() { return params_; }
    const std::vector<Param<T>>& params() const { return params_; }

    Param<T>& param(const std::string& name) {
        auto it = index_.find(name);
        require(it != index_.end(), "DelightModel: unknown parameter " + name);
        return params_[it->second];
    }

    void zero_grad() {
        for (auto& p : params_) p.grad.fill(T(0));
    }

    // Builds the graph for a batch in [-1,1]. The offset decoder subgraph is
    // constructed only when requested, so its parameters are neither read nor
    // given gradients otherwise.
    GraphForward<T> forward_graph(const NodeRef<T>& src, bool want_offset) {
        const auto& xv = src->value;
        require(xv.c == cfg_.input_channels, "forward: channel count mismatch");
        require(xv.h % cfg_.divisor() == 0 && xv.w % cfg_.divisor() == 0,
                "forward: spatial size must be divisible by 2^depth");

        const int depth = cfg_.depth();
        std::vector<NodeRef<T>> skips(depth);
        NodeRef<T> h = block(src, "enc0", 1);
        skips[0] = h;
        for (int l = 1; l < depth; ++l) {
            h = block(h, "enc" + std::to_string(l), 2);
            skips[l] = h;
        }
        NodeRef<T> bottleneck = block(h, "bott", 2);

        GraphForward<T> out;
        out.dlt = decode(bottleneck, skips, "d1", true);
        if (want_offset) out.off = decode(bottleneck, skips, "d2", cfg_.d2_skips);
        return out;
    }

    ForwardResult<T> forward(const Tensor<T>& src, bool want_offset = false) {
        auto g = forward_graph(nn::constant(src), want_offset);
        ForwardResult<T> r;
        r.dlt = g.dlt->value;
        if (g.off) r.off = g.off->value;
        return r;
    }

private:
    void add_conv(const std::string& name, int cin, int cout, Rng& rng) {
        Param<T> w;
        w.name = name + ".w";
        w.value = Tensor<T>(cout, cin, 3, 3);
        const double stddev = std::sqrt(2.0 / (9.0 * cin));
        for (auto& v : w.value.v) v = static_cast<T>(rng.normal(0.0, stddev));
        w.grad = Tensor<T>(cout, cin, 3, 3);
        w.adam_m = w.grad;
        w.adam_v = w.grad;
        push(std::move(w));

        Param<T> b;
        b.name = name + ".b";
        b.value = Tensor<T>(1, cout, 1, 1);
        b.grad = b.value;
        b.adam_m = b.value;
        b.adam_v = b.value;
        push(std::move(b));
    }

    void add_prelu(const std::string& name, int channels) {
        Param<T> a;
        a.name = name + ".a";
        a.value = Tensor<T>(1, channels, 1, 1, T(0.25));
        a.grad = Tensor<T>(1, channels, 1, 1);
        a.adam_m = a.grad;
        a.adam_v = a.grad;
        push(std::move(a));
    }

    void push(Param<T> p) {
        index_[p.name] = params_.size();
        params_.push_back(std::move(p));
    }

    void build_params(Rng& rng) {
        const int depth = cfg_.depth();
        int cin = cfg_.input_channels;
        for (int l = 0; l < depth; ++l) {
            add_conv("enc" + std::to_string(l), cin, cfg_.widths[l], rng);
            add_prelu("enc" + std::to_string(l), cfg_.widths[l]);
            cin = cfg_.widths[l];
        }
        add_conv("bott", cin, cfg_.widths.back(), rng);
        add_prelu("bott", cfg_.widths.back());
        for (const char* dec : {"d1", "d2"}) {
            const bool skips = dec[1] == '1' ? true : cfg_.d2_skips;
            int ch = cfg_.widths.back();
            for (int l = depth - 1; l >= 0; --l) {
                const int in_ch = ch + (skips ? cfg_.widths[l] : 0);
                const std::string name = std::string(dec) + ".up" + std::to_string(l);
                add_conv(name, in_ch, cfg_.widths[l], rng);
                add_prelu(name, cfg_.widths[l]);
                ch = cfg_.widths[l];
            }
            add_conv(std::string(dec) + ".out", ch, cfg_.output_channels, rng);
        }
    }

    NodeRef<T> leaf_of(const std::string& name) {
        Param<T>& p = param(name);
        return nn::leaf(p.value, &p.grad);
    }

    NodeRef<T> block(const NodeRef<T>& x, const std::string& name, int stride) {
        auto h = nn::conv3x3(x, leaf_of(name + ".w"), leaf_of(name + ".b"), stride);
        h = nn::instance_norm(h);
        return nn::prelu(h, leaf_of(name + ".a"));
    }

    NodeRef<T> decode(const NodeRef<T>& bottleneck, const std::vector<NodeRef<T>>& skips,
                      const std::string& dec, bool use_skips) {
        NodeRef<T> h = bottleneck;
        for (int l = cfg_.depth() - 1; l >= 0; --l) {
            h = nn::upsample_nearest2(h);
            if (use_skips) h = nn::concat_channels(h, skips[l]);
            h = block(h, dec + ".up" + std::to_string(l), 1);
        }
        return nn::tanh_op(nn::conv3x3(h, leaf_of(dec + ".out.w"), leaf_of(dec + ".out.b"), 1));
    }

    ModelConfig cfg_;
    std::vector<Param<T>> params_;
    std::map<std::string, std::size_t> index_;
};

struct GradientCheckReport {
    int checked = 0;
    int failed = 0;
    double worst_rel_error = 0.0;
    std::string worst_param;
    bool passed() const { return checked > 0 && failed == 0; }
};

// Central finite differences against the analytic gradients for a sampled
// subset of parameters. `loss_fn` must rebuild its graph from the current
// parameter values on every call. Meant to run on the double-precision
// engine: the step is small enough that L1 and PReLU kinks are essentially
// never crossed, yet far above double round-off.
template <typename T, typename LossFn>
GradientCheckReport gradient_check(DelightModel<T>& model, LossFn&& loss_fn, int min_params = 50,
                                   double rel_tol = 1e-2, double fd_step = 1e-6,
                                   std::uint64_t seed = 7) {
    model.zero_grad();
    auto root = loss_fn();
    nn::backward(root);

    // Spread the probes over all parameter tensors, preferring entries with
    // non-negligible gradients, then fill up to min_params regardless.
    Rng rng(seed);
    struct Entry { std::size_t param; std::size_t offset; };
    std::vector<Entry> entries;
    auto& params = model.params();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const auto& g = params[pi].grad;
        std::size_t budget = 3;
        for (std::size_t tries = 0; tries < 32 && budget > 0; ++tries) {
            const auto off = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(g.numel()) - 1));
            if (std::abs(static_cast<double>(g.v[off])) > 1e-7) {
                entries.push_back({pi, off});
                --budget;
            }
        }
    }
    std::size_t pi = 0;
    while (entries.size() < static_cast<std::size_t>(min_params)) {
        const auto& p = params[pi % params.size()];
        const auto off = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(p.value.numel()) - 1));
        entries.push_back({pi % params.size(), off});
        ++pi;
    }

    GradientCheckReport report;
    for (const auto& e : entries) {
        auto& p = params[e.param];
        const double analytic = static_cast<double>(p.grad.v[e.offset]);
        const T saved = p.value.v[e.offset];
        const double h = std::max(fd_step, fd_step * std::abs(static_cast<double>(saved)));

        p.value.v[e.offset] = static_cast<T>(saved + h);
        const double up = static_cast<double>(loss_fn()->value.v[0]);
        p.value.v[e.offset] = static_cast<T>(saved - h);
        const double down = static_cast<double>(loss_fn()->value.v[0]);
        p.value.v[e.offset] = saved;

        const double numeric = (up - down) / (2.0 * h);
        ++report.checked;
        // Entries where both routes are essentially zero carry only FD noise.
        if (std::abs(analytic) < 1e-3 && std::abs(numeric) < 1e-3) continue;
        const double scale = std::max(std::abs(analytic), std::abs(numeric));
        const double rel = std::abs(analytic - numeric) / scale;
        if (rel > rel_tol) {
            ++report.failed;
        }
        if (rel > report.worst_rel_error) {
            report.worst_rel_error = rel;
            report.worst_param = p.name;
        }
    }
    return report;
}

}  // namespace delight::model
