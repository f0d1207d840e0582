#pragma once

#include <algorithm>
#include <filesystem>
#include <limits>
#include <fstream>
#include <string>
#include <vector>

#include "delight/checkpoint.hpp"
#include "delight/losses.hpp"
#include "delight/manifest.hpp"
#include "delight/model.hpp"

namespace delight::trainer {

using datasynth::TrainingSample;
using losses::FeatureExtractor;
using losses::LossBreakdown;
using model::DelightModel;
using nn::NodeRef;
using nn::Tensor;

struct LossSwitches {
    bool off = true;
    bool soft = true;
    bool msk = true;
};

struct AugmentConfig {
    double flip_prob = 0.5;
    int crop_lo = 280, crop_hi = 480;
    bool enabled = true;
};

struct TrainConfig {
    int epochs = 4;
    double learning_rate = 2e-4;
    int batch_size = 8;
    int resolution = 256;
    LossSwitches switches;
    AugmentConfig augment;
    std::uint64_t seed = 0;
    // Adam moments; the canonical defaults.
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    // Sum the src and soft losses in one step (default) or alternate steps.
    bool soft_alternate = false;
    double validation_fraction = 0.1;
    int log_every = 1;
};

// Ablation rows: A = dlt only, B = +off, C = +soft, D = +msk (everything).
inline LossSwitches ablation_row(char row) {
    switch (row) {
        case 'A': return {false, false, false};
        case 'B': return {true, false, false};
        case 'C': return {true, true, false};
        case 'D': return {true, true, true};
        default: throw bad_input_error(std::string("unknown ablation row: ") + row);
    }
}

// Parses the `--ablate off,soft,msk` style list of switched-off terms.
inline LossSwitches parse_ablate_list(const std::string& list) {
    LossSwitches s;
    std::size_t start = 0;
    while (start < list.size()) {
        auto end = list.find(',', start);
        if (end == std::string::npos) end = list.size();
        const std::string term = list.substr(start, end - start);
        if (term == "off")
            s.off = false;
        else if (term == "soft")
            s.soft = false;
        else if (term == "msk")
            s.msk = false;
        else if (!term.empty())
            throw bad_input_error("unknown loss term in --ablate: " + term);
        start = end + 1;
    }
    return s;
}

// ---- augmentation -----------------------------------------------------------

// One geometric transform applied to every plane of the sample: square crop
// with a window size drawn from [crop_lo, crop_hi], resize to `resolution`,
// then an optional horizontal flip. Bilinear resampling is linear, so the
// off = src - dlt identity survives (up to the re-binarized foreground rim).
inline TrainingSample augment(const TrainingSample& s, Rng& rng, const AugmentConfig& cfg,
                              int resolution) {
    const int h = s.src.height(), w = s.src.width();
    int win = std::min(h, w);
    int y0 = 0, x0 = 0;
    if (cfg.enabled) {
        require(cfg.crop_lo <= std::min(h, w), "augment: crop window larger than image");
        const int hi = std::min(cfg.crop_hi, std::min(h, w));
        win = static_cast<int>(rng.uniform_int(cfg.crop_lo, hi));
        y0 = static_cast<int>(rng.uniform_int(0, h - win));
        x0 = static_cast<int>(rng.uniform_int(0, w - win));
    }
    const bool flip = cfg.enabled && rng.bernoulli(cfg.flip_prob);
    const imaging::CropWindow window{y0, x0, win, win};

    const auto xf_image = [&](const imaging::RasterImage& img) {
        auto out = imaging::resize(imaging::crop(img, window), resolution, resolution);
        return flip ? imaging::flip_horizontal(out) : out;
    };
    const auto xf_mask = [&](const imaging::MaskImage& m) {
        auto out = imaging::resize(imaging::crop(m, window), resolution, resolution);
        return flip ? imaging::flip_horizontal(out) : out;
    };

    TrainingSample out;
    out.id = s.id;
    out.src = xf_image(s.src);
    out.dlt = xf_image(s.dlt);
    out.off = xf_image(s.off);
    out.soft = xf_image(s.soft);
    out.soft_off = xf_image(s.soft_off);
    out.hf_mask = xf_mask(s.hf_mask);
    // Foreground is re-binarized after bilinear resampling.
    out.foreground = manifest::binarize(xf_mask(s.foreground).as_image());
    out.fg_count = out.foreground.count_nonzero();
    require(out.fg_count > 0, "augment: crop removed the whole foreground");
    return out;
}

// ---- optimizer ----------------------------------------------------------------

class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    std::uint64_t step_count() const { return t_; }
    void set_step_count(std::uint64_t t) { t_ = t; }

    void step(std::vector<model::Param<float>>& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (auto& p : params) {
            for (std::size_t i = 0; i < p.value.numel(); ++i) {
                const double g = p.grad.v[i];
                const double m = beta1_ * p.adam_m.v[i] + (1.0 - beta1_) * g;
                const double v = beta2_ * p.adam_v.v[i] + (1.0 - beta2_) * g * g;
                p.adam_m.v[i] = static_cast<float>(m);
                p.adam_v.v[i] = static_cast<float>(v);
                p.value.v[i] -= static_cast<float>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
            }
        }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
};

// ---- step ---------------------------------------------------------------------

namespace detail {

// Per-sample tensors in the shapes the loss stack expects.
struct PreparedSample {
    Tensor<float> src_signed;      // network input
    Tensor<float> soft_signed;     // second-pass input
    Tensor<float> dlt01, off01, soft_off01;  // loss targets, [0,1]
    Tensor<float> hf_mask;
    std::size_t fg_count = 0;
    std::string id;
};

inline Tensor<float> unit_tensor(const imaging::RasterImage& img) {
    return nn::to_tensor<float>(img);
}

inline Tensor<float> offset_to_unit(const imaging::RasterImage& off) {
    Tensor<float> t = nn::to_tensor<float>(off);
    for (auto& v : t.v) v = (v + 1.0f) * 0.5f;
    return t;
}

inline PreparedSample prepare(const TrainingSample& s) {
    PreparedSample p;
    p.id = s.id;
    p.src_signed = nn::to_signed_tensor<float>(s.src);
    p.soft_signed = nn::to_signed_tensor<float>(s.soft);
    p.dlt01 = unit_tensor(s.dlt);
    p.off01 = offset_to_unit(s.off);
    p.soft_off01 = offset_to_unit(s.soft_off);
    p.hf_mask = nn::to_tensor<float>(s.hf_mask);
    p.fg_count = s.fg_count;
    return p;
}

// tanh output (-1,1) -> [0,1] extractor domain, in graph.
inline NodeRef<float> to_unit(const NodeRef<float>& x) {
    return nn::affine(x, 0.5f, 0.5f);
}

}  // namespace detail

// Two forward passes per sample (source and soft-shadow variant), one Adam
// update on the summed five-term loss, breakdown averaged over the batch.
inline LossBreakdown<float> train_step(DelightModel<float>& model, Adam& adam,
                                       const FeatureExtractor<float>& fx,
                                       const std::vector<TrainingSample>& batch,
                                       const TrainConfig& cfg, std::uint64_t global_step = 0) {
    require(!batch.empty(), "train_step: empty batch");
    const bool soft_this_step =
        cfg.switches.soft && (!cfg.soft_alternate || (global_step % 2 == 1));

    model.zero_grad();
    LossBreakdown<float> sum;
    NodeRef<float> total_batch = nn::scalar_zero<float>();
    for (const auto& s : batch) {
        auto p = detail::prepare(s);
        auto src_fwd = model.forward_graph(nn::constant(p.src_signed), cfg.switches.off);

        losses::TotalLossInputs<float> in;
        in.dlt_gt = nn::constant(p.dlt01);
        in.off_gt = nn::constant(p.off01);
        in.soft_off_gt = nn::constant(p.soft_off01);
        in.d1_src = detail::to_unit(src_fwd.dlt);
        in.d2_src = cfg.switches.off ? detail::to_unit(src_fwd.off) : nullptr;
        in.hf_mask = p.hf_mask;
        in.fg_count = p.fg_count;
        in.enable_off = cfg.switches.off;
        in.enable_soft = soft_this_step;
        in.enable_msk = cfg.switches.msk;
        if (soft_this_step) {
            auto soft_fwd = model.forward_graph(nn::constant(p.soft_signed), true);
            in.d1_soft = detail::to_unit(soft_fwd.dlt);
            in.d2_soft = detail::to_unit(soft_fwd.off);
        }

        auto g = losses::total_loss_graph(fx, in);
        const auto b = g.breakdown();
        if (!std::isfinite(b.total))
            throw contract_error("train_step: non-finite loss on sample " + s.id);
        sum.l_dlt += b.l_dlt;
        sum.l_off += b.l_off;
        sum.l_soft_dlt += b.l_soft_dlt;
        sum.l_soft_off += b.l_soft_off;
        sum.l_msk += b.l_msk;
        sum.total += b.total;
        total_batch = nn::scalar_add(total_batch, g.total);
    }
    total_batch = nn::scalar_scale(total_batch, 1.0f / static_cast<float>(batch.size()));
    nn::backward(total_batch);
    adam.step(model.params());

    const auto inv = 1.0f / static_cast<float>(batch.size());
    sum.l_dlt *= inv;
    sum.l_off *= inv;
    sum.l_soft_dlt *= inv;
    sum.l_soft_off *= inv;
    sum.l_msk *= inv;
    sum.total *= inv;
    return sum;
}

// ---- fit ------------------------------------------------------------------------

struct FitResult {
    std::vector<LossBreakdown<float>> step_losses;
    std::string best_checkpoint;
    std::string last_checkpoint;
    std::uint64_t steps = 0;
};

namespace detail {

inline bool is_validation_id(const std::string& id, double fraction) {
    if (fraction <= 0.0) return false;
    const auto bucket = fnv1a(id) % 1000;
    return bucket < static_cast<std::uint64_t>(fraction * 1000.0);
}

inline void log_jsonl(std::ofstream& os, std::uint64_t step, const LossBreakdown<float>& b) {
    os << "{\"step\":" << step << ",\"l_dlt\":" << b.l_dlt << ",\"l_off\":" << b.l_off
       << ",\"l_soft_dlt\":" << b.l_soft_dlt << ",\"l_soft_off\":" << b.l_soft_off
       << ",\"l_msk\":" << b.l_msk << ",\"total\":" << b.total << "}\n";
}

}  // namespace detail

// Runs the full training protocol: per-epoch shuffling, augmentation with
// per-(seed, sample, epoch) RNG streams, JSONL loss log, per-epoch checkpoints
// plus best-by-validation, resumable bit-exactly from a checkpoint.
inline FitResult fit(DelightModel<float>& model, const FeatureExtractor<float>& fx,
                     const std::vector<TrainingSample>& samples, const TrainConfig& cfg,
                     const std::string& out_dir, const std::string& resume_from = "",
                     std::uint64_t max_steps = 0) {
    require(!samples.empty(), "fit: no samples");
    std::filesystem::create_directories(out_dir);

    std::vector<const TrainingSample*> train_set, val_set;
    for (const auto& s : samples) {
        if (detail::is_validation_id(s.id, cfg.validation_fraction))
            val_set.push_back(&s);
        else
            train_set.push_back(&s);
    }
    if (train_set.empty()) std::swap(train_set, val_set);

    Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    std::uint64_t step = 0;
    if (!resume_from.empty()) {
        const auto loaded = model::load_checkpoint(resume_from, model);
        require(loaded.has_optimizer_state, "fit: checkpoint has no optimizer state, cannot resume");
        step = loaded.step;
        adam.set_step_count(step);
    }

    std::ofstream log(out_dir + "/loss_log.jsonl", step == 0 ? std::ios::trunc : std::ios::app);
    require(log.good(), "fit: cannot open loss log");

    FitResult result;
    double best_val = std::numeric_limits<double>::infinity();
    const auto eval_validation = [&]() -> double {
        if (val_set.empty()) return std::numeric_limits<double>::infinity();
        double acc = 0.0;
        for (const auto* s : val_set) {
            Rng val_rng = Rng::stream(cfg.seed, s->id + "#val");
            auto ps = augment(*s, val_rng, AugmentConfig{0.0, 0, 0, false}, cfg.resolution);
            auto pp = detail::prepare(ps);
            auto fwd = model.forward_graph(nn::constant(pp.src_signed), false);
            auto loss = losses::perceptual_loss_graph(fx, nn::constant(pp.dlt01),
                                                      detail::to_unit(fwd.dlt), pp.fg_count);
            acc += loss->value.v[0];
        }
        return acc / static_cast<double>(val_set.size());
    };

    const std::uint64_t start_epoch = step / std::max<std::uint64_t>(
        1, (train_set.size() + cfg.batch_size - 1) / cfg.batch_size);
    for (int epoch = static_cast<int>(start_epoch); epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(train_set.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng = Rng::stream(cfg.seed, 0x10000ull + static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<TrainingSample> batch;
            for (std::size_t k = pos; k < std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size)); ++k) {
                const TrainingSample* s = train_set[order[k]];
                Rng aug_rng = Rng::stream(cfg.seed ^ (static_cast<std::uint64_t>(epoch) << 32), s->id);
                batch.push_back(augment(*s, aug_rng, cfg.augment, cfg.resolution));
            }
            const auto b = train_step(model, adam, fx, batch, cfg, step);
            ++step;
            result.step_losses.push_back(b);
            if (step % static_cast<std::uint64_t>(std::max(1, cfg.log_every)) == 0)
                detail::log_jsonl(log, step, b);
            if (max_steps && step >= max_steps) break;
        }

        const std::string name = "step-" + std::to_string(step) + ".ckpt";
        model::save_checkpoint_dir(out_dir, name, model, step);
        result.last_checkpoint = out_dir + "/" + name;
        const double val = eval_validation();
        if (val <= best_val || val_set.empty()) {
            best_val = val;
            model::save_checkpoint_dir(out_dir, "best.ckpt", model, step);
        }
        if (max_steps && step >= max_steps) break;
    }
    if (result.last_checkpoint.empty()) {
        model::save_checkpoint_dir(out_dir, "step-" + std::to_string(step) + ".ckpt", model, step);
        result.last_checkpoint = out_dir + "/step-" + std::to_string(step) + ".ckpt";
    }
    if (!std::filesystem::exists(out_dir + "/best.ckpt"))
        model::save_checkpoint_dir(out_dir, "best.ckpt", model, step);
    result.best_checkpoint = out_dir + "/best.ckpt";
    result.steps = step;
    return result;
}

}  // namespace delight::trainer
