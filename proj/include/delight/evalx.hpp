#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "delight/checkpoint.hpp"
#include "delight/color.hpp"
#include "delight/filters.hpp"
#include "delight/geometry.hpp"
#include "delight/manifest.hpp"
#include "delight/model.hpp"

namespace delight::evalx {

using imaging::MaskImage;
using imaging::RasterImage;

// Foreground-restricted root-mean-square error over per-channel differences.
inline double rmse(const RasterImage& a, const RasterImage& b, const MaskImage& fg) {
    require(a.same_size(b) && a.channels() == b.channels(), "rmse: size mismatch");
    require(a.height() == fg.height() && a.width() == fg.width(), "rmse: mask size mismatch");
    double acc = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x) {
            if (fg.at(y, x) == 0.0f) continue;
            for (int c = 0; c < a.channels(); ++c) {
                const double d = a.at(c, y, x) - b.at(c, y, x);
                acc += d * d;
                ++n;
            }
        }
    require(n > 0, "rmse: empty foreground");
    return std::sqrt(acc / static_cast<double>(n));
}

namespace detail {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

inline std::vector<double> ssim_kernel() {
    std::vector<double> k(kSsimWindow * kSsimWindow);
    double sum = 0.0;
    const int r = kSsimWindow / 2;
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) {
            const double v = std::exp(-(x * x + y * y) / (2.0 * kSsimSigma * kSsimSigma));
            k[static_cast<std::size_t>((y + r) * kSsimWindow + x + r)] = v;
            sum += v;
        }
    for (double& v : k) v /= sum;
    return k;
}

struct WindowStats {
    double mu_a, mu_b, var_a, var_b, cov;
};

// SSIM map over valid windows (no padding), luma input.
template <typename Fn>
double ssim_scan(const RasterImage& a, const RasterImage& b, Fn&& per_window) {
    require(a.same_size(b), "ssim: size mismatch");
    require(a.height() >= kSsimWindow && a.width() >= kSsimWindow,
            "ssim: image smaller than the 11x11 window");
    const auto la = imaging::luma709(a);
    const auto lb = imaging::luma709(b);
    static const std::vector<double> kernel = ssim_kernel();
    const int r = kSsimWindow / 2;
    double acc = 0.0;
    std::size_t count = 0;
    for (int y = r; y < a.height() - r; ++y)
        for (int x = r; x < a.width() - r; ++x) {
            WindowStats s{0, 0, 0, 0, 0};
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const double k = kernel[static_cast<std::size_t>((dy + r) * kSsimWindow + dx + r)];
                    s.mu_a += k * la.at(0, y + dy, x + dx);
                    s.mu_b += k * lb.at(0, y + dy, x + dx);
                }
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const double k = kernel[static_cast<std::size_t>((dy + r) * kSsimWindow + dx + r)];
                    const double da = la.at(0, y + dy, x + dx) - s.mu_a;
                    const double db = lb.at(0, y + dy, x + dx) - s.mu_b;
                    s.var_a += k * da * da;
                    s.var_b += k * db * db;
                    s.cov += k * da * db;
                }
            acc += per_window(s);
            ++count;
        }
    return acc / static_cast<double>(count);
}

}  // namespace detail

// Standard SSIM (Gaussian 11x11 windows, C1 = 0.01^2, C2 = 0.03^2) on luma.
inline double ssim(const RasterImage& a, const RasterImage& b) {
    return detail::ssim_scan(a, b, [](const detail::WindowStats& s) {
        const double num = (2.0 * s.mu_a * s.mu_b + detail::kC1) * (2.0 * s.cov + detail::kC2);
        const double den = (s.mu_a * s.mu_a + s.mu_b * s.mu_b + detail::kC1) *
                           (s.var_a + s.var_b + detail::kC2);
        return num / den;
    });
}

// Luminance-invariant SSIM: the luminance comparison is dropped (alpha = 0),
// leaving the contrast-and-structure product (2*cov + C2)/(var_a + var_b + C2).
inline double li_ssim(const RasterImage& a, const RasterImage& b) {
    return detail::ssim_scan(a, b, [](const detail::WindowStats& s) {
        return (2.0 * s.cov + detail::kC2) / (s.var_a + s.var_b + detail::kC2);
    });
}

// Optional external pair metric (LPIPS slots in here). Never part of the
// built-in suite; the plugin reports its own version string.
class PairMetricPlugin {
public:
    virtual ~PairMetricPlugin() = default;
    virtual std::string name() const = 0;
    virtual std::string version() const = 0;
    virtual double operator()(const RasterImage& a, const RasterImage& b) = 0;
};

struct PerImageMetrics {
    std::string id;
    double rmse = 0.0, ssim = 0.0, li_ssim = 0.0;
    std::optional<double> lpips;
    bool has_ground_truth = true;
};

struct MetricReport {
    std::vector<PerImageMetrics> per_image;
    double mean_rmse = 0.0, mean_ssim = 0.0, mean_li_ssim = 0.0;
    std::optional<double> mean_lpips;
    std::string lpips_version;
    std::uint64_t config_hash = 0;

    void aggregate() {
        double r = 0, s = 0, l = 0, lp = 0;
        std::size_t n = 0, nlp = 0;
        for (const auto& m : per_image) {
            if (!m.has_ground_truth) continue;
            r += m.rmse;
            s += m.ssim;
            l += m.li_ssim;
            ++n;
            if (m.lpips) {
                lp += *m.lpips;
                ++nlp;
            }
        }
        if (n) {
            mean_rmse = r / static_cast<double>(n);
            mean_ssim = s / static_cast<double>(n);
            mean_li_ssim = l / static_cast<double>(n);
        }
        if (nlp) mean_lpips = lp / static_cast<double>(nlp);
    }
};

inline nlohmann::json report_to_json(const MetricReport& r) {
    nlohmann::json j;
    j["schema"] = "delight-report/1";
    j["policy"] = {{"rmse", "foreground-restricted"},
                   {"ssim", "full frame, black background, Rec.709 luma"}};
    j["config_hash"] = r.config_hash;
    j["aggregate"] = {{"rmse", r.mean_rmse}, {"ssim", r.mean_ssim}, {"li_ssim", r.mean_li_ssim}};
    if (r.mean_lpips) {
        j["aggregate"]["lpips"] = *r.mean_lpips;
        j["lpips_version"] = r.lpips_version;
    }
    j["per_image"] = nlohmann::json::array();
    for (const auto& m : r.per_image) {
        nlohmann::json e{{"id", m.id},
                         {"rmse", m.rmse},
                         {"ssim", m.ssim},
                         {"li_ssim", m.li_ssim},
                         {"has_ground_truth", m.has_ground_truth}};
        if (m.lpips) e["lpips"] = *m.lpips;
        j["per_image"].push_back(std::move(e));
    }
    return j;
}

// Runs D1 on a [-1,1]-normalized, model-divisible resize of the image and
// maps the output back to the original size and unit range.
inline RasterImage delight_image(model::DelightModel<float>& net, const RasterImage& input,
                                 int inference_resolution = 0) {
    const int div = net.config().divisor();
    int res = inference_resolution;
    if (res <= 0) {
        res = std::max(div, (std::min(input.height(), input.width()) / div) * div);
        res = std::min(res, 512);
    }
    require(res % div == 0, "delight_image: resolution not divisible by 2^depth");
    const auto resized = imaging::resize(input, res, res);
    auto out = net.forward(nn::to_signed_tensor<float>(resized), false);
    auto img = nn::signed_tensor_to_image(out.dlt);
    return imaging::resize(img, input.height(), input.width());
}

// Side-by-side inspection grid: input | output | ground truth | HF mask.
inline RasterImage make_grid(const std::vector<RasterImage>& panels) {
    require(!panels.empty(), "make_grid: no panels");
    const int h = panels[0].height(), w = panels[0].width();
    RasterImage grid(h, w * static_cast<int>(panels.size()), 3);
    for (std::size_t i = 0; i < panels.size(); ++i) {
        const auto& p = panels[i];
        require(p.height() == h && p.width() == w, "make_grid: panel size mismatch");
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    grid.at(c, y, static_cast<int>(i) * w + x) =
                        p.channels() == 3 ? p.at(c, y, x) : p.at(0, y, x);
    }
    return grid;
}

// Evaluates a checkpoint over the given split of a samples manifest, writing
// per-image grids and report.json into out_dir.
inline MetricReport evaluate(const std::string& ckpt_path, const std::string& samples_manifest,
                             const std::string& out_dir, const std::string& split = "test",
                             PairMetricPlugin* lpips = nullptr) {
    auto net = model::load_model_dir(ckpt_path);
    const auto m = manifest::load_samples(samples_manifest);
    const auto base = std::filesystem::path(samples_manifest).parent_path();
    std::filesystem::create_directories(out_dir);

    MetricReport report;
    report.config_hash = model::config_hash(net.config());
    if (lpips) report.lpips_version = lpips->name() + "/" + lpips->version();

    for (const auto& entry : m.samples) {
        if (!split.empty() && entry.split != split) continue;
        const auto dir = (base / entry.dir).string();

        PerImageMetrics pim;
        pim.id = entry.id;
        if (!std::filesystem::exists(dir + "/dlt.png")) {
            // No ground truth: still run inference and emit the grid, but flag
            // the entry and omit its metrics.
            const auto src = imaging::read_png(dir + "/src.png");
            auto output = delight_image(net, src);
            pim.has_ground_truth = false;
            report.per_image.push_back(pim);
            imaging::write_png(out_dir + "/" + entry.id + "_grid.png", make_grid({src, output}), 8);
            continue;
        }

        const auto sample = manifest::read_sample_dir(dir, entry.id);
        const int res = net.config().divisor() *
                        std::max(1, sample.src.height() / net.config().divisor());
        auto output = delight_image(net, sample.src, std::min(res, 256));

        pim.rmse = rmse(output, sample.dlt, sample.foreground);
        pim.ssim = ssim(output, sample.dlt);
        pim.li_ssim = li_ssim(output, sample.dlt);
        if (lpips) pim.lpips = (*lpips)(output, sample.dlt);
        report.per_image.push_back(pim);

        const auto grid = make_grid({sample.src, output, sample.dlt, sample.hf_mask.as_image()});
        imaging::write_png(out_dir + "/" + entry.id + "_grid.png", grid, 8);
    }
    report.aggregate();
    std::ofstream os(out_dir + "/report.json");
    require(os.good(), "evaluate: cannot write report.json");
    os << report_to_json(report).dump(2) << "\n";
    return report;
}

}  // namespace delight::evalx
