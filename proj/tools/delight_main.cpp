// Command-line entry point: fixtures, synth, train, delight, eval, make-mask.
//
// Exit codes: 0 success, 2 missing artifact, 3 bad input, 4 invariant
// violation. Every subcommand writes a machine-readable run.json describing
// the effective configuration, and is byte-deterministic given identical
// inputs, flags and seed.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "delight/delight.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace delight;

namespace {

constexpr const char* kVersion = "delight 0.1.0";

void write_run_json(const std::string& dir, const std::string& command, const json& effective) {
    fs::create_directories(dir);
    json j{{"tool", kVersion}, {"command", command}, {"config", effective}};
    std::ofstream os(dir + "/run.json");
    os << j.dump(2) << "\n";
}

std::vector<int> parse_widths(const std::string& csv) {
    std::vector<int> widths;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) widths.push_back(std::stoi(item));
    if (widths.empty()) throw bad_input_error("--widths: empty list");
    return widths;
}

std::string zero_pad(int v, int digits) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < digits) s.insert(s.begin(), '0');
    return s;
}

// ---- fixtures ---------------------------------------------------------------

struct FixturesArgs {
    std::string out;
    int captures = 4;
    int test_captures = 1;
    int olats = 18;
    int resolution = 480;
    std::uint64_t seed = 0;
    bool specular = false;
    std::string rig = "default";  // default | ring
};

int run_fixtures(const FixturesArgs& a) {
    manifest::CaptureManifest m;
    for (int i = 0; i < a.captures; ++i) {
        const std::string id = "capture_" + zero_pad(i, 2);
        const auto scene_seed = a.seed + static_cast<std::uint64_t>(i) * 1000003ull;
        fixtures::FixtureScene scene =
            a.rig == "ring" ? fixtures::make_ring_scene(a.olats, scene_seed, 35.0, a.resolution)
                            : fixtures::make_default_scene(scene_seed, a.olats, a.resolution);
        scene.specular = a.specular;
        auto rendered = fixtures::render_olat_capture(scene, id);

        const std::string dir = a.out + "/" + id;
        fs::create_directories(dir);
        manifest::CaptureEntry entry;
        entry.id = id;
        entry.split = i < a.captures - a.test_captures ? "train" : "test";
        for (std::size_t li = 0; li < rendered.capture.flash_images.size(); ++li) {
            const std::string rel = id + "/flash_" + zero_pad(static_cast<int>(li), 2) + ".png";
            imaging::write_png(a.out + "/" + rel, rendered.capture.flash_images[li], 16);
            entry.flash_paths.push_back(rel);
        }
        entry.room_path = id + "/room.png";
        entry.foreground_path = id + "/fg.png";
        entry.nose_path = id + "/nose.png";
        entry.mouth_path = id + "/mouth.png";
        imaging::write_png(a.out + "/" + entry.room_path, rendered.capture.room_image, 16);
        imaging::write_png(a.out + "/" + entry.foreground_path, rendered.capture.foreground, 8);
        imaging::write_png(a.out + "/" + entry.nose_path, rendered.capture.nose, 8);
        imaging::write_png(a.out + "/" + entry.mouth_path, rendered.capture.mouth, 8);
        imaging::write_png(dir + "/gt_uniform.png", rendered.truth.uniform, 16);
        m.captures.push_back(std::move(entry));
    }
    manifest::save(m, a.out + "/captures.json");
    write_run_json(a.out, "fixtures",
                   json{{"captures", a.captures},
                        {"test_captures", a.test_captures},
                        {"olats", a.olats},
                        {"resolution", a.resolution},
                        {"seed", a.seed},
                        {"specular", a.specular},
                        {"rig", a.rig}});
    std::cout << "wrote " << a.captures << " captures to " << a.out << "\n";
    return 0;
}

// ---- synth -------------------------------------------------------------------

struct SynthArgs {
    std::string manifest_path;
    std::string out;
    int samples_per_capture = 4;
    std::uint64_t seed = 0;
    datasynth::SynthConfig synth;
    int jobs = 1;
};

int run_synth(const SynthArgs& a) {
    const auto captures = manifest::load_captures(a.manifest_path);
    const auto base = fs::path(a.manifest_path).parent_path().string();

    struct Plan {
        const manifest::CaptureEntry* entry;
        int index;
        std::string id;
    };
    std::vector<Plan> plan;
    for (const auto& c : captures.captures)
        for (int k = 0; k < a.samples_per_capture; ++k)
            plan.push_back({&c, k, c.id + "_s" + zero_pad(k, 2)});

    // Per-sample RNG streams are derived from (seed, sample id), so the
    // worker count cannot change any output byte.
    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors(plan.size());
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= plan.size()) return;
            try {
                const auto& p = plan[i];
                auto capture = manifest::load_capture(*p.entry, base);
                Rng rng = Rng::stream(a.seed, p.id);
                datasynth::SampleMeta meta;
                auto sample = datasynth::assemble_sample(capture, a.synth, rng, &meta);
                sample.id = p.id;
                manifest::write_sample_dir(sample, a.out + "/" + p.id,
                                           manifest::meta_to_json(meta, a.seed));
            } catch (const std::exception& e) {
                errors[i] = std::string("sample ") + plan[i].id + ": " + e.what();
            }
        }
    };
    const int jobs = std::max(1, a.jobs);
    std::vector<std::thread> threads;
    for (int t = 1; t < jobs; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    for (const auto& e : errors)
        if (!e.empty()) throw contract_error(e);

    manifest::SampleManifest sm;
    for (const auto& p : plan) sm.samples.push_back({p.id, p.id, p.entry->split});
    manifest::save(sm, a.out + "/samples.json");
    write_run_json(a.out, "synth",
                   json{{"manifest", a.manifest_path},
                        {"samples_per_capture", a.samples_per_capture},
                        {"seed", a.seed},
                        {"epsilon", a.synth.epsilon_radius},
                        {"kappa", {a.synth.kappa_lo, a.synth.kappa_hi}},
                        {"tint_kelvin", {a.synth.tint_temp_lo, a.synth.tint_temp_hi}},
                        {"boost", {a.synth.boost_lo, a.synth.boost_hi}},
                        {"jobs", a.jobs}});
    std::cout << "wrote " << plan.size() << " samples to " << a.out << "\n";
    return 0;
}

// ---- train --------------------------------------------------------------------

struct TrainArgs {
    std::string manifest_path;
    std::string out;
    trainer::TrainConfig train;
    std::string widths = "32,64,128,256,512";
    bool d2_skips = true;
    std::string ablate;
    std::string row;
    std::string resume;
    std::string extractor_weights;
    std::uint64_t max_steps = 0;
    bool no_augment = false;
};

int run_train(TrainArgs a) {
    if (!a.row.empty()) {
        if (a.row.size() != 1) throw bad_input_error("--row expects one of A, B, C, D");
        a.train.switches = trainer::ablation_row(a.row[0]);
    }
    if (!a.ablate.empty()) a.train.switches = trainer::parse_ablate_list(a.ablate);
    if (a.no_augment) a.train.augment.enabled = false;

    const auto sm = manifest::load_samples(a.manifest_path);
    const auto base = fs::path(a.manifest_path).parent_path();
    std::vector<datasynth::TrainingSample> samples;
    for (const auto& e : sm.samples) {
        if (e.split != "train") continue;
        samples.push_back(manifest::read_sample_dir((base / e.dir).string(), e.id));
    }
    if (samples.empty()) throw missing_artifact_error("no training samples in " + a.manifest_path);

    model::ModelConfig mcfg;
    mcfg.widths = parse_widths(a.widths);
    mcfg.d2_skips = a.d2_skips;
    mcfg.seed = a.train.seed + 1;
    model::DelightModel<float> net(mcfg);

    auto fx = a.extractor_weights.empty()
                  ? losses::FeatureExtractor<float>::miniature()
                  : losses::FeatureExtractor<float>::from_file(a.extractor_weights);

    write_run_json(a.out, "train",
                   json{{"manifest", a.manifest_path},
                        {"epochs", a.train.epochs},
                        {"lr", a.train.learning_rate},
                        {"batch", a.train.batch_size},
                        {"resolution", a.train.resolution},
                        {"seed", a.train.seed},
                        {"widths", mcfg.widths},
                        {"d2_skips", a.d2_skips},
                        {"switches",
                         {{"off", a.train.switches.off},
                          {"soft", a.train.switches.soft},
                          {"msk", a.train.switches.msk}}},
                        {"augment", a.train.augment.enabled},
                        {"extractor", a.extractor_weights.empty() ? "miniature" : a.extractor_weights},
                        {"resume", a.resume}});

    auto result = trainer::fit(net, fx, samples, a.train, a.out, a.resume, a.max_steps);
    std::cout << "trained " << result.steps << " steps; best checkpoint: " << result.best_checkpoint
              << "\n";
    return 0;
}

// ---- delight ---------------------------------------------------------------------

struct DelightArgs {
    std::string ckpt;
    std::string input;
    std::string output;
    std::string fg;
    std::string emit_offset;
    int resolution = 0;
};

int run_delight(const DelightArgs& a) {
    auto net = model::load_model_dir(a.ckpt);
    auto img = imaging::read_png(a.input);
    if (img.channels() == 1) throw bad_input_error("delight expects a color input image");
    if (!a.fg.empty()) {
        auto fg = manifest::binarize(imaging::read_png(a.fg));
        require(fg.height() == img.height() && fg.width() == img.width(),
                "foreground mask size mismatch");
        img = imaging::apply_mask(img, fg, 0.0f);
    }
    auto out = evalx::delight_image(net, img, a.resolution);
    if (const auto dir = fs::path(a.output).parent_path(); !dir.empty()) fs::create_directories(dir);
    imaging::write_png(a.output, out, 16);

    if (!a.emit_offset.empty()) {
        const int div = net.config().divisor();
        int res = a.resolution > 0 ? a.resolution
                                   : std::min(512, std::max(div, (std::min(img.height(), img.width()) / div) * div));
        auto resized = imaging::resize(img, res, res);
        auto fwd = net.forward(nn::to_signed_tensor<float>(resized), true);
        auto off = nn::signed_tensor_to_image(*fwd.off);
        imaging::write_png(a.emit_offset, imaging::resize(off, img.height(), img.width()), 16);
    }
    write_run_json(fs::path(a.output).parent_path().empty()
                       ? "."
                       : fs::path(a.output).parent_path().string(),
                   "delight",
                   json{{"ckpt", a.ckpt},
                        {"input", a.input},
                        {"output", a.output},
                        {"fg", a.fg},
                        {"emit_offset", a.emit_offset},
                        {"resolution", a.resolution}});
    std::cout << "wrote " << a.output << "\n";
    return 0;
}

// ---- eval -----------------------------------------------------------------------

struct EvalArgs {
    std::string ckpt;
    std::string manifest_path;
    std::string out;
    std::string split = "test";
};

int run_eval(const EvalArgs& a) {
    auto report = evalx::evaluate(a.ckpt, a.manifest_path, a.out, a.split);
    write_run_json(a.out, "eval",
                   json{{"ckpt", a.ckpt}, {"manifest", a.manifest_path}, {"split", a.split}});
    std::cout << "evaluated " << report.per_image.size() << " samples: rmse " << report.mean_rmse
              << " ssim " << report.mean_ssim << " li-ssim " << report.mean_li_ssim << "\n";
    return 0;
}

// ---- make-mask --------------------------------------------------------------------

struct MakeMaskArgs {
    std::string src;
    std::string dlt;
    std::string out;
    std::string fg;
};

int run_make_mask(const MakeMaskArgs& a) {
    auto src = imaging::read_png(a.src);
    auto dlt = imaging::read_png(a.dlt);
    imaging::MaskImage fg = a.fg.empty() ? imaging::MaskImage(src.height(), src.width(), 1.0f)
                                         : manifest::binarize(imaging::read_png(a.fg));
    auto w = datasynth::build_hf_mask(src, dlt, fg);
    if (const auto dir = fs::path(a.out).parent_path(); !dir.empty()) fs::create_directories(dir);
    imaging::write_png(a.out, w, 16);
    write_run_json(fs::path(a.out).parent_path().empty() ? "." : fs::path(a.out).parent_path().string(),
                   "make-mask", json{{"src", a.src}, {"dlt", a.dlt}, {"out", a.out}, {"fg", a.fg}});
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Portrait delighting toolkit: dataset synthesis, training and evaluation"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config")->description("TOML config file; flags > env > file > defaults");
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "global RNG seed")->envname("DELIGHT_SEED")->capture_default_str();

    FixturesArgs fx;
    auto* cmd_fx = app.add_subcommand("fixtures", "render procedural OLAT captures with ground truth");
    cmd_fx->add_option("--out", fx.out, "output directory")->required();
    cmd_fx->add_option("--captures", fx.captures, "number of captures")->capture_default_str();
    cmd_fx->add_option("--test-captures", fx.test_captures, "captures tagged as test split")
        ->capture_default_str();
    cmd_fx->add_option("--olats", fx.olats, "lights per capture")->capture_default_str();
    cmd_fx->add_option("--resolution", fx.resolution, "render resolution")->capture_default_str();
    cmd_fx->add_flag("--specular", fx.specular, "add room-light specular highlights");
    cmd_fx->add_option("--rig", fx.rig, "light rig: default | ring")->capture_default_str();

    SynthArgs sy;
    auto* cmd_sy = app.add_subcommand("synth", "synthesize supervised tuples from OLAT captures");
    cmd_sy->add_option("--manifest", sy.manifest_path, "captures.json")->required();
    cmd_sy->add_option("--out", sy.out, "output directory")->required();
    cmd_sy->add_option("--samples-per-capture", sy.samples_per_capture)->capture_default_str();
    cmd_sy->add_option("--epsilon", sy.synth.epsilon_radius, "nose/mouth filter radius")
        ->capture_default_str();
    cmd_sy->add_option("--kappa-lo", sy.synth.kappa_lo)->capture_default_str();
    cmd_sy->add_option("--kappa-hi", sy.synth.kappa_hi)->capture_default_str();
    cmd_sy->add_option("--jobs", sy.jobs, "worker threads")->capture_default_str();

    TrainArgs tr;
    auto* cmd_tr = app.add_subcommand("train", "run the training protocol");
    cmd_tr->add_option("--manifest", tr.manifest_path, "samples.json")->required();
    cmd_tr->add_option("--out", tr.out, "checkpoint/log directory")->required();
    cmd_tr->add_option("--epochs", tr.train.epochs)->capture_default_str();
    cmd_tr->add_option("--lr", tr.train.learning_rate)->capture_default_str();
    cmd_tr->add_option("--batch", tr.train.batch_size)->capture_default_str();
    cmd_tr->add_option("--resolution", tr.train.resolution)->capture_default_str();
    cmd_tr->add_option("--widths", tr.widths, "encoder widths, comma separated")->capture_default_str();
    cmd_tr->add_flag("--no-d2-skips{false}", tr.d2_skips, "offset decoder without skip connections");
    cmd_tr->add_option("--ablate", tr.ablate, "switch terms off: any of off,soft,msk");
    cmd_tr->add_option("--row", tr.row, "ablation row A..D");
    cmd_tr->add_option("--resume", tr.resume, "checkpoint to resume from");
    cmd_tr->add_option("--extractor", tr.extractor_weights,
                       "VGG-16 weights file (default: deterministic miniature)");
    cmd_tr->add_option("--max-steps", tr.max_steps, "stop after N steps (0 = run all epochs)");
    cmd_tr->add_flag("--no-augment", tr.no_augment, "disable flips and crops");
    cmd_tr->add_option("--flip-prob", tr.train.augment.flip_prob)->capture_default_str();
    cmd_tr->add_option("--crop-lo", tr.train.augment.crop_lo)->capture_default_str();
    cmd_tr->add_option("--crop-hi", tr.train.augment.crop_hi)->capture_default_str();
    cmd_tr->add_flag("--soft-alternate", tr.train.soft_alternate,
                     "alternate src/soft steps instead of summing");

    DelightArgs dl;
    auto* cmd_dl = app.add_subcommand("delight", "run D1 inference on an image");
    cmd_dl->add_option("--ckpt", dl.ckpt, "checkpoint path")->required();
    cmd_dl->add_option("--input", dl.input, "input PNG")->required();
    cmd_dl->add_option("--output", dl.output, "output PNG")->required();
    cmd_dl->add_option("--fg", dl.fg, "foreground mask PNG");
    cmd_dl->add_option("--emit-offset", dl.emit_offset, "also write the D2 offset image");
    cmd_dl->add_option("--resolution", dl.resolution, "inference resolution (0 = auto)");

    EvalArgs ev;
    auto* cmd_ev = app.add_subcommand("eval", "compute metrics over a samples manifest");
    cmd_ev->add_option("--ckpt", ev.ckpt)->required();
    cmd_ev->add_option("--manifest", ev.manifest_path)->required();
    cmd_ev->add_option("--out", ev.out)->required();
    cmd_ev->add_option("--split", ev.split)->capture_default_str();

    MakeMaskArgs mm;
    auto* cmd_mm = app.add_subcommand("make-mask", "emit the high-frequency shading mask");
    cmd_mm->add_option("--src", mm.src)->required();
    cmd_mm->add_option("--dlt", mm.dlt)->required();
    cmd_mm->add_option("--out", mm.out)->required();
    cmd_mm->add_option("--fg", mm.fg);

    CLI11_PARSE(app, argc, argv);

    // Documented precedence is flags > env > config file > defaults; CLI11
    // consults the config file before the environment, so re-apply the env
    // value unless the flag itself was given.
    bool seed_flag_given = false;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--seed" || arg.rfind("--seed=", 0) == 0) seed_flag_given = true;
    }
    if (!seed_flag_given)
        if (const char* env_seed = std::getenv("DELIGHT_SEED"))
            seed = std::strtoull(env_seed, nullptr, 10);

    try {
        if (cmd_fx->parsed()) {
            fx.seed = seed;
            return run_fixtures(fx);
        }
        if (cmd_sy->parsed()) {
            sy.seed = seed;
            sy.synth.rng_seed = seed;
            sy.synth.validate();
            return run_synth(sy);
        }
        if (cmd_tr->parsed()) {
            tr.train.seed = seed;
            return run_train(tr);
        }
        if (cmd_dl->parsed()) return run_delight(dl);
        if (cmd_ev->parsed()) return run_eval(ev);
        if (cmd_mm->parsed()) return run_make_mask(mm);
    } catch (const missing_artifact_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const bad_input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const contract_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
