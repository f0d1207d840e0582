#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "delight/datasynth.hpp"
#include "delight/image_io.hpp"

namespace delight::manifest {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- capture manifest (input to synth) -------------------------------------

struct CaptureEntry {
    std::string id;
    std::vector<std::string> flash_paths;
    std::string room_path, foreground_path, nose_path, mouth_path;
    std::string split = "train";
};

struct CaptureManifest {
    std::vector<CaptureEntry> captures;
};

inline void save(const CaptureManifest& m, const std::string& path) {
    json j;
    j["schema"] = "delight-captures/1";
    j["captures"] = json::array();
    for (const auto& c : m.captures) {
        j["captures"].push_back({{"id", c.id},
                                 {"flash_paths", c.flash_paths},
                                 {"room_path", c.room_path},
                                 {"foreground_path", c.foreground_path},
                                 {"nose_path", c.nose_path},
                                 {"mouth_path", c.mouth_path},
                                 {"split", c.split}});
    }
    std::ofstream os(path);
    require(os.good(), "cannot write manifest: " + path);
    os << j.dump(2) << "\n";
}

inline CaptureManifest load_captures(const std::string& path) {
    if (!fs::exists(path)) throw missing_artifact_error("missing manifest: " + path);
    std::ifstream is(path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw bad_input_error("malformed manifest " + path + ": " + e.what());
    }
    CaptureManifest m;
    for (const auto& e : j.at("captures")) {
        CaptureEntry c;
        c.id = e.at("id").get<std::string>();
        c.flash_paths = e.at("flash_paths").get<std::vector<std::string>>();
        c.room_path = e.at("room_path").get<std::string>();
        c.foreground_path = e.at("foreground_path").get<std::string>();
        c.nose_path = e.at("nose_path").get<std::string>();
        c.mouth_path = e.at("mouth_path").get<std::string>();
        c.split = e.value("split", "train");
        m.captures.push_back(std::move(c));
    }
    return m;
}

inline imaging::MaskImage binarize(const imaging::RasterImage& img, float threshold = 0.5f) {
    require(img.channels() == 1, "binarize: expected a 1-channel mask image");
    imaging::MaskImage m(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) m.at(y, x) = img.at(0, y, x) >= threshold ? 1.0f : 0.0f;
    return m;
}

inline datasynth::OlatCapture load_capture(const CaptureEntry& entry, const std::string& base_dir) {
    const auto resolve = [&](const std::string& p) {
        return fs::path(p).is_absolute() ? p : (fs::path(base_dir) / p).string();
    };
    datasynth::OlatCapture cap;
    cap.id = entry.id;
    for (const auto& p : entry.flash_paths) cap.flash_images.push_back(imaging::read_png(resolve(p)));
    cap.room_image = imaging::read_png(resolve(entry.room_path));
    cap.foreground = binarize(imaging::read_png(resolve(entry.foreground_path)));
    cap.nose = binarize(imaging::read_png(resolve(entry.nose_path)));
    cap.mouth = binarize(imaging::read_png(resolve(entry.mouth_path)));
    cap.validate();
    return cap;
}

// ---- sample directories (output of synth, input to train/eval) -------------

struct SampleEntry {
    std::string id;
    std::string dir;  // relative to the samples manifest
    std::string split = "train";
};

struct SampleManifest {
    std::vector<SampleEntry> samples;
};

inline void save(const SampleManifest& m, const std::string& path) {
    json j;
    j["schema"] = "delight-samples/1";
    j["samples"] = json::array();
    for (const auto& s : m.samples)
        j["samples"].push_back({{"id", s.id}, {"dir", s.dir}, {"split", s.split}});
    std::ofstream os(path);
    require(os.good(), "cannot write samples manifest: " + path);
    os << j.dump(2) << "\n";
}

inline SampleManifest load_samples(const std::string& path) {
    if (!fs::exists(path)) throw missing_artifact_error("missing samples manifest: " + path);
    std::ifstream is(path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw bad_input_error("malformed samples manifest " + path + ": " + e.what());
    }
    SampleManifest m;
    for (const auto& e : j.at("samples"))
        m.samples.push_back({e.at("id").get<std::string>(), e.at("dir").get<std::string>(),
                             e.value("split", "train")});
    return m;
}

inline json meta_to_json(const datasynth::SampleMeta& meta, std::uint64_t seed) {
    return json{{"seed", seed},
                {"kappa", meta.kappa},
                {"epsilon", meta.epsilon},
                {"variant", static_cast<int>(meta.composite.variant)},
                {"olat_a", meta.composite.index_a},
                {"olat_b", meta.composite.index_b},
                {"blend", meta.composite.blend},
                {"temp_a", meta.composite.temp_a},
                {"temp_b", meta.composite.temp_b},
                {"boost", meta.composite.boost}};
}

// Writes src.png, dlt.png, off.rawf, soft.png, soft_off.rawf, w.png, fg.png
// and meta.json into `dir`. Color planes are 16-bit PNG; offsets stay float.
inline void write_sample_dir(const datasynth::TrainingSample& s, const std::string& dir,
                             const json& meta) {
    fs::create_directories(dir);
    imaging::write_png(dir + "/src.png", s.src, 16);
    imaging::write_png(dir + "/dlt.png", s.dlt, 16);
    imaging::write_png(dir + "/soft.png", s.soft, 16);
    imaging::write_png(dir + "/w.png", s.hf_mask.as_image(), 16);
    imaging::write_png(dir + "/fg.png", s.foreground.as_image(), 8);
    imaging::write_rawf(dir + "/off.rawf", s.off);
    imaging::write_rawf(dir + "/soft_off.rawf", s.soft_off);
    std::ofstream os(dir + "/meta.json");
    require(os.good(), "cannot write sample meta: " + dir);
    os << meta.dump(2) << "\n";
}

inline datasynth::TrainingSample read_sample_dir(const std::string& dir, const std::string& id) {
    datasynth::TrainingSample s;
    s.id = id;
    s.src = imaging::read_png(dir + "/src.png");
    s.dlt = imaging::read_png(dir + "/dlt.png");
    s.soft = imaging::read_png(dir + "/soft.png");
    const auto w_img = imaging::read_png(dir + "/w.png");
    s.hf_mask = imaging::MaskImage::from_image(w_img);
    s.foreground = binarize(imaging::read_png(dir + "/fg.png"));
    s.off = imaging::read_rawf(dir + "/off.rawf", imaging::Range::offset);
    s.soft_off = imaging::read_rawf(dir + "/soft_off.rawf", imaging::Range::offset);
    s.fg_count = s.foreground.count_nonzero();
    // 16-bit quantization budget: off was stored exactly but src/dlt were
    // quantized, so the definitional identity is checked at ~2 quantization
    // steps rather than 1e-6.
    s.validate(4.0f / 65535.0f);
    return s;
}

}  // namespace delight::manifest
