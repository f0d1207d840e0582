#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "delight/image_io.hpp"
#include "delight/model.hpp"

namespace delight::model {

// Checkpoint container: parameter payload plus optional Adam state, with a
// config hash binding it to the sidecar config.json. Round-trips are
// bit-exact (raw float32 payload, fixed field order).
//
// layout: magic u64, version u32, config_hash u64, step u64, flags u32,
//         tensor count u32, then per tensor: name, shape, payload.
namespace ckpt {

constexpr std::uint64_t kMagic = 0x31544b4354'4c44ull;  // "DLTCKPT1" truncated tag
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagOptimizerState = 1;

struct NamedTensor {
    std::string name;
    nn::Tensor<float> tensor;
};

inline void write_u32(std::FILE* f, std::uint32_t v) { std::fwrite(&v, sizeof(v), 1, f); }
inline void write_u64(std::FILE* f, std::uint64_t v) { std::fwrite(&v, sizeof(v), 1, f); }

inline std::uint32_t read_u32(std::FILE* f) {
    std::uint32_t v = 0;
    if (std::fread(&v, sizeof(v), 1, f) != 1) throw bad_input_error("checkpoint: truncated");
    return v;
}
inline std::uint64_t read_u64(std::FILE* f) {
    std::uint64_t v = 0;
    if (std::fread(&v, sizeof(v), 1, f) != 1) throw bad_input_error("checkpoint: truncated");
    return v;
}

inline void write_tensor(std::FILE* f, const std::string& name, const nn::Tensor<float>& t) {
    write_u32(f, static_cast<std::uint32_t>(name.size()));
    std::fwrite(name.data(), 1, name.size(), f);
    const std::uint32_t dims[4] = {static_cast<std::uint32_t>(t.n), static_cast<std::uint32_t>(t.c),
                                   static_cast<std::uint32_t>(t.h), static_cast<std::uint32_t>(t.w)};
    std::fwrite(dims, sizeof(dims), 1, f);
    std::fwrite(t.v.data(), sizeof(float), t.numel(), f);
}

inline NamedTensor read_tensor(std::FILE* f) {
    NamedTensor nt;
    const std::uint32_t len = read_u32(f);
    require(len < 4096, "checkpoint: implausible tensor name length");
    nt.name.resize(len);
    if (len && std::fread(nt.name.data(), 1, len, f) != len) throw bad_input_error("checkpoint: truncated name");
    std::uint32_t dims[4];
    if (std::fread(dims, sizeof(dims), 1, f) != 1) throw bad_input_error("checkpoint: truncated dims");
    nt.tensor = nn::Tensor<float>(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                                  static_cast<int>(dims[2]), static_cast<int>(dims[3]));
    if (std::fread(nt.tensor.v.data(), sizeof(float), nt.tensor.numel(), f) != nt.tensor.numel())
        throw bad_input_error("checkpoint: truncated payload");
    return nt;
}

}  // namespace ckpt

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
    return nlohmann::json{{"input_channels", cfg.input_channels},
                          {"output_channels", cfg.output_channels},
                          {"widths", cfg.widths},
                          {"d2_skips", cfg.d2_skips},
                          {"seed", cfg.seed},
                          {"normalization", {{"input", "x*2-1"}, {"output", "(y+1)/2"}}}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.input_channels = j.at("input_channels").get<int>();
    cfg.output_channels = j.at("output_channels").get<int>();
    cfg.widths = j.at("widths").get<std::vector<int>>();
    cfg.d2_skips = j.at("d2_skips").get<bool>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

// Architecture-only hash: a checkpoint is compatible with any model of the
// same wiring regardless of its init seed.
inline std::uint64_t config_hash(const ModelConfig& cfg) {
    nlohmann::json arch{{"input_channels", cfg.input_channels},
                        {"output_channels", cfg.output_channels},
                        {"widths", cfg.widths},
                        {"d2_skips", cfg.d2_skips}};
    return fnv1a(arch.dump());
}

inline void save_checkpoint(const std::string& path, const DelightModel<float>& model,
                            std::uint64_t step, bool with_optimizer_state = true) {
    auto f = imaging::detail::open_file(path, "wb");
    ckpt::write_u64(f.get(), ckpt::kMagic);
    ckpt::write_u32(f.get(), ckpt::kVersion);
    ckpt::write_u64(f.get(), config_hash(model.config()));
    ckpt::write_u64(f.get(), step);
    ckpt::write_u32(f.get(), with_optimizer_state ? ckpt::kFlagOptimizerState : 0);
    const auto& params = model.params();
    const std::uint32_t per = with_optimizer_state ? 3 : 1;
    ckpt::write_u32(f.get(), static_cast<std::uint32_t>(params.size()) * per);
    for (const auto& p : params) {
        ckpt::write_tensor(f.get(), p.name, p.value);
        if (with_optimizer_state) {
            ckpt::write_tensor(f.get(), p.name + "#m", p.adam_m);
            ckpt::write_tensor(f.get(), p.name + "#v", p.adam_v);
        }
    }
}

struct LoadedCheckpoint {
    std::uint64_t step = 0;
    bool has_optimizer_state = false;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path, DelightModel<float>& model) {
    if (!std::filesystem::exists(path)) throw missing_artifact_error("missing checkpoint: " + path);
    auto f = imaging::detail::open_file(path, "rb");
    if (ckpt::read_u64(f.get()) != ckpt::kMagic) throw bad_input_error("checkpoint: bad magic");
    if (ckpt::read_u32(f.get()) != ckpt::kVersion) throw bad_input_error("checkpoint: unsupported version");
    const std::uint64_t hash = ckpt::read_u64(f.get());
    if (hash != config_hash(model.config()))
        throw bad_input_error("checkpoint: config hash mismatch (wrong config.json?)");

    LoadedCheckpoint out;
    out.step = ckpt::read_u64(f.get());
    const std::uint32_t flags = ckpt::read_u32(f.get());
    out.has_optimizer_state = flags & ckpt::kFlagOptimizerState;
    const std::uint32_t count = ckpt::read_u32(f.get());
    for (std::uint32_t i = 0; i < count; ++i) {
        auto nt = ckpt::read_tensor(f.get());
        const auto split = nt.name.find('#');
        const std::string base = nt.name.substr(0, split);
        auto& p = model.param(base);
        nn::Tensor<float>* dst = &p.value;
        if (split != std::string::npos) {
            const std::string kind = nt.name.substr(split + 1);
            dst = kind == "m" ? &p.adam_m : &p.adam_v;
        }
        require(dst->same_shape(nt.tensor), "checkpoint: shape mismatch for " + nt.name);
        *dst = std::move(nt.tensor);
    }
    return out;
}

// Writes the checkpoint plus its config.json sidecar into a directory.
inline void save_checkpoint_dir(const std::string& dir, const std::string& filename,
                                const DelightModel<float>& model, std::uint64_t step) {
    std::filesystem::create_directories(dir);
    save_checkpoint(dir + "/" + filename, model, step);
    const auto cfg_path = dir + "/config.json";
    std::ofstream os(cfg_path);
    os << config_to_json(model.config()).dump(2) << "\n";
}

inline DelightModel<float> load_model_dir(const std::string& ckpt_path) {
    const auto dir = std::filesystem::path(ckpt_path).parent_path();
    const auto cfg_path = dir / "config.json";
    if (!std::filesystem::exists(cfg_path))
        throw missing_artifact_error("missing config.json beside checkpoint: " + ckpt_path);
    std::ifstream is(cfg_path);
    nlohmann::json j;
    is >> j;
    DelightModel<float> model(config_from_json(j));
    load_checkpoint(ckpt_path, model);
    return model;
}

}  // namespace delight::model
