#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "support/testutil.hpp"

#ifndef DELIGHT_CLI_PATH
#error "DELIGHT_CLI_PATH must be defined by the build"
#endif

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DELIGHT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("version and help exit cleanly; a subcommand is required") {
    CHECK(run_cli("--version") == 0);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") != 0);
    CHECK(run_cli("frobnicate") != 0);
}

TEST_CASE("tiny pipeline: fixtures -> synth -> train -> delight/eval/make-mask") {
    const auto dir = testutil::scratch_dir("cli_pipeline");
    const std::string fixtures_args = "--seed 11 fixtures --out " + dir +
                                      "/caps --captures 2 --test-captures 1 --olats 3 --resolution 96";
    REQUIRE(run_cli(fixtures_args) == 0);
    REQUIRE(std::filesystem::exists(dir + "/caps/captures.json"));
    REQUIRE(std::filesystem::exists(dir + "/caps/capture_00/gt_uniform.png"));

    REQUIRE(run_cli("--seed 11 synth --manifest " + dir + "/caps/captures.json --out " + dir +
                    "/samples --samples-per-capture 2") == 0);
    REQUIRE(std::filesystem::exists(dir + "/samples/samples.json"));
    REQUIRE(std::filesystem::exists(dir + "/samples/capture_00_s01/off.rawf"));

    REQUIRE(run_cli("--seed 11 train --manifest " + dir + "/samples/samples.json --out " + dir +
                    "/run --epochs 1 --batch 2 --resolution 32 --widths 8,16 --no-augment") == 0);
    REQUIRE(std::filesystem::exists(dir + "/run/best.ckpt"));
    REQUIRE(std::filesystem::exists(dir + "/run/config.json"));
    REQUIRE(std::filesystem::exists(dir + "/run/loss_log.jsonl"));

    // Loss log lines carry the five terms plus total.
    {
        std::ifstream is(dir + "/run/loss_log.jsonl");
        std::string line;
        REQUIRE(std::getline(is, line));
        auto j = nlohmann::json::parse(line);
        CHECK(j.contains("step"));
        CHECK(j.contains("l_dlt"));
        CHECK(j.contains("l_off"));
        CHECK(j.contains("l_soft_dlt"));
        CHECK(j.contains("l_soft_off"));
        CHECK(j.contains("l_msk"));
        CHECK(j.contains("total"));
    }

    const std::string src = dir + "/samples/capture_01_s00/src.png";
    REQUIRE(run_cli("delight --ckpt " + dir + "/run/best.ckpt --input " + src + " --output " + dir +
                    "/out/delit.png --emit-offset " + dir + "/out/off.png") == 0);
    CHECK(std::filesystem::exists(dir + "/out/delit.png"));
    CHECK(std::filesystem::exists(dir + "/out/off.png"));

    // Idempotence: identical inputs give byte-identical artifacts.
    REQUIRE(run_cli("delight --ckpt " + dir + "/run/best.ckpt --input " + src + " --output " + dir +
                    "/out/delit_again.png") == 0);
    CHECK(testutil::files_identical(dir + "/out/delit.png", dir + "/out/delit_again.png"));

    REQUIRE(run_cli("eval --ckpt " + dir + "/run/best.ckpt --manifest " + dir +
                    "/samples/samples.json --out " + dir + "/report --split test") == 0);
    CHECK(std::filesystem::exists(dir + "/report/report.json"));

    REQUIRE(run_cli("make-mask --src " + src + " --dlt " + dir +
                    "/samples/capture_01_s00/dlt.png --fg " + dir +
                    "/samples/capture_01_s00/fg.png --out " + dir + "/out/w.png") == 0);
    CHECK(std::filesystem::exists(dir + "/out/w.png"));

    // run.json audit files exist and are deterministic re-runs aside.
    CHECK(std::filesystem::exists(dir + "/caps/run.json"));
    CHECK(std::filesystem::exists(dir + "/samples/run.json"));
    CHECK(std::filesystem::exists(dir + "/run/run.json"));
}

TEST_CASE("exit codes: 2 missing artifact, 3 bad input") {
    const auto dir = testutil::scratch_dir("cli_codes");
    CHECK(run_cli("delight --ckpt " + dir + "/missing.ckpt --input x.png --output y.png") == 2);

    // Corrupt PNG: exists but unreadable.
    {
        std::ofstream os(dir + "/bad.png", std::ios::binary);
        os << "PNG? not really";
    }
    CHECK(run_cli("make-mask --src " + dir + "/bad.png --dlt " + dir + "/bad.png --out " + dir +
                  "/w.png") == 3);
    CHECK(run_cli("synth --manifest " + dir + "/none.json --out " + dir + "/s") == 2);
}

TEST_CASE("seed precedence: flags beat the environment, environment beats the config file") {
    const auto dir = testutil::scratch_dir("cli_seed");
    {
        std::ofstream os(dir + "/cfg.toml");
        os << "seed = 41\n";
    }
    const std::string tail = " fixtures --out %OUT% --captures 1 --test-captures 0 --olats 2 --resolution 64";
    auto run_with = [&](const std::string& prefix, const std::string& out) {
        std::string args = prefix + tail;
        const auto pos = args.find("%OUT%");
        args = args.substr(0, pos) + out + args.substr(pos + 5);
        return std::system((args + " >/dev/null 2>&1").c_str());
    };

    const std::string bin = DELIGHT_CLI_PATH;
    REQUIRE(run_with(bin + " --config " + dir + "/cfg.toml", dir + "/from_file") == 0);
    REQUIRE(run_with("DELIGHT_SEED=42 " + bin + " --config " + dir + "/cfg.toml", dir + "/from_env") == 0);
    REQUIRE(run_with("DELIGHT_SEED=42 " + bin + " --config " + dir + "/cfg.toml --seed 43",
                     dir + "/from_flag") == 0);

    auto seed_of = [](const std::string& run_json) {
        std::ifstream is(run_json);
        nlohmann::json j;
        is >> j;
        return j.at("config").at("seed").get<std::uint64_t>();
    };
    CHECK(seed_of(dir + "/from_file/run.json") == 41);
    CHECK(seed_of(dir + "/from_env/run.json") == 42);
    CHECK(seed_of(dir + "/from_flag/run.json") == 43);
}

TEST_CASE("fixtures and synth are byte-deterministic for a fixed seed") {
    const auto dir = testutil::scratch_dir("cli_det");
    for (const std::string run : {"a", "b"}) {
        REQUIRE(run_cli("--seed 77 fixtures --out " + dir + "/" + run +
                        " --captures 1 --test-captures 0 --olats 3 --resolution 64") == 0);
        REQUIRE(run_cli("--seed 77 synth --manifest " + dir + "/" + run + "/captures.json --out " +
                        dir + "/" + run + "_samples --samples-per-capture 2") == 0);
    }
    for (const std::string f :
         {"capture_00/flash_00.png", "capture_00/room.png", "capture_00/fg.png"})
        CHECK(testutil::files_identical(dir + "/a/" + f, dir + "/b/" + f));
    for (const std::string f : {"capture_00_s00/src.png", "capture_00_s00/off.rawf",
                                "capture_00_s01/w.png", "capture_00_s01/meta.json"})
        CHECK(testutil::files_identical(dir + "/a_samples/" + f, dir + "/b_samples/" + f));
}
