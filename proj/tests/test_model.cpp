#include <catch2/catch_amalgamated.hpp>

#include "delight/checkpoint.hpp"
#include "delight/model.hpp"

#include "support/testutil.hpp"

using namespace delight;
using namespace delight::model;
using Catch::Approx;

namespace {

ModelConfig tiny_config(std::uint64_t seed = 5) {
    ModelConfig cfg;
    cfg.widths = {8, 16};
    cfg.seed = seed;
    return cfg;
}

nn::Tensor<float> random_input(int n, int h, int w, std::uint64_t seed) {
    nn::Tensor<float> t(n, 3, h, w);
    Rng rng(seed);
    for (auto& v : t.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

}  // namespace

TEST_CASE("forward output shape equals input shape and stays inside (-1,1)") {
    DelightModel<float> net(tiny_config());
    auto x = random_input(2, 16, 16, 1);
    auto out = net.forward(x, true);
    REQUIRE(out.dlt.n == 2);
    REQUIRE(out.dlt.c == 3);
    REQUIRE(out.dlt.h == 16);
    REQUIRE(out.dlt.w == 16);
    REQUIRE(out.off.has_value());
    for (float v : out.dlt.v) {
        CHECK(v > -1.0f);
        CHECK(v < 1.0f);
    }
    for (float v : out.off->v) {
        CHECK(v > -1.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("sizes not divisible by 2^depth are rejected") {
    DelightModel<float> net(tiny_config());
    CHECK_THROWS_AS(net.forward(random_input(1, 15, 15, 2)), contract_error);
    CHECK_NOTHROW(net.forward(random_input(1, 20, 20, 3)));
}

TEST_CASE("two constructions with the same config and seed are identical") {
    DelightModel<float> a(tiny_config(42));
    DelightModel<float> b(tiny_config(42));
    REQUIRE(a.parameter_count() == b.parameter_count());
    REQUIRE(a.params().size() == b.params().size());
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        CHECK(a.params()[i].name == b.params()[i].name);
        CHECK(a.params()[i].value.v == b.params()[i].value.v);
    }
    DelightModel<float> c(tiny_config(43));
    CHECK(a.params()[0].value.v != c.params()[0].value.v);
}

TEST_CASE("forward is deterministic: same input, same bytes") {
    DelightModel<float> net(tiny_config(7));
    auto x = random_input(1, 16, 16, 4);
    auto o1 = net.forward(x, true);
    auto o2 = net.forward(x, true);
    CHECK(o1.dlt.v == o2.dlt.v);
    CHECK(o1.off->v == o2.off->v);
}

TEST_CASE("want_offset=false: D2 parameters get no gradient and are never read") {
    DelightModel<float> net(tiny_config(8));
    net.zero_grad();
    auto g = net.forward_graph(nn::constant(random_input(1, 16, 16, 5)), false);
    CHECK(g.off == nullptr);
    nn::backward(nn::abs_sum(g.dlt));
    for (const auto& p : net.params()) {
        double norm = 0.0;
        for (float v : p.grad.v) norm += std::abs(v);
        if (p.name.rfind("d2.", 0) == 0)
            CHECK(norm == 0.0);
        else
            CHECK(norm > 0.0);
    }
}

TEST_CASE("doubling input size leaves the parameter count unchanged (fully convolutional)") {
    DelightModel<float> net(tiny_config(9));
    const auto count = net.parameter_count();
    CHECK_NOTHROW(net.forward(random_input(1, 32, 32, 6)));
    CHECK(net.parameter_count() == count);
    // And the count depends only on the config, not on any forward pass.
    DelightModel<float> other(tiny_config(10));
    CHECK(other.parameter_count() == count);
}

TEST_CASE("d2_skips=false builds a narrower offset decoder but same D1") {
    auto with = tiny_config(11);
    auto without = tiny_config(11);
    without.d2_skips = false;
    DelightModel<float> a(with), b(without);
    CHECK(a.parameter_count() > b.parameter_count());
    CHECK(a.param("d1.up0.w").value.same_shape(b.param("d1.up0.w").value));
    auto x = random_input(1, 16, 16, 12);
    CHECK_NOTHROW(b.forward(x, true));
}

TEST_CASE("checkpoint round trip: save -> load -> save yields identical bytes") {
    const auto dir = testutil::scratch_dir("ckpt");
    DelightModel<float> net(tiny_config(13));
    // Dirty the optimizer state so the payload is non-trivial.
    for (auto& p : net.params()) {
        Rng rng(fnv1a(p.name));
        for (auto& v : p.adam_m.v) v = static_cast<float>(rng.uniform(-0.1, 0.1));
        for (auto& v : p.adam_v.v) v = static_cast<float>(rng.uniform(0.0, 0.01));
    }
    save_checkpoint(dir + "/a.ckpt", net, 123);

    DelightModel<float> loaded(tiny_config(14));  // different init, same shape
    const auto info = load_checkpoint(dir + "/a.ckpt", loaded);
    CHECK(info.step == 123);
    CHECK(info.has_optimizer_state);
    save_checkpoint(dir + "/b.ckpt", loaded, 123);
    CHECK(testutil::files_identical(dir + "/a.ckpt", dir + "/b.ckpt"));
}

TEST_CASE("checkpoint guards: missing file, bad magic, config mismatch") {
    const auto dir = testutil::scratch_dir("ckpt_guards");
    DelightModel<float> net(tiny_config(15));
    CHECK_THROWS_AS(load_checkpoint(dir + "/none.ckpt", net), missing_artifact_error);

    {
        std::ofstream os(dir + "/junk.ckpt", std::ios::binary);
        os << "garbage bytes here to trip the magic check";
    }
    CHECK_THROWS_AS(load_checkpoint(dir + "/junk.ckpt", net), bad_input_error);

    save_checkpoint(dir + "/ok.ckpt", net, 1);
    ModelConfig other = tiny_config(15);
    other.widths = {8, 16, 32};
    DelightModel<float> mismatched(other);
    CHECK_THROWS_AS(load_checkpoint(dir + "/ok.ckpt", mismatched), bad_input_error);
}

TEST_CASE("config json sidecar round trips") {
    auto cfg = tiny_config(16);
    cfg.d2_skips = false;
    auto j = config_to_json(cfg);
    auto back = config_from_json(j);
    CHECK(back.widths == cfg.widths);
    CHECK(back.d2_skips == cfg.d2_skips);
    CHECK(back.seed == cfg.seed);
    CHECK(config_hash(back) == config_hash(cfg));
}

TEST_CASE("gradient_check: zero loss gives zero gradients, L1 matches sign") {
    DelightModel<double> net({3, 3, {4, 8}, true, 21});
    auto x = random_input(1, 16, 16, 22).cast<double>();

    SECTION("target equals detached output -> zero loss, zero gradients") {
        auto baseline = net.forward(x, false).dlt;
        auto report = gradient_check(net, [&]() {
            auto g = net.forward_graph(nn::constant(x), false);
            return nn::abs_sum(nn::sub(g.dlt, nn::constant(baseline)));
        });
        // |0| has zero gradient everywhere; every probe must agree with that.
        CHECK(report.checked >= 50);
        CHECK(report.failed == 0);
    }

    SECTION("simple L1 loss gradients match finite differences") {
        nn::Tensor<double> target(1, 3, 16, 16, 0.1);
        auto report = gradient_check(net, [&]() {
            auto g = net.forward_graph(nn::constant(x), true);
            return nn::scalar_add(nn::abs_sum(nn::sub(g.dlt, nn::constant(target))),
                                  nn::abs_sum(nn::sub(g.off, nn::constant(target))));
        });
        CHECK(report.checked >= 50);
        INFO("worst offender: " << report.worst_param << " rel " << report.worst_rel_error);
        CHECK(report.failed == 0);
    }
}
