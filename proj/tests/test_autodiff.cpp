#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "delight/autodiff.hpp"
#include "delight/rng.hpp"

using namespace delight;
using namespace delight::nn;
using Catch::Approx;

namespace {

Tensor<double> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
    Tensor<double> t(n, c, h, w);
    Rng rng(seed);
    for (auto& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

// Central finite differences of scalar(input) against the analytic gradient.
void check_gradients(const Tensor<double>& input,
                     const std::function<NodeRef<double>(const NodeRef<double>&)>& fn,
                     double tol = 1e-6, double h = 1e-6) {
    Tensor<double> grad_sink(input.n, input.c, input.h, input.w);
    auto leaf_node = leaf(input, &grad_sink);
    auto out = fn(leaf_node);
    REQUIRE(out->value.numel() == 1);
    backward(out);

    Tensor<double> probe = input;
    for (std::size_t i = 0; i < input.numel(); ++i) {
        probe.v[i] = input.v[i] + h;
        const double up = fn(constant(probe))->value.v[0];
        probe.v[i] = input.v[i] - h;
        const double down = fn(constant(probe))->value.v[0];
        probe.v[i] = input.v[i];
        const double numeric = (up - down) / (2.0 * h);
        CHECK(grad_sink.v[i] == Approx(numeric).margin(tol).epsilon(1e-4));
    }
}

}  // namespace

TEST_CASE("abs_sum forward and gradient") {
    auto x = random_tensor(1, 2, 3, 3, 1);
    double expect = 0.0;
    for (double v : x.v) expect += std::abs(v);
    CHECK(abs_sum(constant(x))->value.v[0] == Approx(expect));
    check_gradients(x, [](const NodeRef<double>& n) { return abs_sum(n); });
}

TEST_CASE("add, sub, affine gradients") {
    auto x = random_tensor(1, 1, 4, 4, 2);
    auto other = random_tensor(1, 1, 4, 4, 3);
    check_gradients(x, [&](const NodeRef<double>& n) { return abs_sum(add(n, constant(other))); });
    check_gradients(x, [&](const NodeRef<double>& n) { return abs_sum(sub(constant(other), n)); });
    check_gradients(x, [](const NodeRef<double>& n) { return abs_sum(affine(n, 1.7, -0.3)); });
}

TEST_CASE("weighted (mask) gradient, including channel broadcast") {
    auto x = random_tensor(1, 3, 4, 4, 4);
    auto w3 = random_tensor(1, 3, 4, 4, 5, 0.0, 1.0);
    auto w1 = random_tensor(1, 1, 4, 4, 6, 0.0, 1.0);
    check_gradients(x, [&](const NodeRef<double>& n) { return abs_sum(weighted(n, w3)); });
    check_gradients(x, [&](const NodeRef<double>& n) { return abs_sum(weighted(n, w1)); });
}

TEST_CASE("tanh and relu gradients") {
    auto x = random_tensor(1, 2, 3, 3, 7, -2.0, 2.0);
    check_gradients(x, [](const NodeRef<double>& n) { return abs_sum(tanh_op(n)); });
    // Nudge values away from the relu kink so finite differences are valid.
    for (auto& v : x.v)
        if (std::abs(v) < 1e-3) v = 0.1;
    check_gradients(x, [](const NodeRef<double>& n) { return abs_sum(relu(n)); });
}

TEST_CASE("prelu gradients for input and slope") {
    auto x = random_tensor(1, 3, 4, 4, 8, -2.0, 2.0);
    for (auto& v : x.v)
        if (std::abs(v) < 1e-3) v = -0.2;
    auto slope = random_tensor(1, 3, 1, 1, 9, 0.1, 0.4);

    check_gradients(x, [&](const NodeRef<double>& n) { return abs_sum(prelu(n, constant(slope))); });
    // Slope gradient via a leaf on the slope tensor.
    Tensor<double> slope_grad(1, 3, 1, 1);
    auto slope_leaf = leaf(slope, &slope_grad);
    auto out = abs_sum(prelu(constant(x), slope_leaf));
    backward(out);
    for (int c = 0; c < 3; ++c) {
        const double h = 1e-6;
        auto probe = slope;
        probe.v[static_cast<std::size_t>(c)] += h;
        const double up = abs_sum(prelu(constant(x), constant(probe)))->value.v[0];
        probe.v[static_cast<std::size_t>(c)] -= 2 * h;
        const double down = abs_sum(prelu(constant(x), constant(probe)))->value.v[0];
        CHECK(slope_grad.v[static_cast<std::size_t>(c)] == Approx((up - down) / (2 * h)).margin(1e-5));
    }
}

TEST_CASE("instance_norm normalizes per channel and its gradient checks out") {
    auto x = random_tensor(2, 3, 5, 5, 10, -2.0, 2.0);
    auto out = instance_norm(constant(x));
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c) {
            double mean = 0.0, var = 0.0;
            for (int y = 0; y < 5; ++y)
                for (int x2 = 0; x2 < 5; ++x2) mean += out->value.at(n, c, y, x2);
            mean /= 25.0;
            for (int y = 0; y < 5; ++y)
                for (int x2 = 0; x2 < 5; ++x2) {
                    const double d = out->value.at(n, c, y, x2) - mean;
                    var += d * d;
                }
            var /= 25.0;
            CHECK(mean == Approx(0.0).margin(1e-9));
            CHECK(var == Approx(1.0).margin(1e-3));  // eps-shrunk slightly below 1
        }

    auto small = random_tensor(1, 2, 3, 3, 11, -1.5, 1.5);
    auto weight = random_tensor(1, 2, 3, 3, 12);
    check_gradients(small, [&](const NodeRef<double>& n) {
        return abs_sum(weighted(instance_norm(n), weight));
    }, 1e-5, 1e-7);
}

TEST_CASE("conv3x3 stride 1 and 2: forward shape, reference values, gradients") {
    auto x = random_tensor(1, 2, 4, 4, 13);
    auto w = random_tensor(3, 2, 3, 3, 14, -0.5, 0.5);
    auto b = random_tensor(1, 3, 1, 1, 15, -0.1, 0.1);

    auto out = conv3x3(constant(x), constant(w), constant(b), 1);
    REQUIRE(out->value.n == 1);
    REQUIRE(out->value.c == 3);
    REQUIRE(out->value.h == 4);
    REQUIRE(out->value.w == 4);

    // Direct loop reference for a couple of output positions.
    for (const auto& [oc, oy, ox] : {std::tuple{0, 0, 0}, std::tuple{2, 3, 1}, std::tuple{1, 2, 2}}) {
        double acc = b.v[static_cast<std::size_t>(oc)];
        for (int ic = 0; ic < 2; ++ic)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const int iy = oy + ky - 1, ix = ox + kx - 1;
                    if (iy < 0 || iy >= 4 || ix < 0 || ix >= 4) continue;
                    acc += w.at(oc, ic, ky, kx) * x.at(0, ic, iy, ix);
                }
        CHECK(out->value.at(0, oc, oy, ox) == Approx(acc).margin(1e-9));
    }

    auto out2 = conv3x3(constant(x), constant(w), constant(b), 2);
    REQUIRE(out2->value.h == 2);
    REQUIRE(out2->value.w == 2);

    auto weight_map = random_tensor(1, 3, 4, 4, 16);
    check_gradients(x, [&](const NodeRef<double>& n) {
        return abs_sum(weighted(conv3x3(n, constant(w), constant(b), 1), weight_map));
    }, 1e-5, 1e-7);

    // Weight and bias gradients.
    Tensor<double> wg(3, 2, 3, 3), bg(1, 3, 1, 1);
    auto wl = leaf(w, &wg);
    auto bl = leaf(b, &bg);
    auto loss = abs_sum(conv3x3(constant(x), wl, bl, 2));
    backward(loss);
    Rng pick(17);
    for (int i = 0; i < 8; ++i) {
        const auto idx = static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(w.numel()) - 1));
        const double h = 1e-6;
        auto probe = w;
        probe.v[idx] += h;
        const double up = abs_sum(conv3x3(constant(x), constant(probe), constant(b), 2))->value.v[0];
        probe.v[idx] -= 2 * h;
        const double down = abs_sum(conv3x3(constant(x), constant(probe), constant(b), 2))->value.v[0];
        CHECK(wg.v[idx] == Approx((up - down) / (2 * h)).margin(1e-5));
    }
}

TEST_CASE("maxpool2, upsample_nearest2, concat, slice gradients") {
    auto x = random_tensor(1, 2, 4, 4, 18);
    check_gradients(x, [](const NodeRef<double>& n) { return abs_sum(maxpool2(n)); });
    check_gradients(x, [](const NodeRef<double>& n) { return abs_sum(upsample_nearest2(n)); });

    auto other = random_tensor(1, 3, 4, 4, 19);
    check_gradients(x, [&](const NodeRef<double>& n) {
        return abs_sum(concat_channels(n, constant(other)));
    });

    auto batch = random_tensor(3, 2, 4, 4, 20);
    check_gradients(batch, [](const NodeRef<double>& n) {
        return scalar_add(abs_sum(slice_sample(n, 1)), abs_sum(slice_sample(n, 2)));
    });
}

TEST_CASE("upsample then maxpool round trip preserves values") {
    auto x = random_tensor(1, 1, 3, 3, 21, 0.1, 0.9);
    auto up = upsample_nearest2(constant(x));
    auto down = maxpool2(up);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(down->value.v[i] == Approx(x.v[i]));
}

TEST_CASE("gradient flows through a diamond-shaped graph correctly") {
    auto x = random_tensor(1, 1, 3, 3, 22);
    check_gradients(x, [](const NodeRef<double>& n) {
        auto a = affine(n, 2.0, 0.0);
        auto b = tanh_op(n);
        return abs_sum(add(a, b));
    });
}

TEST_CASE("backward ignores branches that do not reach the root") {
    auto x = random_tensor(1, 1, 2, 2, 23);
    Tensor<double> sink(1, 1, 2, 2);
    auto l = leaf(x, &sink);
    auto used = abs_sum(l);
    auto unused = tanh_op(l);  // never connected to the root
    (void)unused;
    backward(used);
    for (std::size_t i = 0; i < sink.numel(); ++i)
        CHECK(std::abs(sink.v[i]) == Approx(1.0));
}

TEST_CASE("float and double engines agree on a composite forward value") {
    auto xd = random_tensor(1, 2, 4, 4, 24);
    auto wd = random_tensor(2, 2, 3, 3, 25, -0.4, 0.4);
    auto bd = random_tensor(1, 2, 1, 1, 26, -0.1, 0.1);
    auto yd = abs_sum(tanh_op(instance_norm(conv3x3(constant(xd), constant(wd), constant(bd), 1))));

    auto xf = xd.cast<float>();
    auto wf = wd.cast<float>();
    auto bf = bd.cast<float>();
    auto yf = abs_sum(tanh_op(instance_norm(conv3x3(constant(xf), constant(wf), constant(bf), 1))));
    CHECK(static_cast<double>(yf->value.v[0]) == Approx(yd->value.v[0]).epsilon(1e-4));
}
