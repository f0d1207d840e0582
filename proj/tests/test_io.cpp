#include <catch2/catch_amalgamated.hpp>

#include "delight/image_io.hpp"

#include "support/testutil.hpp"

using namespace delight;
using namespace delight::imaging;

TEST_CASE("16-bit PNG round trip preserves values to one quantization step") {
    const auto dir = testutil::scratch_dir("png16");
    auto img = testutil::random_image(20, 13, 3, 1);
    write_png(dir + "/a.png", img, 16);
    auto back = read_png(dir + "/a.png");
    REQUIRE(back.height() == 20);
    REQUIRE(back.width() == 13);
    REQUIRE(back.channels() == 3);
    CHECK(testutil::max_abs_diff(back, img) <= 0.5 / 65535.0 + 1e-7);
}

TEST_CASE("8-bit grayscale PNG round trip") {
    const auto dir = testutil::scratch_dir("png8");
    auto img = testutil::random_image(7, 9, 1, 2);
    write_png(dir + "/m.png", img, 8);
    auto back = read_png(dir + "/m.png");
    REQUIRE(back.channels() == 1);
    CHECK(testutil::max_abs_diff(back, img) <= 0.5 / 255.0 + 1e-7);
}

TEST_CASE("PNG writes are byte-identical across runs") {
    const auto dir = testutil::scratch_dir("pngdet");
    auto img = testutil::random_image(16, 16, 3, 3);
    write_png(dir + "/r1.png", img, 16);
    write_png(dir + "/r2.png", img, 16);
    CHECK(testutil::files_identical(dir + "/r1.png", dir + "/r2.png"));
}

TEST_CASE("rawf round trip is lossless including negative offsets") {
    const auto dir = testutil::scratch_dir("rawf");
    auto img = testutil::random_image(6, 5, 3, 4, -1.0f, 1.0f).with_range(Range::offset);
    write_rawf(dir + "/o.rawf", img);
    auto back = read_rawf(dir + "/o.rawf", Range::offset);
    CHECK(testutil::max_abs_diff(back, img) == 0.0);
}

TEST_CASE("missing and corrupt files raise the documented error types") {
    const auto dir = testutil::scratch_dir("ioerr");
    CHECK_THROWS_AS(read_png(dir + "/nope.png"), missing_artifact_error);
    {
        std::ofstream os(dir + "/bad.png", std::ios::binary);
        os << "not a png at all";
    }
    CHECK_THROWS_AS(read_png(dir + "/bad.png"), bad_input_error);
    {
        std::ofstream os(dir + "/trunc.rawf", std::ios::binary);
        const std::uint32_t hdr[3] = {4, 4, 3};
        os.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    }
    CHECK_THROWS_AS(read_rawf(dir + "/trunc.rawf", Range::unit), bad_input_error);
}
