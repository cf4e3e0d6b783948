#include "doctest.h"

#include <cmath>
#include <fstream>

#include "encryptgan/errors.hpp"
#include "encryptgan/imagedata.hpp"
#include "support.hpp"

using namespace egan;

namespace {

Raster solid(int h, int w, std::uint8_t v) { return Raster{h, w, std::vector<std::uint8_t>(std::size_t(h) * w * 3, v)}; }

double sample_std(const Image& img) {
    double sum = 0.0, sq = 0.0;
    const auto v = img.pixels().values();
    for (float x : v) {
        sum += x;
        sq += double(x) * x;
    }
    const double n = double(v.size());
    const double mean = sum / n;
    return std::sqrt(sq / n - mean * mean);
}

}  // namespace

TEST_CASE("image invariants") {
    CHECK_THROWS_AS(Image(Tensor({1, 1, 4, 4})), ShapeError);
    CHECK_THROWS_AS(Image(Tensor({1, 3, 4, 4}, 1.5f)), ArgumentError);
    CHECK_THROWS_AS(Image(Tensor({1, 3, 4, 4}, NAN)), ArgumentError);
    CHECK_NOTHROW(Image(Tensor({1, 3, 4, 4}, -1.0f)));
    CHECK_THROWS_AS(require_network_size({6, 8}, "img"), ShapeError);
}

TEST_CASE("load_image maps black and white to the range ends") {
    const auto dir = test::scratch_dir("load");
    write_png(solid(20, 20, 0), dir / "black.png");
    write_png(solid(20, 20, 255), dir / "white.png");
    const Image black = load_image(dir / "black.png", {64, 64});
    const Image white = load_image(dir / "white.png", {64, 64});
    CHECK(black.size() == Size2{64, 64});
    CHECK(black.pixels().min() == -1.0f);
    CHECK(black.pixels().max() == -1.0f);
    CHECK(white.pixels().min() == 1.0f);
    CHECK(white.pixels().max() == 1.0f);
}

TEST_CASE("load_image bilinear transition band") {
    // Reference: corner-aligned bilinear from 128 to 64 samples source column
    // 127/63 * j. Every output column whose two taps fall on one side of the
    // edge is exactly -1 or +1; at most the columns straddling it mix.
    const auto dir = test::scratch_dir("edge");
    Raster r = solid(128, 128, 0);
    for (int y = 0; y < 128; ++y)
        for (int x = 64; x < 128; ++x)
            for (int c = 0; c < 3; ++c) r.rgb[(std::size_t(y) * 128 + x) * 3 + c] = 255;
    write_png(r, dir / "edge.png");
    const Image img = load_image(dir / "edge.png", {64, 64});
    int band = 0;
    for (int x = 0; x < 64; ++x) {
        const double src = 127.0 / 63.0 * x;
        const int x0 = int(std::floor(src));
        const int x1 = std::min(x0 + 1, 127);
        const double f = src - x0;
        const double a = x0 < 64 ? -1.0 : 1.0;
        const double b = x1 < 64 ? -1.0 : 1.0;
        const double expected = a + (b - a) * f;
        for (int y = 0; y < 64; y += 9) CHECK(img.pixels().at(0, 1, y, x) == doctest::Approx(expected).epsilon(1e-5));
        const float v = img.pixels().at(0, 0, 10, x);
        if (v > -1.0f && v < 1.0f) ++band;
        if (x < 31) CHECK(v == -1.0f);
        if (x > 32) CHECK(v == 1.0f);
    }
    CHECK(band <= 2);
}

TEST_CASE("load_image errors") {
    const auto dir = test::scratch_dir("load_err");
    CHECK_THROWS_AS(load_image(dir / "missing.png", {8, 8}), NotFoundError);
    std::ofstream(dir / "junk.png") << "not a png";
    CHECK_THROWS_AS(load_image(dir / "junk.png", {8, 8}), FormatError);
}

TEST_CASE("save_image quantization") {
    const auto dir = test::scratch_dir("save");
    save_image(Image::filled({8, 8}, 0.0f), dir / "zero.png");
    const Raster r = read_png(dir / "zero.png");
    for (auto v : r.rgb) CHECK(v == 128);

    const Image img = test::random_image(16, 12, 3);
    save_image(img, dir / "rand.png");
    const Image back = load_image(dir / "rand.png", img.size());
    float worst = 0.0f;
    for (std::int64_t i = 0; i < img.pixels().numel(); ++i)
        worst = std::max(worst, std::abs(img.pixels()[i] - back.pixels()[i]));
    CHECK(worst <= 2.0f / 255.0f + 1e-6f);
    // Parent directories are created, but not through a regular file.
    CHECK_NOTHROW(save_image(img, dir / "nested" / "x.png"));
    CHECK_THROWS_AS(save_image(img, dir / "rand.png" / "x.png"), IoError);
}

TEST_CASE("paste_message definition") {
    const Image cover = Image::filled({4, 4}, -1.0f);
    const Image msg = Image::filled({2, 2}, 1.0f);
    const auto comp = paste_message(cover, msg, {1, 1, 2, 2}, "m");
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                const bool inside = y >= 1 && y <= 2 && x >= 1 && x <= 2;
                CHECK(comp.image.pixels().at(0, c, y, x) == (inside ? 1.0f : -1.0f));
            }
    CHECK(cover == Image::filled({4, 4}, -1.0f));
    CHECK(comp.message_id == "m");

    // identity case
    const Image c2 = test::random_image(8, 8, 1);
    const auto same = paste_message(c2, crop_region(c2, {2, 3, 4, 4}), {2, 3, 4, 4});
    CHECK(same.image == c2);

    CHECK_THROWS_AS(paste_message(cover, msg, {3, 3, 2, 2}), BoundsError);
    CHECK_THROWS_AS(paste_message(cover, msg, {0, 0, 3, 3}), ShapeError);
}

TEST_CASE("paste/crop round trip property") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 100; ++i) {
        const int h = 4 + int(rng() % 20), w = 4 + int(rng() % 20);
        const int mh = 1 + int(rng() % h), mw = 1 + int(rng() % w);
        const Placement p{int(rng() % (h - mh + 1)), int(rng() % (w - mw + 1)), mh, mw};
        const Image cover = test::random_image(h, w, rng());
        const Image msg = test::random_image(mh, mw, rng());
        CHECK(crop_region(paste_message(cover, msg, p).image, p) == msg);
    }
}

TEST_CASE("crop_region") {
    const Image img = test::random_image(8, 6, 4);
    CHECK(crop_region(img, {0, 0, 8, 6}) == img);
    const Image corner = crop_region(img, {0, 0, 1, 1});
    CHECK(corner.size() == Size2{1, 1});
    for (int c = 0; c < 3; ++c) CHECK(corner.pixels().at(0, c, 0, 0) == img.pixels().at(0, c, 0, 0));
    CHECK_THROWS_AS(crop_region(img, {7, 0, 2, 2}), BoundsError);
    CHECK_THROWS_AS(crop_region(img, {0, 0, 0, 2}), BoundsError);
}

TEST_CASE("add_gaussian_noise") {
    const Image img = test::random_image(8, 8, 5);
    CHECK(add_gaussian_noise(img, 0.0, 9) == img);
    CHECK(add_gaussian_noise(img, 0.05, 9) == add_gaussian_noise(img, 0.05, 9));
    CHECK_FALSE(add_gaussian_noise(img, 0.05, 9) == add_gaussian_noise(img, 0.05, 10));
    CHECK_THROWS_AS(add_gaussian_noise(img, -0.1, 9), ArgumentError);

    const Image zero = Image::filled({578, 577}, 0.0f);  // ~10^6 values
    const double s = sample_std(add_gaussian_noise(zero, 0.1, 1));
    CHECK(s >= 0.098);
    CHECK(s <= 0.102);

    const Image clamped = add_gaussian_noise(Image::filled({16, 16}, 1.0f), 0.5, 2);
    CHECK(clamped.pixels().max() <= 1.0f);
}

TEST_CASE("sample_placement") {
    Rng rng(3);
    for (int i = 0; i < 20; ++i) CHECK(sample_placement({8, 8}, {8, 8}, rng) == Placement{0, 0, 8, 8});
    double top = 0.0, left = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const auto p = sample_placement({64, 64}, {32, 32}, rng);
        CHECK((p.top >= 0 && p.top <= 32 && p.left >= 0 && p.left <= 32));
        top += p.top;
        left += p.left;
    }
    // Uniform{0..32}: variance (33^2 - 1) / 12
    const double sigma = std::sqrt((33.0 * 33.0 - 1.0) / 12.0 / n);
    CHECK(std::abs(top / n - 16.0) < 3 * sigma);
    CHECK(std::abs(left / n - 16.0) < 3 * sigma);
    CHECK_THROWS_AS(sample_placement({64, 64}, {65, 65}, rng), ShapeError);
}

TEST_CASE("DomainDataset ordering is seeded") {
    const auto dir = test::scratch_dir("dataset");
    for (int i = 0; i < 5; ++i) write_png(solid(8, 8, std::uint8_t(i * 40)), dir / ("img" + std::to_string(4 - i) + ".png"));
    DomainDataset ds(dir, DomainLabel::X, {8, 8});
    REQUIRE(ds.size() == 5);
    CHECK(ds.id(0) == "img0.png");
    CHECK(ds.order(7) == ds.order(7));
    CHECK(ds.at(0).pixels().min() == doctest::Approx(160.0 / 127.5 - 1.0));
    CHECK_THROWS_AS(DomainDataset(dir / "missing", DomainLabel::Y, {8, 8}), NotFoundError);
}
