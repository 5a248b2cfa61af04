#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "morphnas/morphology.hpp"
#include "test_helpers.hpp"

using namespace morphnas;

namespace {

// Definitional nested-loop oracles.
GrayImage erode_oracle(const GrayImage& f, const StructuringElement& se) {
    GrayImage out(f.height, f.width);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            float best = std::numeric_limits<float>::infinity();
            for (const auto& e : se.entries) {
                const int sy = y + e.di, sx = x + e.dj;
                const float v = (sy < 0 || sy >= f.height || sx < 0 || sx >= f.width)
                                    ? std::numeric_limits<float>::infinity()
                                    : f.at(sy, sx);
                best = std::min(best, v - e.weight);
            }
            out.at(y, x) = best;
        }
    return out;
}

bool images_equal(const GrayImage& a, const GrayImage& b) {
    return a.height == b.height && a.width == b.width && a.pixels == b.pixels;
}

bool leq(const GrayImage& a, const GrayImage& b) {
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
        if (a.pixels[i] > b.pixels[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("erode: single-point flat SE is the identity") {
    std::mt19937 rng(1);
    const auto img = testutil::random_image(6, 9, rng);
    CHECK(images_equal(erode(img, StructuringElement::single_point()), img));
    CHECK(images_equal(dilate(img, StructuringElement::single_point()), img));
}

TEST_CASE("erode: constant image stays constant under a flat SE") {
    GrayImage img(5, 5, 3.25f);
    const auto out = erode(img, StructuringElement::cross(1));
    for (float v : out.pixels) CHECK(v == 3.25f);
}

TEST_CASE("erode: matches the nested-loop oracle exactly on random images") {
    std::mt19937 rng(2);
    for (int t = 0; t < 20; ++t) {
        const auto img = testutil::random_image(8, 8, rng);
        const auto se = StructuringElement::cross(1);
        CHECK(images_equal(erode(img, se), erode_oracle(img, se)));
    }
}

TEST_CASE("erode/dilate: empty SE rejected") {
    GrayImage img(4, 4, 0.f);
    StructuringElement empty;
    CHECK_THROWS_AS(erode(img, empty), std::invalid_argument);
    CHECK_THROWS_AS(dilate(img, empty), std::invalid_argument);
}

TEST_CASE("dilate: impulse spreads into the reflected SE shape") {
    GrayImage img(7, 7, 0.f);
    img.at(3, 3) = 1.f;
    const auto out = dilate(img, StructuringElement::square(1));
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 7; ++x) {
            const bool inside = std::abs(y - 3) <= 1 && std::abs(x - 3) <= 1;
            CHECK(out.at(y, x) == (inside ? 1.f : 0.f));
        }
}

TEST_CASE("duality: dilate(f) == -erode(-f, reflected SE) including weighted SEs") {
    std::mt19937 rng(3);
    StructuringElement se;
    se.entries = {{0, 0, 0.3f}, {-1, 0, 0.7f}, {0, 1, -0.2f}, {1, 1, 0.1f}};
    for (int t = 0; t < 25; ++t) {
        const auto img = testutil::random_image(8, 6, rng, -2.f, 2.f);
        GrayImage neg = img;
        for (auto& p : neg.pixels) p = -p;
        const auto left = dilate(img, se);
        auto right = erode(neg, se.reflected());
        for (auto& p : right.pixels) p = -p;
        CHECK(images_equal(left, right));
    }
}

TEST_CASE("opening/closing: definitions and idempotence") {
    std::mt19937 rng(4);
    const auto se = StructuringElement::square(1);
    GrayImage constant(6, 6, 1.5f);
    CHECK(images_equal(opening(constant, se), constant));
    for (int t = 0; t < 15; ++t) {
        const auto img = testutil::random_image(9, 9, rng);
        const auto once = opening(img, se);
        CHECK(images_equal(opening(once, se), once));
        const auto closed = closing(img, se);
        CHECK(images_equal(closing(closed, se), closed));
        // anti-extensivity / extensivity for a flat SE containing the origin
        CHECK(leq(once, img));
        CHECK(leq(img, closed));
    }
}

TEST_CASE("gradients: constant image has zero gradients") {
    GrayImage img(5, 5, 2.f);
    const auto g = gradients(img, StructuringElement::cross(1));
    for (float v : g.external.pixels) CHECK(v == 0.f);
    for (float v : g.internal.pixels) CHECK(v == 0.f);
    for (float v : g.combined.pixels) CHECK(v == 0.f);
}

TEST_CASE("gradients: step edge produces a width-2 band in G_b") {
    GrayImage img(8, 8, 0.f);
    for (int y = 0; y < 8; ++y)
        for (int x = 4; x < 8; ++x) img.at(y, x) = 1.f;  // vertical step at x=4
    const auto g = gradients(img, StructuringElement::square(1));
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const bool band = x == 3 || x == 4;
            CHECK(g.combined.at(y, x) == (band ? 1.f : 0.f));
        }
}

TEST_CASE("gradients: G_b == G_e + G_i identically, and G_b >= 0 for flat SE with origin") {
    std::mt19937 rng(5);
    for (int t = 0; t < 25; ++t) {
        const auto img = testutil::random_image(8, 8, rng, -3.f, 3.f);
        const auto g = gradients(img, StructuringElement::disk(2));
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            CHECK(g.combined.pixels[i] == doctest::Approx(g.external.pixels[i] + g.internal.pixels[i]));
            CHECK(g.combined.pixels[i] >= 0.f);
        }
    }
}

TEST_CASE("increasingness: f <= g implies eroded/dilated order is preserved") {
    std::mt19937 rng(6);
    const auto se = StructuringElement::cross(2);
    for (int t = 0; t < 25; ++t) {
        const auto f = testutil::random_image(7, 7, rng);
        GrayImage g = f;
        std::uniform_real_distribution<float> bump(0.f, 1.f);
        for (auto& p : g.pixels) p += bump(rng);
        CHECK(leq(erode(f, se), erode(g, se)));
        CHECK(leq(dilate(f, se), dilate(g, se)));
    }
}

TEST_CASE("extensivity: erosion <= f <= dilation for flat SE containing the origin") {
    std::mt19937 rng(7);
    const auto se = StructuringElement::disk(1);
    for (int t = 0; t < 25; ++t) {
        const auto f = testutil::random_image(6, 6, rng, -1.f, 1.f);
        CHECK(leq(erode(f, se), f));
        CHECK(leq(f, dilate(f, se)));
    }
}

TEST_CASE("disk(3) dilation brightens and erosion darkens the mean") {
    std::mt19937 rng(8);
    const auto se = StructuringElement::disk(3);
    const auto f = testutil::random_image(16, 16, rng);
    auto mean_of = [](const GrayImage& img) {
        double m = 0;
        for (float v : img.pixels) m += v;
        return m / img.pixels.size();
    };
    CHECK(mean_of(dilate(f, se)) >= mean_of(f));
    CHECK(mean_of(f) >= mean_of(erode(f, se)));
}

TEST_CASE("SE presets and parsing") {
    CHECK(StructuringElement::square(1).entries.size() == 9);
    CHECK(StructuringElement::cross(1).entries.size() == 5);
    CHECK(StructuringElement::disk(1).entries.size() == 5);
    CHECK(StructuringElement::disk(3).entries.size() == 29);
    CHECK(StructuringElement::parse("square:0").entries.size() == 1);  // single point
    CHECK(StructuringElement::parse("disk:3").entries.size() == 29);
    CHECK_THROWS_AS(StructuringElement::parse("blob:3"), std::invalid_argument);
    CHECK_THROWS_AS(StructuringElement::parse("disk"), std::invalid_argument);
    CHECK_THROWS_AS(StructuringElement::parse("disk:x"), std::invalid_argument);
    CHECK(StructuringElement::square(1).origin_included());
    CHECK(StructuringElement::square(1).flat());
}

TEST_CASE("pgm: 8-bit and 16-bit round-trips are bit-exact") {
    std::mt19937 rng(9);
    GrayImage img(5, 7);
    std::uniform_int_distribution<int> d8(0, 255);
    for (auto& p : img.pixels) p = static_cast<float>(d8(rng));
    write_pgm(img, "test_img8.pgm", 8);
    const auto back8 = read_pgm("test_img8.pgm");
    CHECK(back8.pixels == img.pixels);

    std::uniform_int_distribution<int> d16(0, 65535);
    for (auto& p : img.pixels) p = static_cast<float>(d16(rng));
    write_pgm(img, "test_img16.pgm", 16);
    const auto back16 = read_pgm("test_img16.pgm");
    CHECK(back16.pixels == img.pixels);
    std::remove("test_img8.pgm");
    std::remove("test_img16.pgm");
}

TEST_CASE("pgm: comments in header are skipped; bad magic rejected") {
    {
        std::ofstream out("test_comment.pgm", std::ios::binary);
        out << "P5\n# a comment line\n2 2\n255\n";
        const unsigned char px[4] = {0, 64, 128, 255};
        out.write(reinterpret_cast<const char*>(px), 4);
    }
    const auto img = read_pgm("test_comment.pgm");
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.pixels == std::vector<float>{0, 64, 128, 255});
    {
        std::ofstream out("test_bad.pgm", std::ios::binary);
        out << "P6\n2 2\n255\n";
    }
    CHECK_THROWS_AS(read_pgm("test_bad.pgm"), std::runtime_error);
    std::remove("test_comment.pgm");
    std::remove("test_bad.pgm");
}
