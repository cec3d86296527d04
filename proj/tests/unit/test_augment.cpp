#include <doctest.h>

#include <cmath>

#include "stone/augment.hpp"
#include "stone/preprocess.hpp"

using namespace stone;

namespace {

FingerprintImage image_with_visible(std::size_t n_real, std::size_t visible, Rng& rng) {
    std::vector<int> rssi(n_real, kMissingRssi);
    std::uniform_int_distribution<int> dbm(-99, 0);
    for (std::size_t i = 0; i < visible; ++i) rssi[i] = dbm(rng);
    std::shuffle(rssi.begin(), rssi.end(), rng);
    return to_image(rssi);
}

std::size_t zeros_in_real(const FingerprintImage& img) {
    return static_cast<std::size_t>(std::count(img.pixels.begin(), img.pixels.begin() + img.n_real, 0.0));
}

}  // namespace

TEST_SUITE("augment") {

TEST_CASE("turnoff fraction") {
    Rng rng(1);
    AugmentConfig cfg;
    cfg.p_upper = 0.0;
    for (int i = 0; i < 100; ++i) CHECK(draw_turnoff_fraction(cfg, rng) == 0.0);
    cfg.p_upper = 0.9;
    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double p = draw_turnoff_fraction(cfg, rng);
        REQUIRE(p >= 0.0);
        REQUIRE(p <= 0.9);
        sum += p;
    }
    CHECK(std::abs(sum / 100000 - 0.45) <= 0.01);
}

TEST_CASE("dropout removes exactly floor(p * visible)") {
    Rng rng(7);
    SUBCASE("ten visible, p = 0.9") {
        const auto img = image_with_visible(16, 10, rng);
        const auto out = apply_ap_dropout(img, 0.9, rng);
        CHECK(zeros_in_real(out) - zeros_in_real(img) == 9);
    }
    SUBCASE("p = 0 is a no-op") {
        const auto img = image_with_visible(30, 20, rng);
        CHECK(apply_ap_dropout(img, 0.0, rng) == img);
    }
    SUBCASE("all-zero image") {
        const auto img = to_image(std::vector<int>(7, kMissingRssi));
        CHECK(apply_ap_dropout(img, 0.8, rng) == img);
    }
    SUBCASE("randomized") {
        std::uniform_int_distribution<std::size_t> n_dist(1, 120);
        std::uniform_real_distribution<double> p_dist(0.0, 1.0);
        for (int trial = 0; trial < 500; ++trial) {
            const std::size_t n = n_dist(rng);
            const std::size_t v = std::uniform_int_distribution<std::size_t>(0, n)(rng);
            const double p = p_dist(rng);
            const auto img = image_with_visible(n, v, rng);
            const auto out = apply_ap_dropout(img, p, rng);
            CHECK(zeros_in_real(out) - zeros_in_real(img) == static_cast<std::size_t>(std::floor(p * v)));
            for (std::size_t i = 0; i < img.pixels.size(); ++i) {
                if (img.pixels[i] == 0.0) CHECK(out.pixels[i] == 0.0);
                if (out.pixels[i] != 0.0) CHECK(out.pixels[i] == img.pixels[i]);
            }
        }
    }
    SUBCASE("out of range fraction") {
        const auto img = image_with_visible(4, 4, rng);
        CHECK_THROWS_AS(apply_ap_dropout(img, 1.5, rng), Error);
    }
}

TEST_CASE("dropout picks pixels uniformly") {
    Rng rng(11);
    const auto img = image_with_visible(9, 9, rng);
    std::vector<int> hits(9, 0);
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
        const auto out = apply_ap_dropout(img, 0.34, rng);  // floor(3.06) = 3
        for (std::size_t i = 0; i < 9; ++i) hits[i] += out.pixels[i] == 0.0;
    }
    // Each pixel is chosen with probability 1/3; allow 5 standard deviations.
    const double sd = std::sqrt(trials * (1.0 / 3) * (2.0 / 3));
    for (int h : hits) CHECK(std::abs(h - trials / 3.0) < 5 * sd);
}

TEST_CASE("gaussian noise") {
    Rng rng(5);
    const auto img = to_image(std::vector<int>{-50, -50, -50, -50, -50});
    CHECK(add_gaussian_noise(img, 0.0, rng) == img);

    double sum = 0.0, sq = 0.0;
    const int draws = 100000;
    for (int i = 0; i < draws / 5; ++i) {
        const auto out = add_gaussian_noise(img, 0.1, rng);
        for (std::size_t k = 0; k < 5; ++k) {
            const double d = out.pixels[k] - 0.5;  // clamping cannot bind at 5 sigma from 0.5
            sum += d;
            sq += d * d;
        }
        for (std::size_t k = 5; k < 9; ++k) REQUIRE(out.pixels[k] == 0.0);
    }
    const double mean = sum / draws;
    CHECK(std::abs(std::sqrt(sq / draws - mean * mean) - 0.1) < 0.002);

    const auto bright = to_image(std::vector<int>{0, 0, 0, 0});
    for (int i = 0; i < 100; ++i)
        for (double px : add_gaussian_noise(bright, 5.0, rng).pixels) CHECK((px >= 0.0 && px <= 1.0));
}

TEST_CASE("transforms are deterministic given the seed") {
    Rng a(99), b(99);
    Rng src(1);
    const auto img = image_with_visible(25, 20, src);
    CHECK(apply_ap_dropout(img, 0.5, a) == apply_ap_dropout(img, 0.5, b));
    CHECK(add_gaussian_noise(img, 0.1, a) == add_gaussian_noise(img, 0.1, b));
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS((AugmentConfig{1.2, 0.1}.validate()), Error);
    CHECK_THROWS_AS((AugmentConfig{0.5, -0.1}.validate()), Error);
    CHECK_NOTHROW((AugmentConfig{}.validate()));
}

}  // TEST_SUITE
