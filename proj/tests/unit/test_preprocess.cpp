#include <doctest.h>

#include <random>

#include "stone/preprocess.hpp"

using namespace stone;

TEST_SUITE("preprocess") {

TEST_CASE("normalize endpoints and midpoint") {
    CHECK(normalize_rssi(-100) == 0.0);
    CHECK(normalize_rssi(0) == 1.0);
    CHECK(normalize_rssi(-50) == 0.5);
    CHECK(normalize_rssi(-130) == 0.0);
    CHECK(normalize_rssi(12) == 1.0);
}

TEST_CASE("normalize is monotone") {
    for (int d = -120; d < 20; ++d) CHECK(normalize_rssi(d) <= normalize_rssi(d + 1));
}

TEST_CASE("padding to the next square") {
    const std::vector<int> five{-10, -20, -30, -40, -50};
    const auto img5 = to_image(five);
    CHECK(img5.side == 3);
    CHECK(img5.n_real == 5);
    CHECK(img5.pixels == std::vector<double>{0.9, 0.8, 0.7, 0.6, 0.5, 0, 0, 0, 0});

    const std::vector<int> nine{-10, -100, -30, -40, -100, -60, -70, -80, -90};
    const auto img9 = to_image(nine);
    CHECK(img9.side == 3);
    for (std::size_t i = 0; i < 9; ++i) CHECK((img9.pixels[i] == 0.0) == (nine[i] == -100));

    const auto img10 = to_image(std::vector<int>(10, -20));
    CHECK(img10.side == 4);
    CHECK(std::count(img10.pixels.begin() + 10, img10.pixels.end(), 0.0) == 6);
    CHECK(std::count(img10.pixels.begin(), img10.pixels.end(), 0.0) == 6);
}

TEST_CASE("image_side") {
    CHECK(image_side(1) == 1);
    CHECK(image_side(2) == 2);
    CHECK(image_side(4) == 2);
    CHECK(image_side(17) == 5);
    CHECK(image_side(520) == 23);
    for (std::size_t n = 1; n < 3000; ++n) {
        const std::size_t s = image_side(n);
        CHECK(s * s >= n);
        CHECK((s - 1) * (s - 1) < n);
    }
}

TEST_CASE("AP i lands at pixel (i div s, i mod s)") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> len(1, 200);
    std::uniform_int_distribution<int> dbm(-100, 0);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<int> v(len(rng));
        for (int& x : v) x = dbm(rng);
        const auto img = to_image(v);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(img.at(i / img.side, i % img.side) == normalize_rssi(v[i]));
        for (std::size_t i = v.size(); i < img.pixels.size(); ++i) CHECK(img.pixels[i] == 0.0);
    }
}

TEST_CASE("empty vector is rejected") {
    CHECK_THROWS_AS(to_image(std::vector<int>{}), Error);
}

TEST_CASE("normalized_vector has no padding") {
    CHECK(normalized_vector(std::vector<int>{-100, 0, -75}) == std::vector<double>{0.0, 1.0, 0.25});
}

}  // TEST_SUITE
