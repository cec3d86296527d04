#include "stone/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace stone {

double normalize_rssi(double dbm) noexcept {
    return std::clamp((dbm - kMissingRssi) / static_cast<double>(kMaxRssi - kMissingRssi), 0.0, 1.0);
}

std::size_t image_side(std::size_t n_real) noexcept {
    auto side = static_cast<std::size_t>(std::sqrt(static_cast<double>(n_real)));
    while (side * side < n_real) ++side;
    while (side > 0 && (side - 1) * (side - 1) >= n_real) --side;
    return side;
}

FingerprintImage to_image(std::span<const int> rssi) {
    if (rssi.empty()) throw Error("cannot build an image from an empty rssi vector");
    FingerprintImage img;
    img.n_real = rssi.size();
    img.side = image_side(img.n_real);
    img.pixels.assign(img.side * img.side, 0.0);
    std::transform(rssi.begin(), rssi.end(), img.pixels.begin(), [](int v) { return normalize_rssi(v); });
    return img;
}

std::vector<double> normalized_vector(std::span<const int> rssi) {
    std::vector<double> out(rssi.size());
    std::transform(rssi.begin(), rssi.end(), out.begin(), [](int v) { return normalize_rssi(v); });
    return out;
}

}  // namespace stone
