#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stone/data_model.hpp"

namespace stone {

/// Square, zero-padded, unit-scaled image of one fingerprint. Pixel i of the
/// row-major buffer holds AP i of the registry; pixels at or past n_real are
/// padding and always 0.
struct FingerprintImage {
    std::size_t side = 0;
    std::size_t n_real = 0;
    std::vector<double> pixels;

    double at(std::size_t row, std::size_t col) const { return pixels[row * side + col]; }

    friend bool operator==(const FingerprintImage&, const FingerprintImage&) = default;
};

/// Linear map of [-100, 0] dBm onto [0, 1], clamped outside that range.
double normalize_rssi(double dbm) noexcept;

/// Smallest s with s * s >= n_real.
std::size_t image_side(std::size_t n_real) noexcept;

FingerprintImage to_image(std::span<const int> rssi);
inline FingerprintImage to_image(const Fingerprint& fp) { return to_image(fp.rssi); }

/// Normalized RSSI vector without padding (the raw-feature baseline input).
std::vector<double> normalized_vector(std::span<const int> rssi);

}  // namespace stone
