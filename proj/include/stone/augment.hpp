#pragma once

#include "stone/preprocess.hpp"
#include "stone/random.hpp"

namespace stone {

struct AugmentConfig {
    double p_upper = 0.90;      // largest fraction of visible APs switched off per image
    double noise_sigma = 0.10;  // additive Gaussian noise on unit-scale pixels

    void validate() const;
};

/// Uniform draw from [0, p_upper].
double draw_turnoff_fraction(const AugmentConfig& cfg, Rng& rng);

/// Zeroes floor(p * v) of the v visible (non-zero, non-padding) pixels,
/// chosen uniformly without replacement.
FingerprintImage apply_ap_dropout(FingerprintImage img, double p, Rng& rng);

/// Adds N(0, sigma^2) to every real-AP pixel and clamps to [0, 1]. Padding
/// stays 0.
FingerprintImage add_gaussian_noise(FingerprintImage img, double sigma, Rng& rng);

}  // namespace stone
