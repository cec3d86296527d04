#include "stone/augment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace stone {

void AugmentConfig::validate() const {
    if (!(p_upper >= 0.0 && p_upper <= 1.0)) throw Error("p_upper must lie in [0, 1]");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw Error("noise_sigma must be non-negative");
}

double draw_turnoff_fraction(const AugmentConfig& cfg, Rng& rng) {
    if (cfg.p_upper <= 0.0) return 0.0;
    return std::uniform_real_distribution<double>(0.0, cfg.p_upper)(rng);
}

FingerprintImage apply_ap_dropout(FingerprintImage img, double p, Rng& rng) {
    if (p < 0.0 || p > 1.0) throw Error("dropout fraction must lie in [0, 1]");
    std::vector<std::size_t> visible;
    for (std::size_t i = 0; i < img.n_real; ++i)
        if (img.pixels[i] != 0.0) visible.push_back(i);
    const auto count = static_cast<std::size_t>(std::floor(p * static_cast<double>(visible.size())));
    // Partial Fisher-Yates: the first `count` slots become a uniform sample.
    for (std::size_t j = 0; j < count; ++j) {
        std::uniform_int_distribution<std::size_t> pick(j, visible.size() - 1);
        std::swap(visible[j], visible[pick(rng)]);
        img.pixels[visible[j]] = 0.0;
    }
    return img;
}

FingerprintImage add_gaussian_noise(FingerprintImage img, double sigma, Rng& rng) {
    if (sigma < 0.0) throw Error("noise sigma must be non-negative");
    if (sigma == 0.0) return img;
    std::normal_distribution<double> noise(0.0, sigma);
    for (std::size_t i = 0; i < img.n_real; ++i) img.pixels[i] = std::clamp(img.pixels[i] + noise(rng), 0.0, 1.0);
    return img;
}

}  // namespace stone
