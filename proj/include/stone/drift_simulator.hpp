#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stone/data_model.hpp"

namespace stone {

/// Synthetic longitudinal survey: RPs on a regular grid, APs scattered at
/// random, log-distance path loss with per-CI AP bias and per-scan noise,
/// and a cumulative AP removal schedule.
struct SimConfig {
    double width = 48.0;   // meters
    double height = 1.0;   // meters
    double rp_spacing = 1.0;
    double ap_margin = 5.0;  // APs may sit this far outside the RP extent
    std::size_t n_aps = 50;
    double tx_power_dbm = -40.0;  // received power at 1 m
    double path_loss_exponent = 3.0;
    double shadow_sigma_db = 2.0;
    double drift_sigma_db = 1.0;
    int n_cis = 16;
    int fpr = 6;
    /// ci -> fraction of APs removed from that ci onward. Fractions must be
    /// non-decreasing in ci; between keys the last value holds.
    std::map<int, double> removal_schedule{{11, 0.2}};
    std::uint64_t seed = 0;

    void validate() const;

    /// Removal fraction in effect at `ci`.
    double removal_fraction(int ci) const;
};

struct GroundTruth {
    std::vector<std::pair<double, double>> ap_positions;
    std::vector<std::vector<std::size_t>> removed;  // per ci, sorted AP indices
    std::vector<std::vector<double>> bias_db;        // per ci, per AP

    /// First ci at which the AP is removed, or -1.
    int removed_at(std::size_t ap) const;
};

struct SimulatedSurvey {
    FingerprintDataset dataset;
    GroundTruth truth;
};

SimulatedSurvey generate(const SimConfig& cfg);

/// "office-like" or "uji-like".
SimConfig preset(const std::string& name);

/// Noise-free received power (before clamping and rounding).
double path_loss_rssi(const SimConfig& cfg, double distance_m) noexcept;

/// CSV with header ap_id,x_m,y_m,removed_at_ci (-1 when never removed).
void save_ground_truth(const FingerprintDataset& dataset, const GroundTruth& truth,
                       const std::filesystem::path& path);

}  // namespace stone
