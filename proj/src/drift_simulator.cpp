#include "stone/drift_simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "csv_util.hpp"
#include "stone/random.hpp"

namespace stone {

void SimConfig::validate() const {
    if (!(width > 0.0) || !(height > 0.0) || !(rp_spacing > 0.0)) throw Error("extents and spacing must be positive");
    if (!(ap_margin >= 0.0)) throw Error("ap_margin must be non-negative");
    if (n_aps == 0) throw Error("n_aps must be positive");
    if (n_cis < 1 || fpr < 1) throw Error("n_cis and fpr must be positive");
    if (!(path_loss_exponent >= 1.5 && path_loss_exponent <= 6.0))
        throw Error("path_loss_exponent must lie in [1.5, 6]");
    if (!(shadow_sigma_db >= 0.0) || !(drift_sigma_db >= 0.0)) throw Error("noise levels must be non-negative");
    double previous = 0.0;
    for (const auto& [ci, fraction] : removal_schedule) {
        if (ci < 0) throw Error("removal schedule keys must be non-negative");
        if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("removal fractions must lie in [0, 1]");
        if (fraction < previous) throw Error("removal fractions must be non-decreasing over ci");
        previous = fraction;
    }
}

double SimConfig::removal_fraction(int ci) const {
    double fraction = 0.0;
    for (const auto& [key, value] : removal_schedule) {
        if (key > ci) break;
        fraction = value;
    }
    return fraction;
}

int GroundTruth::removed_at(std::size_t ap) const {
    for (std::size_t ci = 0; ci < removed.size(); ++ci)
        if (std::binary_search(removed[ci].begin(), removed[ci].end(), ap)) return static_cast<int>(ci);
    return -1;
}

double path_loss_rssi(const SimConfig& cfg, double distance_m) noexcept {
    return cfg.tx_power_dbm - 10.0 * cfg.path_loss_exponent * std::log10(std::max(distance_m, 1.0));
}

SimulatedSurvey generate(const SimConfig& cfg) {
    cfg.validate();
    const auto nx = static_cast<std::size_t>(std::floor(cfg.width / cfg.rp_spacing + 1e-9));
    const auto ny = static_cast<std::size_t>(std::floor(cfg.height / cfg.rp_spacing + 1e-9));
    const std::size_t columns = std::max<std::size_t>(nx, 1);
    const std::size_t rows = std::max<std::size_t>(ny, 1);
    if (columns * rows < 2) throw Error("configuration places fewer than 2 reference points");

    SimulatedSurvey out;
    auto& plan = out.dataset.floorplan;
    for (std::size_t j = 0; j < rows; ++j)
        for (std::size_t i = 0; i < columns; ++i)
            plan.rps.push_back({static_cast<int>(j * columns + i), (static_cast<double>(i) + 0.5) * cfg.rp_spacing,
                                (static_cast<double>(j) + 0.5) * cfg.rp_spacing});

    const std::size_t digits = std::to_string(cfg.n_aps - 1).size();
    for (std::size_t a = 0; a < cfg.n_aps; ++a) {
        std::string id = std::to_string(a);
        plan.ap_registry.push_back({"AP" + std::string(std::max(digits, std::size_t{3}) - id.size(), '0') + id});
    }

    Rng rng(cfg.seed);
    std::uniform_real_distribution<double> ux(-cfg.ap_margin, cfg.width + cfg.ap_margin);
    std::uniform_real_distribution<double> uy(-cfg.ap_margin, cfg.height + cfg.ap_margin);
    auto& truth = out.truth;
    for (std::size_t a = 0; a < cfg.n_aps; ++a) {
        const double x = ux(rng);
        const double y = uy(rng);
        truth.ap_positions.emplace_back(x, y);
    }

    std::vector<std::size_t> removal_order(cfg.n_aps);
    std::iota(removal_order.begin(), removal_order.end(), std::size_t{0});
    std::shuffle(removal_order.begin(), removal_order.end(), rng);

    std::normal_distribution<double> bias_noise(0.0, 1.0);
    truth.removed.resize(static_cast<std::size_t>(cfg.n_cis));
    truth.bias_db.resize(static_cast<std::size_t>(cfg.n_cis));
    for (int ci = 0; ci < cfg.n_cis; ++ci) {
        const auto count = static_cast<std::size_t>(
            std::floor(cfg.removal_fraction(ci) * static_cast<double>(cfg.n_aps) + 1e-9));
        auto& removed = truth.removed[static_cast<std::size_t>(ci)];
        removed.assign(removal_order.begin(), removal_order.begin() + static_cast<std::ptrdiff_t>(count));
        std::sort(removed.begin(), removed.end());
        auto& bias = truth.bias_db[static_cast<std::size_t>(ci)];
        for (std::size_t a = 0; a < cfg.n_aps; ++a) bias.push_back(cfg.drift_sigma_db * bias_noise(rng));
    }

    std::normal_distribution<double> shadow(0.0, 1.0);
    for (int ci = 0; ci < cfg.n_cis; ++ci) {
        const auto& removed = truth.removed[static_cast<std::size_t>(ci)];
        const auto& bias = truth.bias_db[static_cast<std::size_t>(ci)];
        for (const auto& rp : plan.rps)
            for (int s = 0; s < cfg.fpr; ++s) {
                Fingerprint fp{rp.rp_id, ci, std::vector<int>(cfg.n_aps, kMissingRssi)};
                for (std::size_t a = 0; a < cfg.n_aps; ++a) {
                    const double noise = cfg.shadow_sigma_db * shadow(rng);
                    if (std::binary_search(removed.begin(), removed.end(), a)) continue;
                    const double d = std::hypot(rp.x - truth.ap_positions[a].first, rp.y - truth.ap_positions[a].second);
                    const double dbm = path_loss_rssi(cfg, d) + bias[a] + noise;
                    fp.rssi[a] = static_cast<int>(std::lround(std::clamp(dbm, double{kMissingRssi}, double{kMaxRssi})));
                }
                out.dataset.fingerprints.push_back(std::move(fp));
            }
    }
    out.dataset.validate();
    return out;
}

SimConfig preset(const std::string& name) {
    SimConfig cfg;
    if (name == "office-like") {
        // 48 m corridor, RPs 1 m apart, 16 CIs, 6 scans per RP, 20% of APs gone from CI 11.
        return cfg;
    }
    if (name == "uji-like") {
        cfg.width = 16.0;
        cfg.height = 10.0;
        cfg.rp_spacing = 2.0;
        cfg.n_aps = 60;
        cfg.n_cis = 15;
        cfg.fpr = 9;
        cfg.removal_schedule = {{11, 0.5}};
        return cfg;
    }
    throw Error("unknown preset '" + name + "' (expected office-like or uji-like)");
}

void save_ground_truth(const FingerprintDataset& dataset, const GroundTruth& truth,
                       const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "ap_id,x_m,y_m,removed_at_ci\n";
    for (std::size_t a = 0; a < truth.ap_positions.size(); ++a)
        out << dataset.floorplan.ap_registry[a].value << ',' << csv::format_double(truth.ap_positions[a].first) << ','
            << csv::format_double(truth.ap_positions[a].second) << ',' << truth.removed_at(a) << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

}  // namespace stone
