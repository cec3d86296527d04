#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "stone/data_model.hpp"
#include "stone/random.hpp"

namespace stone::test {

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("stone_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline std::vector<AccessPointId> make_registry(std::size_t n) {
    std::vector<AccessPointId> reg;
    for (std::size_t i = 0; i < n; ++i) reg.push_back({"a" + std::to_string(i)});
    return reg;
}

// cols x rows grid, rp_id = r * cols + c.
inline FloorPlan grid_floorplan(int cols, int rows, double spacing, std::size_t n_aps) {
    FloorPlan fp;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) fp.rps.push_back({r * cols + c, c * spacing, r * spacing});
    fp.ap_registry = make_registry(n_aps);
    return fp;
}

// Uniformly random RSSI rows: `per_rp` scans per RP for each ci in [0, n_cis).
inline FingerprintDataset random_dataset(FloorPlan fp, int n_cis, int per_rp, std::uint64_t seed,
                                         double missing_rate = 0.3) {
    Rng rng(seed);
    std::uniform_int_distribution<int> dbm(-95, -20);
    std::bernoulli_distribution missing(missing_rate);
    FingerprintDataset ds;
    ds.floorplan = std::move(fp);
    for (int ci = 0; ci < n_cis; ++ci)
        for (const auto& rp : ds.floorplan.rps)
            for (int s = 0; s < per_rp; ++s) {
                Fingerprint f{rp.rp_id, ci, {}};
                for (std::size_t a = 0; a < ds.floorplan.ap_registry.size(); ++a)
                    f.rssi.push_back(missing(rng) ? kMissingRssi : dbm(rng));
                ds.fingerprints.push_back(std::move(f));
            }
    return ds;
}

// Pearson goodness-of-fit p-value. Cells with expected count below 5 are
// pooled into one cell before the statistic is formed.
inline double chi_square_p_value(const std::vector<double>& observed, const std::vector<double>& probs) {
    double total = 0.0;
    for (double o : observed) total += o;
    double stat = 0.0, pooled_obs = 0.0, pooled_exp = 0.0;
    std::size_t cells = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double expected = total * probs[i];
        if (expected < 5.0) {
            pooled_obs += observed[i];
            pooled_exp += expected;
            continue;
        }
        stat += (observed[i] - expected) * (observed[i] - expected) / expected;
        ++cells;
    }
    if (pooled_exp > 0.0) {
        stat += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
        ++cells;
    }
    if (cells < 2) return 1.0;
    boost::math::chi_squared dist(static_cast<double>(cells - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace stone::test
