#include <doctest.h>

#include <cmath>
#include <set>

#include "stone/drift_simulator.hpp"
#include "support/support.hpp"

using namespace stone;

namespace {

SimConfig small_config() {
    SimConfig cfg;
    cfg.width = 10.0;
    cfg.height = 4.0;
    cfg.rp_spacing = 2.0;
    cfg.n_aps = 20;
    cfg.n_cis = 6;
    cfg.fpr = 2;
    cfg.removal_schedule = {{2, 0.25}, {4, 0.5}};
    cfg.seed = 3;
    return cfg;
}

std::set<std::size_t> silent_aps(const FingerprintDataset& ds, int ci) {
    std::set<std::size_t> out;
    for (std::size_t a = 0; a < ds.floorplan.ap_registry.size(); ++a) {
        bool silent = true;
        for (const auto& f : ds.fingerprints)
            if (f.ci == ci && f.rssi[a] != kMissingRssi) silent = false;
        if (silent) out.insert(a);
    }
    return out;
}

}  // namespace

TEST_SUITE("drift_simulator") {

TEST_CASE("reference distance gives tx power") {
    SimConfig cfg;
    CHECK(path_loss_rssi(cfg, 1.0) == cfg.tx_power_dbm);
    CHECK(path_loss_rssi(cfg, 0.2) == cfg.tx_power_dbm);
    CHECK(path_loss_rssi(cfg, 10.0) == doctest::Approx(cfg.tx_power_dbm - 30.0));
    for (double d = 0.5; d < 80.0; d += 0.25) CHECK(path_loss_rssi(cfg, d + 0.25) <= path_loss_rssi(cfg, d));
}

TEST_CASE("AP one metre from an RP reads tx power without noise") {
    SimConfig cfg = small_config();
    cfg.shadow_sigma_db = 0.0;
    cfg.drift_sigma_db = 0.0;
    cfg.removal_schedule.clear();
    const auto sim = generate(cfg);
    for (const auto& f : sim.dataset.fingerprints) {
        const auto& rp = sim.dataset.floorplan.at(f.rp_id);
        for (std::size_t a = 0; a < cfg.n_aps; ++a) {
            const auto [ax, ay] = sim.truth.ap_positions[a];
            const double expected = path_loss_rssi(cfg, std::hypot(rp.x - ax, rp.y - ay));
            CHECK(f.rssi[a] == std::lround(std::clamp(expected, -100.0, 0.0)));
        }
    }
}

TEST_CASE("noise-free RSSI does not increase with distance") {
    SimConfig cfg = small_config();
    cfg.shadow_sigma_db = 0.0;
    cfg.drift_sigma_db = 0.0;
    cfg.n_cis = 1;
    const auto sim = generate(cfg);
    const auto& rows = sim.dataset.fingerprints;
    for (std::size_t a = 0; a < cfg.n_aps; ++a)
        for (const auto& f : rows)
            for (const auto& g : rows) {
                const auto& p = sim.dataset.floorplan.at(f.rp_id);
                const auto& q = sim.dataset.floorplan.at(g.rp_id);
                const auto [ax, ay] = sim.truth.ap_positions[a];
                if (std::hypot(p.x - ax, p.y - ay) < std::hypot(q.x - ax, q.y - ay)) CHECK(f.rssi[a] >= g.rssi[a]);
            }
}

TEST_CASE("office-like removes exactly ten APs from CI 11") {
    auto cfg = preset("office-like");
    cfg.seed = 4;
    const auto sim = generate(cfg);
    CHECK(sim.dataset.floorplan.rps.size() == 48);
    CHECK(sim.dataset.fingerprints.size() == 48u * 6u * 16u);
    for (int ci = 0; ci < 16; ++ci) {
        const auto silent = silent_aps(sim.dataset, ci);
        CHECK(silent.size() == (ci >= 11 ? 10u : 0u));
        const auto& truth = sim.truth.removed[static_cast<std::size_t>(ci)];
        CHECK(silent == std::set<std::size_t>(truth.begin(), truth.end()));
    }
    for (std::size_t a = 0; a < 50; ++a) {
        const int at = sim.truth.removed_at(a);
        CHECK((at == -1 || at == 11));
    }
}

TEST_CASE("removal is cumulative across schedule steps") {
    const auto sim = generate(small_config());
    const auto& removed = sim.truth.removed;
    CHECK(removed[0].empty());
    CHECK(removed[1].empty());
    CHECK(removed[2].size() == 5);
    CHECK(removed[3].size() == 5);
    CHECK(removed[4].size() == 10);
    CHECK(removed[5].size() == 10);
    CHECK(std::includes(removed[4].begin(), removed[4].end(), removed[2].begin(), removed[2].end()));
    for (int ci = 0; ci < 6; ++ci) {
        const auto& truth = removed[static_cast<std::size_t>(ci)];
        CHECK(silent_aps(sim.dataset, ci) == std::set<std::size_t>(truth.begin(), truth.end()));
    }
}

TEST_CASE("rows are valid integers in range and round-trip through CSV") {
    const auto sim = generate(small_config());
    for (const auto& f : sim.dataset.fingerprints)
        for (int v : f.rssi) CHECK((v >= -100 && v <= 0));
    test::TempDir dir;
    save_dataset(sim.dataset, dir / "fp.csv", dir / "fps.csv");
    CHECK(load_dataset(dir / "fp.csv", dir / "fps.csv") == sim.dataset);
}

TEST_CASE("same seed, identical files") {
    test::TempDir dir;
    const auto a = generate(small_config());
    const auto b = generate(small_config());
    save_dataset(a.dataset, dir / "a_fp.csv", dir / "a_fps.csv");
    save_dataset(b.dataset, dir / "b_fp.csv", dir / "b_fps.csv");
    save_ground_truth(a.dataset, a.truth, dir / "a_gt.csv");
    save_ground_truth(b.dataset, b.truth, dir / "b_gt.csv");
    CHECK(test::read_file(dir / "a_fps.csv") == test::read_file(dir / "b_fps.csv"));
    CHECK(test::read_file(dir / "a_fp.csv") == test::read_file(dir / "b_fp.csv"));
    CHECK(test::read_file(dir / "a_gt.csv") == test::read_file(dir / "b_gt.csv"));
    CHECK(test::read_file(dir / "a_gt.csv").starts_with("ap_id,x_m,y_m,removed_at_ci\n"));

    auto other = small_config();
    other.seed = 4;
    CHECK_FALSE(generate(other).dataset == a.dataset);
}

TEST_CASE("presets") {
    const auto office = preset("office-like");
    CHECK(office.n_cis == 16);
    CHECK(office.fpr == 6);
    CHECK(office.width == 48.0);
    CHECK(office.rp_spacing == 1.0);
    CHECK(office.removal_fraction(10) == 0.0);
    CHECK(office.removal_fraction(11) == 0.2);
    CHECK(office.removal_fraction(15) == 0.2);
    const auto uji = preset("uji-like");
    CHECK(uji.n_cis == 15);
    CHECK(uji.fpr == 9);
    CHECK(uji.removal_schedule.at(11) == 0.5);
    CHECK(uji.height > 1.0);
    CHECK_THROWS_AS(preset("basement"), Error);
}

TEST_CASE("config validation") {
    auto cfg = small_config();
    cfg.removal_schedule = {{2, 0.5}, {4, 0.25}};
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = small_config();
    cfg.path_loss_exponent = 7.0;
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = small_config();
    cfg.n_aps = 0;
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = small_config();
    cfg.width = 0.5;
    cfg.height = 0.5;
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = small_config();
    cfg.removal_schedule = {{1, 1.5}};
    CHECK_THROWS_AS(generate(cfg), Error);
}

}  // TEST_SUITE
