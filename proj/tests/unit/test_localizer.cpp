#include <doctest.h>

#include <cmath>
#include <memory>

#include "stone/localizer.hpp"
#include "support/oracle.hpp"
#include "support/support.hpp"

using namespace stone;

namespace {

// Integer-lattice embeddings so that many distances tie exactly.
EmbeddingIndex lattice_index(std::size_t entries, std::size_t dim, int n_rps, Rng& rng) {
    std::uniform_int_distribution<int> coord(-2, 2);
    std::uniform_int_distribution<int> rp(0, n_rps - 1);
    EmbeddingIndex index;
    for (std::size_t i = 0; i < entries; ++i) {
        IndexEntry e;
        for (std::size_t j = 0; j < dim; ++j) e.embedding.push_back(coord(rng));
        e.rp_id = rp(rng);
        e.x = e.rp_id * 1.5;
        e.y = -0.5 * e.rp_id;
        index.entries.push_back(std::move(e));
    }
    return index;
}

// 3 RPs, 20 APs: each RP owns a disjoint block of strong APs.
FingerprintDataset separable_dataset(int per_rp, int n_cis, std::uint64_t seed) {
    FloorPlan fp;
    fp.rps = {{0, 0.0, 0.0}, {1, 4.0, 0.0}, {2, 8.0, 0.0}};
    fp.ap_registry = test::make_registry(20);
    Rng rng(seed);
    std::uniform_int_distribution<int> strong(-45, -30);
    FingerprintDataset ds;
    ds.floorplan = fp;
    for (int ci = 0; ci < n_cis; ++ci)
        for (int rp = 0; rp < 3; ++rp)
            for (int s = 0; s < per_rp; ++s) {
                Fingerprint f{rp, ci, std::vector<int>(20, kMissingRssi)};
                for (int a = rp * 6; a < rp * 6 + 6; ++a) f.rssi[static_cast<std::size_t>(a)] = strong(rng);
                ds.fingerprints.push_back(std::move(f));
            }
    return ds;
}

void check_same(const Prediction& got, const Prediction& want) {
    CHECK(got.rp_id == want.rp_id);
    CHECK(got.x == want.x);
    CHECK(got.y == want.y);
    REQUIRE(got.neighbors.size() == want.neighbors.size());
    for (std::size_t i = 0; i < got.neighbors.size(); ++i) {
        CHECK(got.neighbors[i].entry == want.neighbors[i].entry);
        CHECK(got.neighbors[i].distance == want.neighbors[i].distance);
    }
}

}  // namespace

TEST_SUITE("localizer") {

TEST_CASE("knn_decide argument checks") {
    EmbeddingIndex empty;
    const std::vector<double> q{0.0, 0.0};
    CHECK_THROWS_AS(knn_decide(empty, q, 1), Error);
    EmbeddingIndex one{{{{1.0, 0.0}, 4, 2.0, 3.0}}};
    CHECK_THROWS_AS(knn_decide(one, q, 0), Error);
    CHECK_THROWS_AS(knn_decide(one, q, 2), Error);
    CHECK_THROWS_AS(knn_decide(one, std::vector<double>{1.0}, 1), Error);
    const auto p = knn_decide(one, std::vector<double>{-7.0, 3.0}, 1);
    CHECK(p.rp_id == 4);
    CHECK(p.x == 2.0);
    CHECK(p.y == 3.0);
}

TEST_CASE("vote ties") {
    EmbeddingIndex index;
    index.entries = {
        {{1.0}, 7, 7.0, 0.0},
        {{-1.0}, 3, 3.0, 0.0},
        {{2.0}, 5, 5.0, 0.0},
        {{-3.0}, 5, 5.0, 0.0},
    };
    const std::vector<double> q{0.0};
    // k=2: rp 3 and rp 7 at equal distance, one vote each -> lower rp_id.
    CHECK(knn_decide(index, q, 2).rp_id == 3);
    // k=4: rp 5 has two votes.
    CHECK(knn_decide(index, q, 4).rp_id == 5);
    // Neighbour order among equal distances follows rp_id.
    const auto p = knn_decide(index, q, 2);
    CHECK(p.neighbors[0].rp_id == 3);
    CHECK(p.neighbors[1].rp_id == 7);

    // One vote each with different distances: nearer mean wins.
    index.entries[0].embedding = {0.5};
    CHECK(knn_decide(index, q, 2).rp_id == 7);
}

TEST_CASE("weighted centroid") {
    EmbeddingIndex index;
    index.entries = {{{1.0}, 0, 0.0, 0.0}, {{3.0}, 1, 4.0, 2.0}};
    const auto p = knn_decide(index, std::vector<double>{0.0}, 2, DecisionRule::WeightedCentroid);
    // weights 1 and 1/3
    CHECK(p.x == doctest::Approx(1.0));
    CHECK(p.y == doctest::Approx(0.5));
    const auto exact = knn_decide(index, std::vector<double>{3.0}, 2, DecisionRule::WeightedCentroid);
    CHECK(exact.x == 4.0);
    CHECK(exact.y == 2.0);
}

TEST_CASE("knn matches the brute-force oracle on tie-heavy indexes") {
    Rng rng(17);
    for (std::size_t dim : {1u, 2u, 3u}) {
        const auto index = lattice_index(60, dim, 6, rng);
        std::uniform_int_distribution<int> coord(-3, 3);
        for (int q = 0; q < 100; ++q) {
            std::vector<double> query;
            for (std::size_t j = 0; j < dim; ++j) query.push_back(coord(rng) * 0.5);
            for (std::size_t k : {1u, 2u, 3u, 5u, 8u})
                for (auto rule : {DecisionRule::MajorityVote, DecisionRule::WeightedCentroid})
                    check_same(knn_decide(index, query, k, rule), test::brute_force_knn(index, query, k, rule));
        }
    }
}

TEST_CASE("baseline knn") {
    const auto ds = test::random_dataset(test::grid_floorplan(3, 3, 2.0, 12), 1, 3, 4);
    const auto& stored = ds.fingerprints[10];
    const auto p = baseline_knn_predict(ds, stored, 1);
    CHECK(p.rp_id == stored.rp_id);
    CHECK(p.neighbors[0].distance == 0.0);

    const Fingerprint silent{0, 0, std::vector<int>(12, kMissingRssi)};
    const auto index = build_baseline_index(ds);
    check_same(baseline_knn_predict(ds, silent, 3),
               test::brute_force_knn(index, std::vector<double>(12, 0.0), 3, DecisionRule::MajorityVote));
}

TEST_CASE("train, index and predict on a separable set") {
    const auto ds = separable_dataset(4, 2, 3);
    const auto split = split_by_ci(ds, 0, 4, 1);
    TrainConfig cfg;
    cfg.encoder.embed_dim = 3;
    cfg.epochs = 20;
    cfg.batch_size = 8;
    cfg.seed = 5;
    std::size_t calls = 0;
    const auto trained = train(split.train, cfg, [&](std::size_t, double) { ++calls; });
    CHECK(trained.index.size() == split.train.fingerprints.size());
    CHECK(calls == 20 * 2);
    CHECK(trained.loss_history.size() == calls);
    for (const auto& e : trained.index.entries) {
        double n = 0.0;
        for (double v : e.embedding) n += v * v;
        CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-6);
    }

    const auto again = train(split.train, cfg);
    CHECK(again.model == trained.model);
    CHECK(again.index == trained.index);

    const auto& scan = split.train.fingerprints[5];
    CHECK(predict(trained.model, trained.index, scan, 1).rp_id == scan.rp_id);
    CHECK(predict(trained.model, trained.index, scan, 1).neighbors[0].distance < 1e-6);  // index stores floats

    SUBCASE("single-entry index") {
        EmbeddingIndex one{{trained.index.entries[0]}};
        for (const auto& f : split.test.fingerprints)
            CHECK(predict(trained.model, one, f, 1).rp_id == one.entries[0].rp_id);
        CHECK_THROWS_AS(predict(trained.model, EmbeddingIndex{}, scan, 1), Error);
    }
    SUBCASE("predict agrees with the oracle over encoded queries") {
        for (const auto& f : split.test.fingerprints) {
            const auto q = encode(trained.model, to_image(f), Mode::Infer);
            check_same(predict(trained.model, trained.index, f, 3),
                       test::brute_force_knn(trained.index, q, 3, DecisionRule::MajorityVote));
        }
    }
}

TEST_CASE("training does not depend on heap layout") {
    const auto ds = separable_dataset(4, 1, 12);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 8;
    cfg.seed = 12;
    cfg.augment.p_upper = 0.0;  // keep hinges active so every step updates
    const auto reference = train(ds, cfg).loss_history;
    for (std::size_t shift : {8u, 24u, 40u, 72u}) {
        std::vector<std::unique_ptr<char[]>> hold;
        for (int i = 0; i < 16; ++i) hold.emplace_back(new char[shift + 64 * static_cast<std::size_t>(i)]);
        CHECK(train(ds, cfg).loss_history == reference);
    }
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.sigma_sel = -1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK_THROWS_AS(train(FingerprintDataset{}, TrainConfig{}), Error);
}

}  // TEST_SUITE

TEST_SUITE("model_io") {

TEST_CASE("serialize round trip and integrity") {
    const auto ds = separable_dataset(3, 1, 8);
    TrainConfig cfg;
    cfg.encoder.embed_dim = 4;
    cfg.epochs = 2;
    cfg.seed = 1;
    const auto trained = train(ds, cfg);
    ModelBundle bundle{trained.model, trained.index, ds.floorplan, SplitProvenance{0, 3, 99}};

    const auto bytes = serialize_model(bundle);
    REQUIRE(bytes.size() > 16);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "STNE");
    const auto back = deserialize_model(bytes);
    CHECK(back == bundle);
    CHECK(serialize_model(back) == bytes);

    SUBCASE("every single-byte corruption is rejected") {
        for (std::size_t i = 8; i < bytes.size(); i += 37) {
            auto bad = bytes;
            bad[i] ^= 0x5a;
            CHECK_THROWS_AS(deserialize_model(bad), ModelChecksumError);
        }
    }
    SUBCASE("future version") {
        auto bad = bytes;
        bad[4] = 2;
        CHECK_THROWS_AS(deserialize_model(bad), ModelVersionError);
    }
    SUBCASE("bad magic") {
        auto bad = bytes;
        bad[0] = 'X';
        CHECK_THROWS_AS(deserialize_model(bad), ModelFormatError);
    }
    SUBCASE("truncation") {
        for (std::size_t len : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1})
            CHECK_THROWS_AS(deserialize_model(std::span(bytes.data(), len)), ModelFormatError);
    }
    SUBCASE("files") {
        test::TempDir dir;
        save_model(bundle, dir / "m.stne");
        CHECK(load_model(dir / "m.stne") == bundle);
        CHECK_THROWS_AS(load_model(dir / "missing.stne"), Error);
    }
    SUBCASE("bundle without provenance") {
        bundle.split.reset();
        CHECK(deserialize_model(serialize_model(bundle)) == bundle);
    }
}

}  // TEST_SUITE
