#include "stone/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "stone/triplet_sampler.hpp"

namespace stone {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum;
}

}  // namespace

Prediction knn_decide(const EmbeddingIndex& index, std::span<const double> query, std::size_t k, DecisionRule rule) {
    if (index.entries.empty()) throw Error("cannot predict from an empty index");
    if (k == 0) throw Error("k must be at least 1");
    if (k > index.size())
        throw Error("k = " + std::to_string(k) + " exceeds index size " + std::to_string(index.size()));
    if (query.size() != index.dim()) throw Error("query dimension does not match the index");

    struct Candidate {
        double sq;
        int rp_id;
        std::size_t entry;
    };
    std::vector<Candidate> all(index.size());
    for (std::size_t i = 0; i < index.size(); ++i)
        all[i] = {squared_distance(query, index.entries[i].embedding), index.entries[i].rp_id, i};
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                      [](const Candidate& a, const Candidate& b) {
                          if (a.sq != b.sq) return a.sq < b.sq;
                          if (a.rp_id != b.rp_id) return a.rp_id < b.rp_id;
                          return a.entry < b.entry;
                      });

    Prediction pred;
    struct Tally {
        std::size_t votes = 0;
        double distance_sum = 0.0;
    };
    std::map<int, Tally> tally;
    for (std::size_t i = 0; i < k; ++i) {
        const double d = std::sqrt(all[i].sq);
        pred.neighbors.push_back({all[i].entry, all[i].rp_id, d});
        auto& t = tally[all[i].rp_id];
        ++t.votes;
        t.distance_sum += d;
    }

    // std::map iterates rp_ids ascending, so a strict comparison keeps the
    // lowest rp_id on a full tie.
    int winner = tally.begin()->first;
    const Tally* best = &tally.begin()->second;
    for (const auto& [rp, t] : tally) {
        if (t.votes > best->votes) {
            winner = rp;
            best = &t;
        } else if (t.votes == best->votes) {
            const double mean = t.distance_sum / static_cast<double>(t.votes);
            const double best_mean = best->distance_sum / static_cast<double>(best->votes);
            if (mean < best_mean) {
                winner = rp;
                best = &t;
            }
        }
    }
    pred.rp_id = winner;

    if (rule == DecisionRule::MajorityVote) {
        const auto it = std::find_if(pred.neighbors.begin(), pred.neighbors.end(),
                                     [winner](const Neighbor& n) { return n.rp_id == winner; });
        pred.x = index.entries[it->entry].x;
        pred.y = index.entries[it->entry].y;
        return pred;
    }

    double wsum = 0.0, wx = 0.0, wy = 0.0;
    const bool exact = pred.neighbors.front().distance == 0.0;
    for (const auto& n : pred.neighbors) {
        double w;
        if (exact)
            w = n.distance == 0.0 ? 1.0 : 0.0;
        else
            w = 1.0 / n.distance;
        wsum += w;
        wx += w * index.entries[n.entry].x;
        wy += w * index.entries[n.entry].y;
    }
    pred.x = wx / wsum;
    pred.y = wy / wsum;
    return pred;
}

void TrainConfig::validate() const {
    encoder.validate();
    augment.validate();
    if (sigma_sel && !(*sigma_sel > 0.0)) throw Error("sigma_sel must be positive");
    if (batch_size == 0) throw Error("batch size must be at least 1");
    if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
}

TrainedLocalizer train(const FingerprintDataset& train_set, const TrainConfig& cfg,
                       const std::function<void(std::size_t, double)>& on_step) {
    cfg.validate();
    if (train_set.fingerprints.empty()) throw Error("training set is empty");
    train_set.validate();

    const double sigma_sel = cfg.sigma_sel.value_or(default_sigma_sel(train_set.floorplan));
    const TripletSampler sampler(train_set, sigma_sel);

    EncoderConfig enc = cfg.encoder;
    enc.noise_sigma = cfg.augment.noise_sigma;
    const std::size_t side = image_side(train_set.floorplan.ap_registry.size());

    TrainedLocalizer out;
    out.model = init_model(enc, side, make_stream(cfg.seed, 0)());

    Rng batch_rng = make_stream(cfg.seed, 1);
    Rng net_rng = make_stream(cfg.seed, 2);
    AdamState opt;
    opt.learning_rate = cfg.learning_rate;

    const std::size_t n = train_set.fingerprints.size();
    const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t steps = cfg.epochs * steps_per_epoch;
    out.loss_history.reserve(steps);
    for (std::size_t step = 0; step < steps; ++step) {
        const auto batch = sampler.make_batch(cfg.batch_size, cfg.augment, batch_rng);
        const StepResult r = train_step(out.model, batch, opt, net_rng);
        out.loss_history.push_back(r.mean_loss);
        if (on_step) on_step(step, r.mean_loss);
    }

    out.model.round_to_float();
    out.index = build_index(out.model, train_set);
    return out;
}

EmbeddingIndex build_index(const EncoderModel& model, const FingerprintDataset& dataset) {
    std::vector<FingerprintImage> images;
    images.reserve(dataset.fingerprints.size());
    for (const auto& fp : dataset.fingerprints) images.push_back(to_image(fp));
    const Eigen::MatrixXd emb = encode_batch(model, images);

    EmbeddingIndex index;
    index.entries.reserve(images.size());
    for (std::size_t i = 0; i < dataset.fingerprints.size(); ++i) {
        const auto& fp = dataset.fingerprints[i];
        const auto& rp = dataset.floorplan.at(fp.rp_id);
        IndexEntry e;
        e.embedding.resize(static_cast<std::size_t>(emb.rows()));
        for (Eigen::Index r = 0; r < emb.rows(); ++r)
            e.embedding[static_cast<std::size_t>(r)] =
                static_cast<double>(static_cast<float>(emb(r, static_cast<Eigen::Index>(i))));
        e.rp_id = fp.rp_id;
        e.x = rp.x;
        e.y = rp.y;
        index.entries.push_back(std::move(e));
    }
    return index;
}

Prediction predict(const EncoderModel& model, const EmbeddingIndex& index, const Fingerprint& scan, std::size_t k,
                   DecisionRule rule) {
    if (index.entries.empty()) throw Error("cannot predict from an empty index");
    const Embedding query = encode(model, to_image(scan), Mode::Infer);
    return knn_decide(index, query, k, rule);
}

EmbeddingIndex build_baseline_index(const FingerprintDataset& train_set) {
    EmbeddingIndex index;
    index.entries.reserve(train_set.fingerprints.size());
    for (const auto& fp : train_set.fingerprints) {
        const auto& rp = train_set.floorplan.at(fp.rp_id);
        index.entries.push_back({normalized_vector(fp.rssi), fp.rp_id, rp.x, rp.y});
    }
    return index;
}

Prediction baseline_knn_predict(const FingerprintDataset& train_set, const Fingerprint& scan, std::size_t k,
                                DecisionRule rule) {
    return knn_decide(build_baseline_index(train_set), normalized_vector(scan.rssi), k, rule);
}

}  // namespace stone
