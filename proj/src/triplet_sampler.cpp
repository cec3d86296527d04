#include "stone/triplet_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stone {

double NegativePmf::probability(int rp_id) const {
    for (std::size_t i = 0; i < rp_ids.size(); ++i)
        if (rp_ids[i] == rp_id) return probs[i];
    return 0.0;
}

NegativePmf negative_pmf(const FloorPlan& floorplan, int anchor_rp, double sigma_sel) {
    if (!(sigma_sel > 0.0) || !std::isfinite(sigma_sel)) throw Error("sigma_sel must be positive");
    if (floorplan.rps.size() < 2) throw Error("negative sampling needs at least 2 reference points");
    const ReferencePoint& anchor = floorplan.at(anchor_rp);

    std::vector<double> sq_dist(floorplan.rps.size());
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < floorplan.rps.size(); ++i) {
        const double dx = floorplan.rps[i].x - anchor.x;
        const double dy = floorplan.rps[i].y - anchor.y;
        sq_dist[i] = dx * dx + dy * dy;
        if (floorplan.rps[i].rp_id != anchor_rp) nearest = std::min(nearest, sq_dist[i]);
    }

    // Shifting by the nearest squared distance keeps the kernel from
    // underflowing when sigma_sel is small relative to RP spacing.
    NegativePmf pmf;
    pmf.anchor_rp = anchor_rp;
    double total = 0.0;
    for (std::size_t i = 0; i < floorplan.rps.size(); ++i) {
        const bool is_anchor = floorplan.rps[i].rp_id == anchor_rp;
        const double w = is_anchor ? 0.0 : std::exp(-(sq_dist[i] - nearest) / (2.0 * sigma_sel * sigma_sel));
        pmf.rp_ids.push_back(floorplan.rps[i].rp_id);
        pmf.probs.push_back(w);
        total += w;
    }
    for (double& p : pmf.probs) p /= total;
    return pmf;
}

double default_sigma_sel(const FloorPlan& floorplan) {
    if (floorplan.rps.empty()) throw Error("empty floor plan");
    auto [min_x, max_x] = std::minmax_element(floorplan.rps.begin(), floorplan.rps.end(),
                                              [](const auto& a, const auto& b) { return a.x < b.x; });
    auto [min_y, max_y] = std::minmax_element(floorplan.rps.begin(), floorplan.rps.end(),
                                              [](const auto& a, const auto& b) { return a.y < b.y; });
    const double diagonal = std::hypot(max_x->x - min_x->x, max_y->y - min_y->y);
    if (!(diagonal > 0.0)) throw Error("reference points span no area; set sigma_sel explicitly");
    return 0.1 * diagonal;
}

TripletSampler::TripletSampler(const FingerprintDataset& train, double sigma_sel) : sigma_sel_(sigma_sel) {
    if (train.fingerprints.empty()) throw Error("cannot sample triplets from an empty training set");
    FloorPlan present;
    for (const auto& rp : train.floorplan.rps) {
        Group group{rp.rp_id, {}};
        for (const auto& fp : train.fingerprints)
            if (fp.rp_id == rp.rp_id) group.images.push_back(to_image(fp));
        if (group.images.empty()) continue;
        groups_.push_back(std::move(group));
        present.rps.push_back(rp);
    }
    for (const auto& group : groups_) {
        pmfs_.push_back(negative_pmf(present, group.rp_id, sigma_sel));
        negative_pick_.emplace_back(pmfs_.back().probs.begin(), pmfs_.back().probs.end());
    }
}

std::size_t TripletSampler::group_index(int rp_id) const {
    for (std::size_t i = 0; i < groups_.size(); ++i)
        if (groups_[i].rp_id == rp_id) return i;
    throw Error("rp_id " + std::to_string(rp_id) + " has no training fingerprints");
}

const NegativePmf& TripletSampler::pmf_for(int anchor_rp) const { return pmfs_[group_index(anchor_rp)]; }

// pmf entries are aligned with groups_, so the drawn index is a group.
std::size_t TripletSampler::draw_negative_group(std::size_t anchor_group, Rng& rng) const {
    std::discrete_distribution<std::size_t> pick;
    return pick(rng, negative_pick_[anchor_group]);
}

int TripletSampler::sample_negative_rp(int anchor_rp, Rng& rng) const {
    return groups_[draw_negative_group(group_index(anchor_rp), rng)].rp_id;
}

Triplet TripletSampler::sample(Rng& rng) const {
    const std::size_t a = std::uniform_int_distribution<std::size_t>(0, groups_.size() - 1)(rng);
    const auto& anchor_images = groups_[a].images;
    const std::size_t ai = std::uniform_int_distribution<std::size_t>(0, anchor_images.size() - 1)(rng);
    std::size_t pi = ai;
    if (anchor_images.size() > 1) {
        pi = std::uniform_int_distribution<std::size_t>(0, anchor_images.size() - 2)(rng);
        if (pi >= ai) ++pi;
    }
    const std::size_t n = draw_negative_group(a, rng);
    const auto& negative_images = groups_[n].images;
    const std::size_t ni = std::uniform_int_distribution<std::size_t>(0, negative_images.size() - 1)(rng);

    return Triplet{anchor_images[ai], anchor_images[pi], negative_images[ni], groups_[a].rp_id, groups_[n].rp_id};
}

std::vector<Triplet> TripletSampler::make_batch(std::size_t batch_size, const AugmentConfig& aug, Rng& rng) const {
    if (batch_size == 0) throw Error("batch size must be at least 1");
    std::vector<Triplet> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        Triplet t = sample(rng);
        for (FingerprintImage* img : {&t.anchor, &t.positive, &t.negative})
            *img = apply_ap_dropout(std::move(*img), draw_turnoff_fraction(aug, rng), rng);
        batch.push_back(std::move(t));
    }
    return batch;
}

std::vector<Triplet> make_batch(const FingerprintDataset& train, double sigma_sel, std::size_t batch_size,
                                const AugmentConfig& aug, Rng& rng) {
    return TripletSampler(train, sigma_sel).make_batch(batch_size, aug, rng);
}

}  // namespace stone
