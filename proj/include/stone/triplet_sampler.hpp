#pragma once

#include <random>
#include <vector>

#include "stone/augment.hpp"
#include "stone/data_model.hpp"
#include "stone/preprocess.hpp"
#include "stone/random.hpp"

namespace stone {

/// Probability of picking each RP as the negative for a given anchor RP.
/// Weights follow an isotropic Gaussian kernel on floor-plan distance; the
/// anchor itself has probability 0 and the rest sum to 1.
struct NegativePmf {
    int anchor_rp = 0;
    std::vector<int> rp_ids;
    std::vector<double> probs;  // aligned with rp_ids

    double probability(int rp_id) const;
};

NegativePmf negative_pmf(const FloorPlan& floorplan, int anchor_rp, double sigma_sel);

/// One tenth of the RP bounding-box diagonal.
double default_sigma_sel(const FloorPlan& floorplan);

struct Triplet {
    FingerprintImage anchor;
    FingerprintImage positive;
    FingerprintImage negative;
    int anchor_rp = 0;
    int negative_rp = 0;
};

/// Preprocessed training images grouped by RP, together with the negative
/// PMF of every RP that has data. Immutable once built.
class TripletSampler {
public:
    TripletSampler(const FingerprintDataset& train, double sigma_sel);

    /// Anchor RP uniform over RPs; anchor and negative fingerprints uniform
    /// within their RP. The positive is a different fingerprint of the
    /// anchor RP when one exists, otherwise the anchor image is reused.
    Triplet sample(Rng& rng) const;

    /// `batch_size` triplets, each image passed through AP dropout with its
    /// own fraction drawn from U(0, p_upper). Gaussian noise is not applied.
    std::vector<Triplet> make_batch(std::size_t batch_size, const AugmentConfig& aug, Rng& rng) const;

    /// One negative RP for `anchor_rp`, drawn from its pmf.
    int sample_negative_rp(int anchor_rp, Rng& rng) const;

    const NegativePmf& pmf_for(int anchor_rp) const;
    const std::vector<NegativePmf>& pmfs() const noexcept { return pmfs_; }
    std::size_t rp_count() const noexcept { return groups_.size(); }
    double sigma_sel() const noexcept { return sigma_sel_; }

private:
    struct Group {
        int rp_id;
        std::vector<FingerprintImage> images;
    };

    std::size_t group_index(int rp_id) const;
    std::size_t draw_negative_group(std::size_t anchor_group, Rng& rng) const;

    std::vector<Group> groups_;
    std::vector<NegativePmf> pmfs_;  // aligned with groups_
    std::vector<std::discrete_distribution<std::size_t>::param_type> negative_pick_;
    double sigma_sel_;
};

std::vector<Triplet> make_batch(const FingerprintDataset& train, double sigma_sel, std::size_t batch_size,
                                const AugmentConfig& aug, Rng& rng);

}  // namespace stone
