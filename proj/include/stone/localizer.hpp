#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "stone/augment.hpp"
#include "stone/data_model.hpp"
#include "stone/encoder.hpp"

namespace stone {

struct IndexEntry {
    std::vector<double> embedding;
    int rp_id = 0;
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

/// Flat table of labelled vectors searched exhaustively. Holds encoder
/// embeddings for the learned localizer and normalized RSSI vectors for the
/// raw-feature baseline.
struct EmbeddingIndex {
    std::vector<IndexEntry> entries;

    std::size_t dim() const noexcept { return entries.empty() ? 0 : entries.front().embedding.size(); }
    std::size_t size() const noexcept { return entries.size(); }

    friend bool operator==(const EmbeddingIndex&, const EmbeddingIndex&) = default;
};

enum class DecisionRule {
    MajorityVote,      // most frequent RP among the k neighbours
    WeightedCentroid,  // inverse-distance weighted mean of neighbour coordinates
};

struct Neighbor {
    std::size_t entry = 0;
    int rp_id = 0;
    double distance = 0.0;
};

struct Prediction {
    double x = 0.0;
    double y = 0.0;
    int rp_id = 0;
    std::vector<Neighbor> neighbors;  // nearest first

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

inline bool operator==(const Neighbor& a, const Neighbor& b) {
    return a.entry == b.entry && a.rp_id == b.rp_id && a.distance == b.distance;
}

/// Exact k-nearest-neighbour decision over `index`.
///
/// Neighbours are ordered by (distance, rp_id, entry position). The winning
/// RP has the most votes; vote ties go to the smaller mean neighbour
/// distance, then to the lower rp_id. In MajorityVote mode the position is
/// the winner's coordinates. In WeightedCentroid mode it is the 1/distance
/// weighted mean of the neighbours, or the plain mean of the zero-distance
/// neighbours when any exist; rp_id is still the vote winner.
Prediction knn_decide(const EmbeddingIndex& index, std::span<const double> query, std::size_t k,
                      DecisionRule rule = DecisionRule::MajorityVote);

struct TrainConfig {
    EncoderConfig encoder;
    AugmentConfig augment;
    std::optional<double> sigma_sel;  // empty: default_sigma_sel of the training floor plan
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainedLocalizer {
    EncoderModel model;
    EmbeddingIndex index;
    std::vector<double> loss_history;  // mean batch loss per step
};

/// Offline phase: preprocess, sample triplets, fit the encoder, then embed
/// every training fingerprint (inference mode) into the index. Parameters
/// are rounded to float precision before indexing, so a saved model
/// reproduces the in-memory predictions exactly.
///
/// Training runs epochs * ceil(train size / batch size) steps.
TrainedLocalizer train(const FingerprintDataset& train_set, const TrainConfig& cfg,
                       const std::function<void(std::size_t, double)>& on_step = {});

/// Inference-mode embedding of every image, one vector per fingerprint.
EmbeddingIndex build_index(const EncoderModel& model, const FingerprintDataset& dataset);

Prediction predict(const EncoderModel& model, const EmbeddingIndex& index, const Fingerprint& scan, std::size_t k,
                   DecisionRule rule = DecisionRule::MajorityVote);

/// Index of normalized (unpadded) RSSI vectors for the Euclidean baseline.
EmbeddingIndex build_baseline_index(const FingerprintDataset& train_set);

Prediction baseline_knn_predict(const FingerprintDataset& train_set, const Fingerprint& scan, std::size_t k,
                                DecisionRule rule = DecisionRule::MajorityVote);

// ---- persistence ---------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;

class ModelFormatError : public Error {
public:
    using Error::Error;
};
class ModelVersionError : public ModelFormatError {
public:
    using ModelFormatError::ModelFormatError;
};
class ModelChecksumError : public ModelFormatError {
public:
    using ModelFormatError::ModelFormatError;
};

/// Where the training rows came from, so evaluation can rebuild the same
/// train/test partition from the full dataset.
struct SplitProvenance {
    int train_ci = 0;
    int fpr = 0;
    std::uint64_t seed = 0;

    friend bool operator==(const SplitProvenance&, const SplitProvenance&) = default;
};

struct ModelBundle {
    EncoderModel model;
    EmbeddingIndex index;
    FloorPlan floorplan;  // RPs and the AP registry scans must be aligned to
    std::optional<SplitProvenance> split;

    friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

std::vector<std::uint8_t> serialize_model(const ModelBundle& bundle);
ModelBundle deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace stone
