#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stone/localizer.hpp"

namespace stone {

/// Euclidean distance in meters between the predicted and true positions.
double localization_error(const Prediction& pred, const ReferencePoint& truth) noexcept;

struct QueryError {
    int ci = 0;
    int rp_id = 0;
    double error_m = 0.0;
};

struct CiSummary {
    std::size_t n = 0;
    double mean_error_m = 0.0;
};

struct EvalReport {
    std::string method;
    std::map<int, CiSummary> per_ci;
    double overall_mean_error = 0.0;
    std::vector<QueryError> queries;  // in test-set order

    /// Mean over the given collection instances, weighted by query count.
    double mean_over(int first_ci, int last_ci) const;
};

/// Builds a report from per-query errors (order preserved).
EvalReport summarize(std::string method, std::vector<QueryError> queries);

struct EvalOptions {
    std::size_t k = 3;
    DecisionRule rule = DecisionRule::MajorityVote;
    std::size_t threads = 1;  // KNN fan-out over queries
};

/// Predicts every test fingerprint with the learned encoder + index.
EvalReport evaluate_over_time(const EncoderModel& model, const EmbeddingIndex& index, const FingerprintDataset& test,
                              const EvalOptions& options = {});

/// Same queries through the raw normalized-RSSI KNN baseline.
EvalReport evaluate_baseline(const FingerprintDataset& train, const FingerprintDataset& test,
                             const EvalOptions& options = {});

/// Writes `ci,method,n,mean_error_m` rows for each report.
void write_report_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path);

/// Writes `ci,method,rp_id,error_m`, one row per query.
void write_query_errors_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path);

struct SweepConfig {
    std::vector<int> fprs{1, 2, 4, 6};
    std::size_t repeats = 10;
    int train_ci = 0;
    std::uint64_t seed = 0;
    TrainConfig train;
    EvalOptions eval;
};

struct SweepRow {
    int fpr = 0;
    std::map<int, double> per_ci_mean;  // averaged over repeats
    double overall_mean = 0.0;          // mean over repeats of each run's overall mean
};

/// For every fpr and repeat: split with a fresh seed, train, evaluate on
/// every ci other than train_ci. Repeat r uses the same split seed for
/// every fpr.
std::vector<SweepRow> fpr_sweep(const FingerprintDataset& dataset, const SweepConfig& cfg);

/// Writes `fpr,ci,mean_error_m` rows plus one `fpr,overall,mean_error_m` row per fpr.
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace stone
