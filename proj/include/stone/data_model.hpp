#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stone {

/// RSSI value meaning "access point not observed".
inline constexpr int kMissingRssi = -100;
inline constexpr int kMaxRssi = 0;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent dataset content. Carries the 1-based file row
/// (header is row 1) when the problem is tied to a specific line.
class DatasetError : public Error {
public:
    DatasetError(const std::string& what, std::optional<std::size_t> row = std::nullopt)
        : Error(row ? "row " + std::to_string(*row) + ": " + what : what), row_(row) {}

    std::optional<std::size_t> row() const noexcept { return row_; }

private:
    std::optional<std::size_t> row_;
};

struct AccessPointId {
    std::string value;

    friend bool operator==(const AccessPointId&, const AccessPointId&) = default;
};

struct ReferencePoint {
    int rp_id = 0;
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const ReferencePoint&, const ReferencePoint&) = default;
};

/// Surveyed reference points plus the canonical access-point ordering that
/// every fingerprint vector follows.
struct FloorPlan {
    std::vector<ReferencePoint> rps;
    std::vector<AccessPointId> ap_registry;

    const ReferencePoint* find(int rp_id) const noexcept;
    const ReferencePoint& at(int rp_id) const;

    /// Throws DatasetError on duplicate ids, non-finite coordinates, fewer
    /// than two RPs, an empty registry, or empty/duplicate AP ids.
    void validate() const;

    friend bool operator==(const FloorPlan&, const FloorPlan&) = default;
};

struct Fingerprint {
    int rp_id = 0;
    int ci = 0;
    std::vector<int> rssi;  // dBm, aligned to FloorPlan::ap_registry

    friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

struct FingerprintDataset {
    FloorPlan floorplan;
    std::vector<Fingerprint> fingerprints;

    void validate() const;

    /// Distinct collection instances in ascending order.
    std::vector<int> collection_instances() const;

    friend bool operator==(const FingerprintDataset&, const FingerprintDataset&) = default;
};

FloorPlan load_floorplan(const std::filesystem::path& path);

/// Reads and validates both CSVs. The AP registry comes from the fingerprint
/// header; errors name the offending row.
FingerprintDataset load_dataset(const std::filesystem::path& floorplan_path,
                                const std::filesystem::path& fingerprints_path);

/// Reads a fingerprint CSV against `floorplan` (whose registry is replaced
/// by the CSV header).
FingerprintDataset load_fingerprints(const std::filesystem::path& fingerprints_path, FloorPlan floorplan);

/// Re-orders every fingerprint to `registry`: APs are matched by id, APs the
/// dataset never saw read as kMissingRssi, and APs outside `registry` are
/// dropped.
FingerprintDataset align_to_registry(const FingerprintDataset& dataset, const std::vector<AccessPointId>& registry);

void save_floorplan(const FloorPlan& floorplan, const std::filesystem::path& path);
void save_fingerprints(const FingerprintDataset& dataset, const std::filesystem::path& path);
void save_dataset(const FingerprintDataset& dataset, const std::filesystem::path& floorplan_path,
                  const std::filesystem::path& fingerprints_path);

/// Scan rows read against a known registry: columns named `ap_<id>` are
/// matched by id, unknown columns are ignored and registry APs absent from
/// the header read as kMissingRssi. `rp_id` and `ci` columns are optional.
std::vector<Fingerprint> load_scans(const std::filesystem::path& path,
                                    const std::vector<AccessPointId>& registry);

struct DatasetSplit {
    FingerprintDataset train;
    FingerprintDataset test;
};

/// Keeps min(fpr, available) fingerprints per RP from `train_ci` for training
/// (uniform without replacement, seeded); everything else goes to test.
/// Both halves preserve the original row order.
DatasetSplit split_by_ci(const FingerprintDataset& dataset, int train_ci, int fpr, std::uint64_t seed);

}  // namespace stone
