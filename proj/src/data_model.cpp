#include "stone/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string_view>
#include <unordered_map>

#include "csv_util.hpp"

namespace stone {

namespace {

constexpr std::string_view kApPrefix = "ap_";

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DatasetError("cannot write " + path.string());
    return out;
}

int parse_rssi(std::string_view cell, std::size_t row) {
    const int value = csv::parse_int(cell, row, "rssi");
    if (value < kMissingRssi || value > kMaxRssi)
        throw DatasetError("rssi value " + std::to_string(value) + " outside [-100, 0]", row);
    return value;
}

}  // namespace

const ReferencePoint* FloorPlan::find(int rp_id) const noexcept {
    auto it = std::find_if(rps.begin(), rps.end(), [rp_id](const ReferencePoint& rp) { return rp.rp_id == rp_id; });
    return it == rps.end() ? nullptr : &*it;
}

const ReferencePoint& FloorPlan::at(int rp_id) const {
    const ReferencePoint* rp = find(rp_id);
    if (rp == nullptr) throw DatasetError("unknown rp_id " + std::to_string(rp_id));
    return *rp;
}

void FloorPlan::validate() const {
    if (rps.size() < 2) throw DatasetError("floor plan needs at least 2 reference points");
    std::set<int> ids;
    for (const auto& rp : rps) {
        if (!ids.insert(rp.rp_id).second) throw DatasetError("duplicate rp_id " + std::to_string(rp.rp_id));
        if (!std::isfinite(rp.x) || !std::isfinite(rp.y))
            throw DatasetError("non-finite coordinates for rp_id " + std::to_string(rp.rp_id));
    }
    if (ap_registry.empty()) throw DatasetError("access point registry is empty");
    std::set<std::string> aps;
    for (const auto& ap : ap_registry) {
        if (ap.value.empty()) throw DatasetError("empty access point id");
        if (!aps.insert(ap.value).second) throw DatasetError("duplicate access point id " + ap.value);
    }
}

void FingerprintDataset::validate() const {
    floorplan.validate();
    std::set<int> ids;
    for (const auto& rp : floorplan.rps) ids.insert(rp.rp_id);
    for (std::size_t i = 0; i < fingerprints.size(); ++i) {
        const auto& fp = fingerprints[i];
        const std::string where = "fingerprint " + std::to_string(i) + ": ";
        if (!ids.contains(fp.rp_id)) throw DatasetError(where + "unknown rp_id " + std::to_string(fp.rp_id));
        if (fp.ci < 0) throw DatasetError(where + "negative ci");
        if (fp.rssi.size() != floorplan.ap_registry.size())
            throw DatasetError(where + "rssi length does not match the AP registry");
        for (int v : fp.rssi)
            if (v < kMissingRssi || v > kMaxRssi) throw DatasetError(where + "rssi outside [-100, 0]");
    }
}

std::vector<int> FingerprintDataset::collection_instances() const {
    std::set<int> cis;
    for (const auto& fp : fingerprints) cis.insert(fp.ci);
    return {cis.begin(), cis.end()};
}

FloorPlan load_floorplan(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw DatasetError("empty floor plan file " + path.string());
    const auto header = csv::split(line);
    if (header != std::vector<std::string>{"rp_id", "x_m", "y_m"})
        throw DatasetError("floor plan header must be rp_id,x_m,y_m", 1);

    FloorPlan plan;
    std::set<int> seen;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (csv::is_blank(line)) continue;
        const auto cells = csv::split(line);
        if (cells.size() != 3) throw DatasetError("expected 3 columns, found " + std::to_string(cells.size()), row);
        ReferencePoint rp;
        rp.rp_id = csv::parse_int(cells[0], row, "rp_id");
        rp.x = csv::parse_double(cells[1], row, "x_m");
        rp.y = csv::parse_double(cells[2], row, "y_m");
        if (!seen.insert(rp.rp_id).second) throw DatasetError("duplicate rp_id " + cells[0], row);
        plan.rps.push_back(rp);
    }
    if (plan.rps.size() < 2) throw DatasetError("floor plan needs at least 2 reference points");
    return plan;
}

FingerprintDataset load_dataset(const std::filesystem::path& floorplan_path,
                                const std::filesystem::path& fingerprints_path) {
    return load_fingerprints(fingerprints_path, load_floorplan(floorplan_path));
}

FingerprintDataset load_fingerprints(const std::filesystem::path& fingerprints_path, FloorPlan floorplan) {
    FingerprintDataset dataset;
    dataset.floorplan = std::move(floorplan);
    dataset.floorplan.ap_registry.clear();

    auto in = open_input(fingerprints_path);
    std::string line;
    if (!std::getline(in, line)) throw DatasetError("empty fingerprint file " + fingerprints_path.string());
    const auto header = csv::split(line);
    if (header.size() < 3 || header[0] != "rp_id" || header[1] != "ci")
        throw DatasetError("fingerprint header must be rp_id,ci,ap_<id>,...", 1);
    for (std::size_t c = 2; c < header.size(); ++c) {
        const std::string& name = header[c];
        if (!name.starts_with(kApPrefix) || name.size() == kApPrefix.size())
            throw DatasetError("bad access point column '" + name + "'", 1);
        dataset.floorplan.ap_registry.push_back({name.substr(kApPrefix.size())});
    }

    std::set<int> known;
    for (const auto& rp : dataset.floorplan.rps) known.insert(rp.rp_id);

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (csv::is_blank(line)) continue;
        const auto cells = csv::split(line);
        if (cells.size() != header.size())
            throw DatasetError("expected " + std::to_string(header.size()) + " columns, found " +
                                   std::to_string(cells.size()),
                               row);
        Fingerprint fp;
        fp.rp_id = csv::parse_int(cells[0], row, "rp_id");
        if (!known.contains(fp.rp_id)) throw DatasetError("unknown rp_id " + cells[0], row);
        fp.ci = csv::parse_int(cells[1], row, "ci");
        if (fp.ci < 0) throw DatasetError("negative ci", row);
        fp.rssi.reserve(cells.size() - 2);
        for (std::size_t c = 2; c < cells.size(); ++c) fp.rssi.push_back(parse_rssi(cells[c], row));
        dataset.fingerprints.push_back(std::move(fp));
    }
    dataset.validate();
    return dataset;
}

FingerprintDataset align_to_registry(const FingerprintDataset& dataset, const std::vector<AccessPointId>& registry) {
    if (dataset.floorplan.ap_registry == registry) return dataset;
    std::unordered_map<std::string, std::size_t> source;
    for (std::size_t i = 0; i < dataset.floorplan.ap_registry.size(); ++i)
        source.emplace(dataset.floorplan.ap_registry[i].value, i);
    std::vector<std::optional<std::size_t>> from(registry.size());
    for (std::size_t j = 0; j < registry.size(); ++j) {
        auto it = source.find(registry[j].value);
        if (it != source.end()) from[j] = it->second;
    }
    FingerprintDataset out;
    out.floorplan = dataset.floorplan;
    out.floorplan.ap_registry = registry;
    out.fingerprints.reserve(dataset.fingerprints.size());
    for (const auto& fp : dataset.fingerprints) {
        Fingerprint aligned{fp.rp_id, fp.ci, std::vector<int>(registry.size(), kMissingRssi)};
        for (std::size_t j = 0; j < registry.size(); ++j)
            if (from[j]) aligned.rssi[j] = fp.rssi[*from[j]];
        out.fingerprints.push_back(std::move(aligned));
    }
    return out;
}

void save_floorplan(const FloorPlan& floorplan, const std::filesystem::path& path) {
    auto out = open_output(path);
    out << "rp_id,x_m,y_m\n";
    for (const auto& rp : floorplan.rps)
        out << rp.rp_id << ',' << csv::format_double(rp.x) << ',' << csv::format_double(rp.y) << '\n';
    if (!out) throw DatasetError("write failed for " + path.string());
}

void save_fingerprints(const FingerprintDataset& dataset, const std::filesystem::path& path) {
    auto out = open_output(path);
    out << "rp_id,ci";
    for (const auto& ap : dataset.floorplan.ap_registry) out << ',' << kApPrefix << ap.value;
    out << '\n';
    for (const auto& fp : dataset.fingerprints) {
        out << fp.rp_id << ',' << fp.ci;
        for (int v : fp.rssi) out << ',' << v;
        out << '\n';
    }
    if (!out) throw DatasetError("write failed for " + path.string());
}

void save_dataset(const FingerprintDataset& dataset, const std::filesystem::path& floorplan_path,
                  const std::filesystem::path& fingerprints_path) {
    save_floorplan(dataset.floorplan, floorplan_path);
    save_fingerprints(dataset, fingerprints_path);
}

std::vector<Fingerprint> load_scans(const std::filesystem::path& path, const std::vector<AccessPointId>& registry) {
    auto in = open_input(path);
    std::string line;
    if (!std::getline(in, line)) throw DatasetError("empty scan file " + path.string());
    const auto header = csv::split(line);

    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < registry.size(); ++i) slot.emplace(registry[i].value, i);

    std::optional<std::size_t> rp_col, ci_col;
    std::vector<std::pair<std::size_t, std::size_t>> ap_cols;  // (column, registry slot)
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "rp_id") {
            rp_col = c;
        } else if (header[c] == "ci") {
            ci_col = c;
        } else if (header[c].starts_with(kApPrefix)) {
            auto it = slot.find(header[c].substr(kApPrefix.size()));
            if (it != slot.end()) ap_cols.emplace_back(c, it->second);
        }
    }

    std::vector<Fingerprint> scans;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (csv::is_blank(line)) continue;
        const auto cells = csv::split(line);
        if (cells.size() != header.size())
            throw DatasetError("expected " + std::to_string(header.size()) + " columns, found " +
                                   std::to_string(cells.size()),
                               row);
        Fingerprint fp;
        fp.rssi.assign(registry.size(), kMissingRssi);
        if (rp_col) fp.rp_id = csv::parse_int(cells[*rp_col], row, "rp_id");
        if (ci_col) fp.ci = csv::parse_int(cells[*ci_col], row, "ci");
        for (auto [column, index] : ap_cols) fp.rssi[index] = parse_rssi(cells[column], row);
        scans.push_back(std::move(fp));
    }
    return scans;
}

DatasetSplit split_by_ci(const FingerprintDataset& dataset, int train_ci, int fpr, std::uint64_t seed) {
    if (fpr < 1) throw DatasetError("fpr must be at least 1");

    std::map<int, std::vector<std::size_t>> at_ci;  // rp_id -> row indices at train_ci
    for (std::size_t i = 0; i < dataset.fingerprints.size(); ++i) {
        const auto& fp = dataset.fingerprints[i];
        if (fp.ci == train_ci) at_ci[fp.rp_id].push_back(i);
    }
    if (at_ci.empty()) throw DatasetError("no fingerprints at ci " + std::to_string(train_ci));

    std::mt19937_64 rng(seed);
    std::vector<bool> in_train(dataset.fingerprints.size(), false);
    for (const auto& rp : dataset.floorplan.rps) {
        auto it = at_ci.find(rp.rp_id);
        if (it == at_ci.end())
            throw DatasetError("rp_id " + std::to_string(rp.rp_id) + " has no fingerprints at ci " +
                               std::to_string(train_ci));
        auto rows = it->second;
        std::shuffle(rows.begin(), rows.end(), rng);
        const std::size_t keep = std::min(rows.size(), static_cast<std::size_t>(fpr));
        for (std::size_t j = 0; j < keep; ++j) in_train[rows[j]] = true;
    }

    DatasetSplit split;
    split.train.floorplan = dataset.floorplan;
    split.test.floorplan = dataset.floorplan;
    for (std::size_t i = 0; i < dataset.fingerprints.size(); ++i)
        (in_train[i] ? split.train : split.test).fingerprints.push_back(dataset.fingerprints[i]);
    return split;
}

}  // namespace stone
