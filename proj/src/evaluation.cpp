#include "stone/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "csv_util.hpp"

namespace stone {

namespace {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::jthread> workers;
    const std::size_t chunk = (count + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        workers.emplace_back([&fn, begin, end] {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
}

EvalReport run_queries(std::string method, const EmbeddingIndex& index, const std::vector<std::vector<double>>& queries,
                       const FingerprintDataset& test, const EvalOptions& options) {
    std::vector<QueryError> errors(queries.size());
    parallel_for(queries.size(), options.threads, [&](std::size_t i) {
        const auto& fp = test.fingerprints[i];
        const Prediction pred = knn_decide(index, queries[i], options.k, options.rule);
        errors[i] = {fp.ci, fp.rp_id, localization_error(pred, test.floorplan.at(fp.rp_id))};
    });
    return summarize(std::move(method), std::move(errors));
}

}  // namespace

double localization_error(const Prediction& pred, const ReferencePoint& truth) noexcept {
    return std::hypot(pred.x - truth.x, pred.y - truth.y);
}

double EvalReport::mean_over(int first_ci, int last_ci) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [ci, s] : per_ci)
        if (ci >= first_ci && ci <= last_ci) {
            sum += s.mean_error_m * static_cast<double>(s.n);
            n += s.n;
        }
    if (n == 0) throw Error("no queries in ci range");
    return sum / static_cast<double>(n);
}

EvalReport summarize(std::string method, std::vector<QueryError> queries) {
    if (queries.empty()) throw Error("cannot summarize an empty query set");
    EvalReport report;
    report.method = std::move(method);
    std::map<int, double> sums;
    double total = 0.0;
    for (const auto& q : queries) {
        sums[q.ci] += q.error_m;
        ++report.per_ci[q.ci].n;
        total += q.error_m;
    }
    for (auto& [ci, s] : report.per_ci) s.mean_error_m = sums[ci] / static_cast<double>(s.n);
    report.overall_mean_error = total / static_cast<double>(queries.size());
    report.queries = std::move(queries);
    return report;
}

EvalReport evaluate_over_time(const EncoderModel& model, const EmbeddingIndex& index, const FingerprintDataset& test,
                              const EvalOptions& options) {
    if (test.fingerprints.empty()) throw Error("test set is empty");
    std::vector<FingerprintImage> images;
    images.reserve(test.fingerprints.size());
    for (const auto& fp : test.fingerprints) images.push_back(to_image(fp));
    const Eigen::MatrixXd emb = encode_batch(model, images);
    std::vector<std::vector<double>> queries(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto col = emb.col(static_cast<Eigen::Index>(i));
        queries[i].assign(col.data(), col.data() + col.size());
    }
    return run_queries("stone", index, queries, test, options);
}

EvalReport evaluate_baseline(const FingerprintDataset& train, const FingerprintDataset& test,
                             const EvalOptions& options) {
    if (test.fingerprints.empty()) throw Error("test set is empty");
    const EmbeddingIndex index = build_baseline_index(train);
    std::vector<std::vector<double>> queries;
    queries.reserve(test.fingerprints.size());
    for (const auto& fp : test.fingerprints) queries.push_back(normalized_vector(fp.rssi));
    return run_queries("knn", index, queries, test, options);
}

void write_report_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "ci,method,n,mean_error_m\n";
    for (const auto& r : reports)
        for (const auto& [ci, s] : r.per_ci)
            out << ci << ',' << r.method << ',' << s.n << ',' << csv::format_double(s.mean_error_m) << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

void write_query_errors_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "ci,method,rp_id,error_m\n";
    for (const auto& r : reports)
        for (const auto& q : r.queries)
            out << q.ci << ',' << r.method << ',' << q.rp_id << ',' << csv::format_double(q.error_m) << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

std::vector<SweepRow> fpr_sweep(const FingerprintDataset& dataset, const SweepConfig& cfg) {
    if (cfg.fprs.empty() || cfg.repeats == 0) throw Error("sweep needs at least one fpr and one repeat");
    for (int fpr : cfg.fprs)
        if (fpr < 1) throw Error("fpr values must be positive");
    std::map<int, int> available;
    for (const auto& fp : dataset.fingerprints)
        if (fp.ci == cfg.train_ci) ++available[fp.rp_id];
    const int largest = *std::max_element(cfg.fprs.begin(), cfg.fprs.end());
    for (const auto& rp : dataset.floorplan.rps)
        if (available[rp.rp_id] < largest)
            throw Error("rp_id " + std::to_string(rp.rp_id) + " has only " + std::to_string(available[rp.rp_id]) +
                        " fingerprints at ci " + std::to_string(cfg.train_ci) + ", fewer than fpr " +
                        std::to_string(largest));

    std::vector<SweepRow> rows;
    for (int fpr : cfg.fprs) {
        SweepRow row;
        row.fpr = fpr;
        std::map<int, double> ci_sums;
        for (std::size_t r = 0; r < cfg.repeats; ++r) {
            const std::uint64_t split_seed = make_stream(cfg.seed, 2 * r)();
            auto split = split_by_ci(dataset, cfg.train_ci, fpr, split_seed);
            // Score every fpr on the same queries: leftover train_ci rows vary with fpr.
            std::erase_if(split.test.fingerprints, [&](const Fingerprint& fp) { return fp.ci == cfg.train_ci; });
            TrainConfig tc = cfg.train;
            tc.seed = make_stream(cfg.seed, 2 * r + 1)();
            const auto trained = train(split.train, tc);
            const auto report = evaluate_over_time(trained.model, trained.index, split.test, cfg.eval);
            for (const auto& [ci, s] : report.per_ci) ci_sums[ci] += s.mean_error_m;
            row.overall_mean += report.overall_mean_error;
        }
        for (const auto& [ci, sum] : ci_sums) row.per_ci_mean[ci] = sum / static_cast<double>(cfg.repeats);
        row.overall_mean /= static_cast<double>(cfg.repeats);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << "fpr,ci,mean_error_m\n";
    for (const auto& row : rows) {
        for (const auto& [ci, mean] : row.per_ci_mean) out << row.fpr << ',' << ci << ',' << csv::format_double(mean) << '\n';
        out << row.fpr << ",overall," << csv::format_double(row.overall_mean) << '\n';
    }
    if (!out) throw Error("write failed for " + path.string());
}

}  // namespace stone
