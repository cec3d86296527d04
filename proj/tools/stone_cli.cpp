// Command-line front end: simulate, train, eval, sweep-fpr, gradcheck, predict.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "stone/drift_simulator.hpp"
#include "stone/evaluation.hpp"
#include "stone/localizer.hpp"

namespace fs = std::filesystem;
using namespace stone;

namespace {

struct TrainFlags {
    std::size_t embed_dim = 5;
    double alpha = 0.2;
    double p_upper = 0.9;
    double noise_sigma = 0.1;
    double dropout = 0.25;
    std::string sigma_sel = "auto";
    std::size_t epochs = 50;
    std::size_t batch = 32;
    double lr = 1e-3;

    void attach(CLI::App* cmd) {
        cmd->add_option("--embed-dim", embed_dim, "Embedding length")->capture_default_str();
        cmd->add_option("--alpha", alpha, "Triplet margin")->capture_default_str();
        cmd->add_option("--p-upper", p_upper, "Largest AP-dropout fraction")->capture_default_str();
        cmd->add_option("--noise-sigma", noise_sigma, "Input noise std-dev")->capture_default_str();
        cmd->add_option("--dropout", dropout, "Dropout rate after each conv layer")->capture_default_str();
        cmd->add_option("--sigma-sel", sigma_sel, "Negative-selection kernel width in meters, or auto")
            ->capture_default_str();
        cmd->add_option("--epochs", epochs)->capture_default_str();
        cmd->add_option("--batch", batch, "Triplets per batch")->capture_default_str();
        cmd->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    }

    TrainConfig config(std::uint64_t seed) const {
        TrainConfig tc;
        tc.encoder.embed_dim = embed_dim;
        tc.encoder.margin_alpha = alpha;
        tc.encoder.dropout_rate = dropout;
        tc.encoder.noise_sigma = noise_sigma;
        tc.augment.p_upper = p_upper;
        tc.augment.noise_sigma = noise_sigma;
        if (sigma_sel != "auto") {
            try {
                tc.sigma_sel = std::stod(sigma_sel);
            } catch (const std::exception&) {
                throw Error("--sigma-sel must be a number or 'auto'");
            }
        }
        tc.epochs = epochs;
        tc.batch_size = batch;
        tc.learning_rate = lr;
        tc.seed = seed;
        return tc;
    }
};

DecisionRule parse_rule(const std::string& name) {
    if (name == "vote") return DecisionRule::MajorityVote;
    if (name == "centroid") return DecisionRule::WeightedCentroid;
    throw Error("unknown decision rule '" + name + "' (expected vote or centroid)");
}

std::map<int, double> parse_schedule(const std::string& text) {
    std::map<int, double> schedule;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw Error("removal schedule entries look like ci:fraction");
        schedule[std::stoi(item.substr(0, colon))] = std::stod(item.substr(colon + 1));
    }
    return schedule;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Siamese-encoder WiFi fingerprint localization"};
    app.require_subcommand(1);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic longitudinal survey");
    std::string preset_name = "office-like";
    std::uint64_t sim_seed = 0;
    std::string sim_out = ".";
    SimConfig overrides;
    std::optional<std::size_t> sim_n_aps;
    std::optional<int> sim_n_cis, sim_fpr;
    std::optional<double> sim_width, sim_height, sim_spacing, sim_shadow, sim_drift, sim_ple, sim_tx, sim_margin;
    std::optional<std::string> sim_removal;
    simulate->add_option("--preset", preset_name, "office-like or uji-like")->capture_default_str();
    simulate->add_option("--seed", sim_seed)->capture_default_str();
    simulate->add_option("--out", sim_out, "Output directory")->capture_default_str();
    simulate->add_option("--n-aps", sim_n_aps);
    simulate->add_option("--n-cis", sim_n_cis);
    simulate->add_option("--fpr", sim_fpr);
    simulate->add_option("--width", sim_width);
    simulate->add_option("--height", sim_height);
    simulate->add_option("--spacing", sim_spacing);
    simulate->add_option("--ap-margin", sim_margin);
    simulate->add_option("--shadow-sigma", sim_shadow);
    simulate->add_option("--drift-sigma", sim_drift);
    simulate->add_option("--path-loss-exponent", sim_ple);
    simulate->add_option("--tx-power", sim_tx);
    simulate->add_option("--removal", sim_removal, "Cumulative removal schedule, e.g. 11:0.2,13:0.3");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the encoder and build the embedding index");
    std::string floorplan_path, fingerprints_path, model_path = "model.stne";
    int train_ci = 0, fpr = 6;
    std::uint64_t seed = 0;
    TrainFlags flags;
    train_cmd->add_option("--floorplan", floorplan_path)->required();
    train_cmd->add_option("--fingerprints", fingerprints_path)->required();
    train_cmd->add_option("--train-ci", train_ci)->capture_default_str();
    train_cmd->add_option("--fpr", fpr, "Training fingerprints per RP")->capture_default_str();
    train_cmd->add_option("--seed", seed)->capture_default_str();
    train_cmd->add_option("--out", model_path)->capture_default_str();
    flags.attach(train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Per-CI localization error of a trained model");
    std::string eval_model, eval_fingerprints, eval_floorplan, report_path = "report.csv", errors_path;
    std::size_t k = 3;
    bool with_baseline = false, eval_all = false;
    std::string rule_name = "vote";
    eval_cmd->add_option("--model", eval_model)->required();
    eval_cmd->add_option("--fingerprints", eval_fingerprints)->required();
    eval_cmd->add_option("--floorplan", eval_floorplan, "Defaults to the floor plan stored in the model");
    eval_cmd->add_option("--k", k)->capture_default_str();
    eval_cmd->add_option("--rule", rule_name, "vote or centroid")->capture_default_str();
    eval_cmd->add_flag("--baseline", with_baseline, "Also report the raw-RSSI KNN baseline");
    eval_cmd->add_flag("--all", eval_all, "Score every row instead of re-deriving the held-out split");
    eval_cmd->add_option("--report", report_path)->capture_default_str();
    eval_cmd->add_option("--errors", errors_path, "Optional per-query error dump");

    // sweep-fpr
    auto* sweep_cmd = app.add_subcommand("sweep-fpr", "Error as a function of training fingerprints per RP");
    std::string fprs_text = "1,2,4,6", sweep_report = "sweep.csv";
    std::size_t repeats = 10;
    TrainFlags sweep_flags;
    sweep_cmd->add_option("--floorplan", floorplan_path)->required();
    sweep_cmd->add_option("--fingerprints", fingerprints_path)->required();
    sweep_cmd->add_option("--fprs", fprs_text)->capture_default_str();
    sweep_cmd->add_option("--repeats", repeats)->capture_default_str();
    sweep_cmd->add_option("--train-ci", train_ci)->capture_default_str();
    sweep_cmd->add_option("--seed", seed)->capture_default_str();
    sweep_cmd->add_option("--k", k)->capture_default_str();
    sweep_cmd->add_option("--report", sweep_report)->capture_default_str();
    sweep_flags.attach(sweep_cmd);

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the encoder gradient");
    std::size_t grad_side = 3, grad_dim = 3;
    grad_cmd->add_option("--seed", seed)->capture_default_str();
    grad_cmd->add_option("--side", grad_side, "Input image side")->capture_default_str();
    grad_cmd->add_option("--embed-dim", grad_dim)->capture_default_str();

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "Locate the scans in a CSV file");
    std::string scan_path;
    predict_cmd->add_option("--model", eval_model)->required();
    predict_cmd->add_option("--scan", scan_path)->required();
    predict_cmd->add_option("--k", k)->capture_default_str();
    predict_cmd->add_option("--rule", rule_name, "vote or centroid")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) {
            SimConfig cfg = preset(preset_name);
            cfg.seed = sim_seed;
            if (sim_n_aps) cfg.n_aps = *sim_n_aps;
            if (sim_n_cis) cfg.n_cis = *sim_n_cis;
            if (sim_fpr) cfg.fpr = *sim_fpr;
            if (sim_width) cfg.width = *sim_width;
            if (sim_height) cfg.height = *sim_height;
            if (sim_spacing) cfg.rp_spacing = *sim_spacing;
            if (sim_margin) cfg.ap_margin = *sim_margin;
            if (sim_shadow) cfg.shadow_sigma_db = *sim_shadow;
            if (sim_drift) cfg.drift_sigma_db = *sim_drift;
            if (sim_ple) cfg.path_loss_exponent = *sim_ple;
            if (sim_tx) cfg.tx_power_dbm = *sim_tx;
            if (sim_removal) cfg.removal_schedule = parse_schedule(*sim_removal);
            const auto survey = generate(cfg);
            fs::create_directories(sim_out);
            save_dataset(survey.dataset, fs::path(sim_out) / "floorplan.csv", fs::path(sim_out) / "fingerprints.csv");
            save_ground_truth(survey.dataset, survey.truth, fs::path(sim_out) / "ground_truth.csv");
            std::cout << "wrote " << survey.dataset.floorplan.rps.size() << " RPs, "
                      << survey.dataset.floorplan.ap_registry.size() << " APs, "
                      << survey.dataset.fingerprints.size() << " fingerprints to " << sim_out << '\n';
        } else if (train_cmd->parsed()) {
            const auto dataset = load_dataset(floorplan_path, fingerprints_path);
            const auto split = split_by_ci(dataset, train_ci, fpr, seed);
            const auto cfg = flags.config(seed);
            const auto trained = train(split.train, cfg, [](std::size_t step, double loss) {
                if ((step + 1) % 50 == 0) std::cerr << "step " << step + 1 << " loss " << loss << '\n';
            });
            ModelBundle bundle{trained.model, trained.index, dataset.floorplan, SplitProvenance{train_ci, fpr, seed}};
            save_model(bundle, model_path);
            std::cout << "trained on " << split.train.fingerprints.size() << " fingerprints; final loss "
                      << (trained.loss_history.empty() ? 0.0 : trained.loss_history.back()) << "; wrote "
                      << model_path << '\n';
        } else if (eval_cmd->parsed()) {
            const auto bundle = load_model(eval_model);
            FloorPlan plan = eval_floorplan.empty() ? bundle.floorplan : load_floorplan(eval_floorplan);
            const auto dataset =
                align_to_registry(load_fingerprints(eval_fingerprints, std::move(plan)), bundle.floorplan.ap_registry);

            FingerprintDataset train_part, test_part = dataset;
            if (!eval_all) {
                if (!bundle.split) throw Error("model has no split record; pass --all to score every row");
                auto split = split_by_ci(dataset, bundle.split->train_ci, bundle.split->fpr, bundle.split->seed);
                train_part = std::move(split.train);
                test_part = std::move(split.test);
            } else if (with_baseline) {
                throw Error("--baseline needs the training rows; drop --all");
            }

            EvalOptions opts{k, parse_rule(rule_name), 1};
            std::vector<EvalReport> reports{evaluate_over_time(bundle.model, bundle.index, test_part, opts)};
            if (with_baseline) reports.push_back(evaluate_baseline(train_part, test_part, opts));
            write_report_csv(reports, report_path);
            if (!errors_path.empty()) write_query_errors_csv(reports, errors_path);
            for (const auto& r : reports)
                std::cout << r.method << " mean error " << r.overall_mean_error << " m over " << r.queries.size()
                          << " queries\n";
        } else if (sweep_cmd->parsed()) {
            const auto dataset = load_dataset(floorplan_path, fingerprints_path);
            SweepConfig cfg;
            cfg.fprs.clear();
            std::stringstream in(fprs_text);
            std::string item;
            while (std::getline(in, item, ',')) cfg.fprs.push_back(std::stoi(item));
            cfg.repeats = repeats;
            cfg.train_ci = train_ci;
            cfg.seed = seed;
            cfg.train = sweep_flags.config(seed);
            cfg.eval.k = k;
            const auto rows = fpr_sweep(dataset, cfg);
            write_sweep_csv(rows, sweep_report);
            for (const auto& row : rows) std::cout << "fpr " << row.fpr << " overall " << row.overall_mean << " m\n";
        } else if (grad_cmd->parsed()) {
            const auto result = random_gradient_check(seed, grad_side, grad_dim);
            std::printf("%.6e\n", result.max_relative_error);
            if (result.max_relative_error > 1e-4) {
                std::cerr << "gradient check failed at " << result.worst_parameter << "[" << result.worst_index
                          << "]\n";
                return 1;
            }
        } else if (predict_cmd->parsed()) {
            const auto bundle = load_model(eval_model);
            const auto scans = load_scans(scan_path, bundle.floorplan.ap_registry);
            const DecisionRule rule = parse_rule(rule_name);
            std::cout << "x_m,y_m,rp_id\n";
            for (const auto& scan : scans) {
                const auto p = predict(bundle.model, bundle.index, scan, k, rule);
                std::cout << p.x << ',' << p.y << ',' << p.rp_id << '\n';
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
