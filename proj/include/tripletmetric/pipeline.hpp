#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <thread>
#include <utility>

#include <Eigen/Dense>
#include <json.hpp>

#include "tripletmetric/config.hpp"
#include "tripletmetric/core.hpp"
#include "tripletmetric/descent.hpp"
#include "tripletmetric/error.hpp"
#include "tripletmetric/fairness.hpp"
#include "tripletmetric/io.hpp"
#include "tripletmetric/pca.hpp"
#include "tripletmetric/simulate.hpp"
#include "tripletmetric/spectral.hpp"
#include "tripletmetric/version.hpp"

namespace tripletmetric {

/// Everything a finished run reports: the echoed configuration, the
/// initialization diagnostics, headline errors, the fairness certification,
/// and the paths of all files the run produced.
struct RunLog {
    int schema_version = 1;
    std::string software_version = kVersion;
    nlohmann::json config_echo;
    InitReport init_report;
    double init_aligned_error = 0.0;
    double final_aligned_error = 0.0;
    double final_loss = 0.0;
    double metric_gap_spectral = 0.0;
    double metric_gap_frobenius = 0.0;
    CertificationRecord certification;
    std::map<std::string, std::string> files;  ///< logical name -> path
    std::map<std::string, double> stage_ms;
    double total_ms = 0.0;
};

inline nlohmann::json to_json(const RunLog& log) {
    nlohmann::json j;
    j["schema_version"] = log.schema_version;
    j["software_version"] = log.software_version;
    j["config"] = log.config_echo;
    j["init_report"] = io::to_json(log.init_report);
    j["init_aligned_error"] = log.init_aligned_error;
    j["final_aligned_error"] = log.final_aligned_error;
    j["final_loss"] = log.final_loss;
    j["metric_gap_spectral"] = log.metric_gap_spectral;
    j["metric_gap_frobenius"] = log.metric_gap_frobenius;
    j["certification"] = io::to_json(log.certification);
    j["files"] = log.files;
    j["stage_ms"] = log.stage_ms;
    j["total_ms"] = log.total_ms;
    return j;
}

/// Number of workers a config resolves to; 0 means machine parallelism.
inline Index resolve_threads(Index requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<Index>(hw) : Index(1);
}

/// Runs the full experiment: data generation or ingestion, ground-truth
/// metric simulation, triplet sampling, Bradley-Terry responses, spectral
/// initialization, gradient descent, and the fairness certification of the
/// embedding predictor. Artifacts are written under config.out_dir.
inline RunLog run_pipeline(const RunConfig& config) {
    namespace fs = std::filesystem;
    using clock = std::chrono::steady_clock;
    config.validate();

    const Index threads = resolve_threads(config.threads);
    const bool deterministic = threads == 1;
    const auto t_start = clock::now();
    auto elapsed_ms = [](clock::time_point a, clock::time_point b) {
        return std::chrono::duration<double, std::milli>(b - a).count();
    };

    RunLog log;
    log.config_echo = to_json(config);
    fs::create_directories(config.out_dir);
    auto out_path = [&](const std::string& name) {
        return (fs::path(config.out_dir) / name).string();
    };
    auto register_file = [&](const std::string& key, const std::string& path) {
        log.files[key] = path;
    };

    // Data stage.
    auto t0 = clock::now();
    Eigen::MatrixXd features;
    if (config.data.source == DataConfig::Source::Synthetic) {
        FeatureDistribution dist;
        dist.kind = config.data.kind;
        dist.p = config.data.p;
        dist.chi = config.data.chi;
        dist.rho = config.data.rho;
        dist.seed = config.seed;
        features = gen_features(dist, config.data.n);
    } else {
        features = io::ingest_csv(config.data.path, config.data.has_header);
        if (config.data.pca_components.has_value())
            features = pca_standardize(features, *config.data.pca_components);
    }
    const Index n = features.rows();
    const Index p = features.cols();
    if (config.r > p)
        throw ConfigError("rank " + std::to_string(config.r) + " exceeds feature dimension " +
                          std::to_string(p));
    io::write_matrix_csv(out_path("features.csv"), features);
    register_file("features", out_path("features.csv"));
    log.stage_ms["data"] = elapsed_ms(t0, clock::now());

    // Ground truth and responses.
    t0 = clock::now();
    auto [metric_true, factor_true] = gen_metric(p, config.r, config.seed);
    const auto triplets = sample_triplets(n, config.s, config.seed);
    TripletBatch batch = sample_responses(features, factor_true, triplets, config.seed);
    batch.sampling_rate = config.s > 0.0 ? config.s : 1.0;
    io::write_matrix_csv(out_path("factor_true.csv"), factor_true);
    io::write_matrix_csv(out_path("metric_true.csv"), metric_true);
    io::write_triplet_csv(out_path("triplets.csv"), batch);
    register_file("factor_true", out_path("factor_true.csv"));
    register_file("metric_true", out_path("metric_true.csv"));
    register_file("triplets", out_path("triplets.csv"));
    log.stage_ms["simulate"] = elapsed_ms(t0, clock::now());

    // Initialization stage.
    t0 = clock::now();
    InitOptions init_options;
    init_options.discard_fraction = config.discard_fraction;
    init_options.pi_floor = config.pi_floor;
    init_options.symmetrize = config.symmetrize;
    auto [factor_init, init_report] = spectral_init(batch, features, config.r, init_options);
    log.init_report = std::move(init_report);
    log.init_aligned_error = aligned_error(factor_init, factor_true);
    io::write_matrix_csv(out_path("factor_init.csv"), factor_init);
    register_file("factor_init", out_path("factor_init.csv"));
    log.stage_ms["init"] = elapsed_ms(t0, clock::now());

    // Descent stage.
    t0 = clock::now();
    TrainConfig train_config;
    train_config.eta = config.eta;
    train_config.iterations = config.iterations;
    train_config.record_every = config.record_every;
    train_config.reference_factor = factor_true;
    train_config.threads = threads;
    auto [factor_est, trace] = train(batch, features, factor_init, train_config);
    const Eigen::MatrixXd metric_est = factor_est * factor_est.transpose();
    log.final_aligned_error = aligned_error(factor_est, factor_true);
    log.final_loss = trace.samples.back().loss;
    log.metric_gap_spectral = metric_gap(metric_est, metric_true);
    log.metric_gap_frobenius = metric_gap_frobenius(metric_est, metric_true);
    io::write_matrix_csv(out_path("factor_estimate.csv"), factor_est);
    io::write_matrix_csv(out_path("metric_estimate.csv"), metric_est);
    io::write_trace_csv(out_path("trace.csv"), trace, deterministic);
    register_file("factor_estimate", out_path("factor_estimate.csv"));
    register_file("metric_estimate", out_path("metric_estimate.csv"));
    register_file("trace", out_path("trace.csv"));
    log.stage_ms["train"] = elapsed_ms(t0, clock::now());

    // Fairness stage: audit the isometric embedding predictor against the
    // estimated metric and certify the carry-over to the truth.
    t0 = clock::now();
    const PredictionSet predictions = embedding_predictions(features, factor_est);
    log.certification = certify_transfer(predictions, features, metric_est, metric_true,
                                         Index(2000000), config.seed);
    log.stage_ms["fairness"] = elapsed_ms(t0, clock::now());

    log.total_ms = elapsed_ms(t_start, clock::now());
    const std::string runlog_path = out_path("runlog.json");
    register_file("runlog", runlog_path);
    {
        std::ofstream out(runlog_path);
        if (!out) throw DataError("cannot open '" + runlog_path + "' for writing");
        out << to_json(log).dump(2) << '\n';
    }
    for (const auto& [key, path] : log.files)
        if (!fs::exists(path))
            throw DataError("pipeline output '" + key + "' missing at " + path);
    return log;
}

} // namespace tripletmetric
