#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "tripletmetric/config.hpp"
#include "tripletmetric/core.hpp"
#include "tripletmetric/descent.hpp"
#include "tripletmetric/error.hpp"
#include "tripletmetric/fairness.hpp"
#include "tripletmetric/io.hpp"
#include "tripletmetric/pca.hpp"
#include "tripletmetric/pipeline.hpp"
#include "tripletmetric/simulate.hpp"
#include "tripletmetric/spectral.hpp"
#include "tripletmetric/version.hpp"

namespace tmet = tripletmetric;

namespace {

void emit_json(const nlohmann::json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw tmet::DataError("cannot open '" + out_path + "' for writing");
    out << j.dump(2) << '\n';
}

tmet::Index default_threads_from_env() {
    const char* env = std::getenv("TRIPLET_METRIC_THREADS");
    if (env == nullptr || *env == '\0') return 0;
    try {
        const long value = std::stol(env);
        if (value < 0) throw std::invalid_argument("negative");
        return static_cast<tmet::Index>(value);
    } catch (const std::exception&) {
        throw tmet::ConfigError(std::string("TRIPLET_METRIC_THREADS must be a nonnegative "
                                          "integer, got '") +
                              env + "'");
    }
}

tmet::TripletBatch load_batch(const std::string& triplets_path, tmet::Index n) {
    const tmet::io::TripletFile file = tmet::io::read_triplet_csv(triplets_path);
    return file.to_batch(n);
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Learns a low-rank Mahalanobis similarity metric from noisy triplet "
                 "comparisons and audits individual fairness against it."};
    app.set_version_flag("--version", std::string(tmet::kVersion));
    app.require_subcommand(1);
    const tmet::Index env_threads = default_threads_from_env();

    // gen-data ---------------------------------------------------------
    auto* gen_data = app.add_subcommand("gen-data", "Generate a synthetic feature matrix");
    struct {
        std::string dist = "gaussian-diagonal";
        double chi = 1.0, rho = 0.8;
        tmet::Index n = 120, p = 20;
        std::uint64_t seed = 0;
        std::string out = "features.csv";
    } gd;
    gen_data->add_option("--dist", gd.dist,
                         "gaussian-diagonal, gaussian-ar, or bernoulli");
    gen_data->add_option("--chi", gd.chi, "anisotropy parameter (>= 1)");
    gen_data->add_option("--rho", gd.rho, "autoregressive correlation in (0, 1)");
    gen_data->add_option("--n", gd.n, "number of individuals");
    gen_data->add_option("--p", gd.p, "feature dimension");
    gen_data->add_option("--seed", gd.seed, "random seed");
    gen_data->add_option("--out", gd.out, "output CSV path");
    gen_data->callback([&] {
        tmet::FeatureDistribution dist;
        dist.kind = tmet::feature_kind_from_string(gd.dist);
        dist.p = gd.p;
        dist.chi = gd.chi;
        dist.rho = gd.rho;
        dist.seed = gd.seed;
        tmet::io::write_matrix_csv(gd.out, tmet::gen_features(dist, gd.n));
        std::cout << "wrote " << gd.out << '\n';
    });

    // gen-metric -------------------------------------------------------
    auto* gen_metric_cmd = app.add_subcommand("gen-metric", "Generate a ground-truth metric");
    struct {
        tmet::Index p = 20, r = 3;
        std::uint64_t seed = 0;
        std::string factor_out = "factor_true.csv";
        std::string metric_out = "metric_true.csv";
    } gm;
    gen_metric_cmd->add_option("--p", gm.p, "feature dimension");
    gen_metric_cmd->add_option("--r", gm.r, "metric rank");
    gen_metric_cmd->add_option("--seed", gm.seed, "random seed");
    gen_metric_cmd->add_option("--factor-out", gm.factor_out, "factor CSV path");
    gen_metric_cmd->add_option("--metric-out", gm.metric_out, "metric CSV path");
    gen_metric_cmd->callback([&] {
        const auto [metric, factor] = tmet::gen_metric(gm.p, gm.r, gm.seed);
        tmet::io::write_matrix_csv(gm.factor_out, factor);
        tmet::io::write_matrix_csv(gm.metric_out, metric);
        std::cout << "wrote " << gm.factor_out << " and " << gm.metric_out << '\n';
    });

    // sample-triplets ----------------------------------------------------
    auto* sample_cmd = app.add_subcommand("sample-triplets", "Sample the triplet set");
    struct {
        tmet::Index n = 120;
        double s = 0.5;
        std::uint64_t seed = 0;
        std::string out = "triplets.csv";
    } st;
    sample_cmd->add_option("--n", st.n, "number of individuals");
    sample_cmd->add_option("--s", st.s, "inclusion probability in [0, 1]");
    sample_cmd->add_option("--seed", st.seed, "random seed");
    sample_cmd->add_option("--out", st.out, "output CSV path");
    sample_cmd->callback([&] {
        tmet::io::write_triplet_csv(st.out, tmet::sample_triplets(st.n, st.s, st.seed));
        std::cout << "wrote " << st.out << '\n';
    });

    // simulate -----------------------------------------------------------
    auto* simulate_cmd =
        app.add_subcommand("simulate", "Draw Bradley-Terry responses for given triplets");
    struct {
        std::string features, factor, triplets;
        std::uint64_t seed = 0;
        std::string out = "responses.csv";
    } sim;
    simulate_cmd->add_option("--features", sim.features, "feature CSV")->required();
    simulate_cmd->add_option("--factor", sim.factor, "ground-truth factor CSV")->required();
    simulate_cmd->add_option("--triplets", sim.triplets, "triplet CSV")->required();
    simulate_cmd->add_option("--seed", sim.seed, "random seed");
    simulate_cmd->add_option("--out", sim.out, "output CSV path");
    simulate_cmd->callback([&] {
        const Eigen::MatrixXd features = tmet::io::read_matrix_csv(sim.features);
        const Eigen::MatrixXd factor = tmet::io::read_matrix_csv(sim.factor);
        const auto file = tmet::io::read_triplet_csv(sim.triplets);
        const tmet::TripletBatch batch =
            tmet::sample_responses(features, factor, file.triplets, sim.seed);
        tmet::io::write_triplet_csv(sim.out, batch);
        std::cout << "wrote " << sim.out << '\n';
    });

    // init ---------------------------------------------------------------
    auto* init_cmd = app.add_subcommand("init", "Spectral initialization from responses");
    struct {
        std::string features, triplets;
        tmet::Index r = 3;
        double discard_fraction = 0.1;
        double pi_floor = 1e-12;
        bool symmetrize = false;
        std::string factor_out = "factor_init.csv";
        std::string report_out;
    } in;
    init_cmd->add_option("--features", in.features, "feature CSV")->required();
    init_cmd->add_option("--triplets", in.triplets, "response CSV (i,j,k,y)")->required();
    init_cmd->add_option("--r", in.r, "metric rank");
    init_cmd->add_option("--discard-fraction", in.discard_fraction,
                         "fraction of largest-norm individuals to drop");
    init_cmd->add_option("--pi-floor", in.pi_floor, "score floor applied before logs");
    init_cmd->add_flag("--symmetrize", in.symmetrize,
                       "average the log-score matrix with its transpose");
    init_cmd->add_option("--factor-out", in.factor_out, "output factor CSV");
    init_cmd->add_option("--report-out", in.report_out, "optional report JSON path");
    init_cmd->callback([&] {
        const Eigen::MatrixXd features = tmet::io::read_matrix_csv(in.features);
        tmet::validate_features(features);
        const tmet::TripletBatch batch = load_batch(in.triplets, features.rows());
        tmet::InitOptions options;
        options.discard_fraction = in.discard_fraction;
        options.pi_floor = in.pi_floor;
        options.symmetrize = in.symmetrize;
        const auto [factor, report] = tmet::spectral_init(batch, features, in.r, options);
        tmet::io::write_matrix_csv(in.factor_out, factor);
        if (!in.report_out.empty()) emit_json(tmet::io::to_json(report), in.report_out);
        std::cout << "wrote " << in.factor_out << '\n';
    });

    // train ----------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "Gradient descent from an initial factor");
    struct {
        std::string features, triplets, init;
        double eta = 0.1;
        tmet::Index iterations = 200;
        tmet::Index record_every = 1;
        std::string reference;
        tmet::Index threads = 0;
        std::string factor_out = "factor_estimate.csv";
        std::string trace_out = "trace.csv";
        std::string metric_out;
    } tr;
    tr.threads = env_threads;
    train_cmd->add_option("--features", tr.features, "feature CSV")->required();
    train_cmd->add_option("--triplets", tr.triplets, "response CSV (i,j,k,y)")->required();
    train_cmd->add_option("--init", tr.init, "initial factor CSV")->required();
    train_cmd->add_option("--eta", tr.eta, "step size");
    train_cmd->add_option("--iterations,--T", tr.iterations, "number of gradient steps");
    train_cmd->add_option("--record-every", tr.record_every, "trace recording stride");
    train_cmd->add_option("--reference", tr.reference,
                          "ground-truth factor CSV for aligned-error diagnostics");
    train_cmd->add_option("--threads", tr.threads, "worker count (0 = machine, 1 = reproducible)");
    train_cmd->add_option("--factor-out", tr.factor_out, "output factor CSV");
    train_cmd->add_option("--trace-out", tr.trace_out, "output trace CSV");
    train_cmd->add_option("--metric-out", tr.metric_out, "optional output metric CSV");
    train_cmd->callback([&] {
        const Eigen::MatrixXd features = tmet::io::read_matrix_csv(tr.features);
        tmet::validate_features(features);
        const tmet::TripletBatch batch = load_batch(tr.triplets, features.rows());
        tmet::TrainConfig config;
        config.eta = tr.eta;
        config.iterations = tr.iterations;
        config.record_every = tr.record_every;
        config.threads = tmet::resolve_threads(tr.threads);
        if (!tr.reference.empty())
            config.reference_factor = tmet::io::read_matrix_csv(tr.reference);
        const auto [factor, trace] =
            tmet::train(batch, features, tmet::io::read_matrix_csv(tr.init), config);
        tmet::io::write_matrix_csv(tr.factor_out, factor);
        tmet::io::write_trace_csv(tr.trace_out, trace, config.threads == 1);
        if (!tr.metric_out.empty())
            tmet::io::write_matrix_csv(tr.metric_out, factor * factor.transpose());
        std::cout << "wrote " << tr.factor_out << " and " << tr.trace_out << '\n';
    });

    // audit ------------------------------------------------------------------
    auto* audit_cmd = app.add_subcommand("audit", "Lipschitz audit of predictions");
    struct {
        std::string features, predictions, metric;
        std::string outcome = "euclidean";
        tmet::Index pair_cap = 2000000;
        std::uint64_t seed = 0;
        std::string out;
    } au;
    audit_cmd->add_option("--features", au.features, "feature CSV")->required();
    audit_cmd->add_option("--predictions", au.predictions, "prediction CSV")->required();
    audit_cmd->add_option("--metric", au.metric, "metric CSV")->required();
    audit_cmd->add_option("--outcome-metric", au.outcome, "euclidean or absolute-difference");
    audit_cmd->add_option("--pair-cap", au.pair_cap, "maximum pairs to evaluate");
    audit_cmd->add_option("--seed", au.seed, "pair-sampling seed");
    audit_cmd->add_option("--out", au.out, "report JSON path (stdout when omitted)");
    audit_cmd->callback([&] {
        const Eigen::MatrixXd features = tmet::io::read_matrix_csv(au.features);
        tmet::PredictionSet predictions;
        predictions.outputs = tmet::io::read_matrix_csv(au.predictions);
        predictions.outcome_metric = tmet::outcome_metric_from_string(au.outcome);
        const Eigen::MatrixXd metric = tmet::io::read_matrix_csv(au.metric);
        tmet::validate_metric(metric);
        const tmet::AuditReport report =
            tmet::audit(predictions, features, metric, au.pair_cap, au.seed);
        emit_json(tmet::io::to_json(report), au.out);
    });

    // certify ------------------------------------------------------------------
    auto* certify_cmd =
        app.add_subcommand("certify", "Audit against both metrics and check the transfer bound");
    struct {
        std::string features, predictions, est_metric, true_metric;
        std::string outcome = "euclidean";
        tmet::Index pair_cap = 2000000;
        std::uint64_t seed = 0;
        std::string out;
    } ce;
    certify_cmd->add_option("--features", ce.features, "feature CSV")->required();
    certify_cmd->add_option("--predictions", ce.predictions, "prediction CSV")->required();
    certify_cmd->add_option("--est-metric", ce.est_metric, "estimated metric CSV")->required();
    certify_cmd->add_option("--true-metric", ce.true_metric, "true metric CSV")->required();
    certify_cmd->add_option("--outcome-metric", ce.outcome, "euclidean or absolute-difference");
    certify_cmd->add_option("--pair-cap", ce.pair_cap, "maximum pairs to evaluate");
    certify_cmd->add_option("--seed", ce.seed, "pair-sampling seed");
    certify_cmd->add_option("--out", ce.out, "record JSON path (stdout when omitted)");
    certify_cmd->callback([&] {
        const Eigen::MatrixXd features = tmet::io::read_matrix_csv(ce.features);
        tmet::PredictionSet predictions;
        predictions.outputs = tmet::io::read_matrix_csv(ce.predictions);
        predictions.outcome_metric = tmet::outcome_metric_from_string(ce.outcome);
        const Eigen::MatrixXd est = tmet::io::read_matrix_csv(ce.est_metric);
        const Eigen::MatrixXd truth = tmet::io::read_matrix_csv(ce.true_metric);
        tmet::validate_metric(est);
        tmet::validate_metric(truth);
        const tmet::CertificationRecord record =
            tmet::certify_transfer(predictions, features, est, truth, ce.pair_cap, ce.seed);
        emit_json(tmet::io::to_json(record), ce.out);
    });

    // pipeline -------------------------------------------------------------------
    auto* pipeline_cmd = app.add_subcommand("pipeline", "Run the full experiment");
    struct {
        std::string config_path;
        std::string dist = "gaussian-diagonal";
        double chi = 1.0, rho = 0.8;
        std::string csv_path;
        bool has_header = false;
        tmet::Index pca_components = 0;
        tmet::RunConfig config;
    } pl;
    pl.config.threads = env_threads;
    pipeline_cmd->add_option("--config", pl.config_path,
                             "config JSON path; overrides the other flags");
    pipeline_cmd->add_option("--seed", pl.config.seed, "random seed");
    pipeline_cmd->add_option("--dist", pl.dist, "synthetic feature distribution");
    pipeline_cmd->add_option("--chi", pl.chi, "anisotropy parameter");
    pipeline_cmd->add_option("--rho", pl.rho, "autoregressive correlation");
    pipeline_cmd->add_option("--n", pl.config.data.n, "number of individuals");
    pipeline_cmd->add_option("--p", pl.config.data.p, "feature dimension");
    pipeline_cmd->add_option("--csv", pl.csv_path, "ingest features from this CSV instead");
    pipeline_cmd->add_flag("--has-header", pl.has_header, "CSV has a header row");
    pipeline_cmd->add_option("--pca-components", pl.pca_components,
                             "project ingested features onto this many components");
    pipeline_cmd->add_option("--r", pl.config.r, "metric rank");
    pipeline_cmd->add_option("--s", pl.config.s, "triplet inclusion probability");
    pipeline_cmd->add_option("--eta", pl.config.eta, "step size");
    pipeline_cmd->add_option("--iterations,--T", pl.config.iterations, "gradient steps");
    pipeline_cmd->add_option("--record-every", pl.config.record_every, "trace stride");
    pipeline_cmd->add_option("--discard-fraction", pl.config.discard_fraction,
                             "norm-filter fraction");
    pipeline_cmd->add_option("--pi-floor", pl.config.pi_floor, "score floor before logs");
    pipeline_cmd->add_flag("--symmetrize", pl.config.symmetrize,
                           "average the log-score matrix with its transpose");
    pipeline_cmd->add_option("--threads", pl.config.threads,
                             "worker count (0 = machine, 1 = reproducible)");
    pipeline_cmd->add_option("--out-dir", pl.config.out_dir, "output directory");
    pipeline_cmd->callback([&] {
        tmet::RunConfig config = pl.config;
        config.data.kind = tmet::feature_kind_from_string(pl.dist);
        config.data.chi = pl.chi;
        config.data.rho = pl.rho;
        if (!pl.csv_path.empty()) {
            config.data.source = tmet::DataConfig::Source::Csv;
            config.data.path = pl.csv_path;
            config.data.has_header = pl.has_header;
            if (pl.pca_components > 0) config.data.pca_components = pl.pca_components;
        }
        if (!pl.config_path.empty()) {
            std::ifstream in(pl.config_path);
            if (!in) throw tmet::DataError("cannot open '" + pl.config_path + "'");
            std::string text((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            config = tmet::parse_run_config(text);
        }
        const tmet::RunLog log = tmet::run_pipeline(config);
        nlohmann::json summary;
        summary["out_dir"] = config.out_dir;
        summary["runlog"] = log.files.at("runlog");
        summary["init_aligned_error"] = log.init_aligned_error;
        summary["final_aligned_error"] = log.final_aligned_error;
        summary["metric_gap_spectral"] = log.metric_gap_spectral;
        summary["certification_holds"] = log.certification.holds;
        std::cout << summary.dump(2) << '\n';
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        throw tmet::ConfigError(std::string("command line: ") + e.what());
    }
    return 0;
}

void emit_error(const char* kind, const std::exception& e) {
    nlohmann::json record;
    record["error"]["type"] = kind;
    record["error"]["message"] = e.what();
    std::cerr << record.dump() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const tmet::ConfigError& e) {
        emit_error("config", e);
        return 2;
    } catch (const tmet::DataError& e) {
        emit_error("data", e);
        return 3;
    } catch (const tmet::NumericalError& e) {
        emit_error("numerical", e);
        return 4;
    } catch (const std::exception& e) {
        emit_error("internal", e);
        return 1;
    }
}
