// SPDX-License-Identifier: Apache-2.0
//
// csg: dataset generation, beam construction, training, baselines,
// evaluation, cross-beam prediction and sweeps.
#include "csg/experiment.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

csg::BeamPatternMatrix beam_from(const std::string& path) {
    if (path == "desk") return csg::desk_beam();
    return csg::load_beam_pattern(path);
}

void write_report(const csg::MetricsReport& report, const std::string& out) {
    const auto text = csg::to_json(report).dump(2) + "\n";
    if (out.empty() || out == "-")
        std::cout << text;
    else
        csg::write_text_file(out, text);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Channel space gridization toolkit"};
    app.require_subcommand(1);

    // build-beam
    std::string beam_config, beam_out;
    auto* build = app.add_subcommand("build-beam", "Construct a beam pattern matrix file");
    build->add_option("--config", beam_config, "Beam JSON (antenna, grid, precoder; angles in degrees); omit for the desk geometry");
    build->add_option("-o,--output", beam_out, "Output beam file")->required();

    // gen-data
    std::string gd_beam = "desk", gd_out;
    csg::SyntheticConfig gd;
    gd.n_angles = 0;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen->add_option("--beam", gd_beam, "Beam file, or 'desk'");
    gen->add_option("-K,--grids", gd.n_grids, "Number of grids")->capture_default_str();
    gen->add_option("-L,--sparsity", gd.sparsity, "Nonzero entries per center")->capture_default_str();
    gen->add_option("--samples-per-grid", gd.samples_per_grid)->capture_default_str();
    gen->add_option("-p,--laplace-power", gd.laplace_power)->capture_default_str();
    gen->add_option("-s,--scale", gd.scale, "Perturbation scale in [0, 1]")->capture_default_str();
    gen->add_option("--seed", gd.seed)->capture_default_str();
    gen->add_option("-o,--output", gd_out, "Output dataset file")->required();

    // train
    std::string tr_data, tr_beam = "desk", tr_dir, tr_scheme = "PIDA";
    csg::TrainConfig tc;
    std::size_t tr_k = 0, tr_l = 0;
    auto* tr = app.add_subcommand("train", "Train the quantizing autoencoder");
    tr->add_option("--data", tr_data, "Dataset file")->required();
    tr->add_option("--beam", tr_beam, "Beam file, or 'desk'");
    tr->add_option("--scheme", tr_scheme, "naive or an ordered subset of PIDA")->capture_default_str();
    tr->add_option("-K,--grids", tr_k, "Codebook size (default: dataset K)");
    tr->add_option("-L,--sparsity", tr_l, "Codeword sparsity (default: dataset L)");
    tr->add_option("--pretrain-epochs", tc.pretrain_epochs)->capture_default_str();
    tr->add_option("--total-epochs", tc.total_epochs)->capture_default_str();
    tr->add_option("--batch-size", tc.batch_size, "0 = full batch")->capture_default_str();
    tr->add_option("--lr", tc.optimizer.learning_rate)->capture_default_str();
    tr->add_option("--weight-decay", tc.optimizer.weight_decay)->capture_default_str();
    tr->add_option("--w1", tc.weights.reconstruction)->capture_default_str();
    tr->add_option("--w2", tc.weights.quantization)->capture_default_str();
    tr->add_option("--width", tc.width)->capture_default_str();
    tr->add_option("--depth", tc.depth)->capture_default_str();
    tr->add_option("--val-fraction", tc.val_fraction)->capture_default_str();
    tr->add_option("--naive-init-std", tc.naive_init_std)->capture_default_str();
    tr->add_flag("--exclude-empty-grids", tc.exclude_empty_grids);
    tr->add_option("--seed", tc.seed)->capture_default_str();
    tr->add_option("--out-dir", tr_dir, "Directory for checkpoint, summary, log, labels, metrics")->required();

    // baseline
    std::string bl_name, bl_data, bl_beam = "desk", bl_dir;
    std::size_t bl_k = 0, bl_l = 0;
    std::uint64_t bl_seed = 0;
    auto* bl = app.add_subcommand("baseline", "Run a baseline pipeline");
    bl->add_option("--pipeline", bl_name, "Pipeline name")->required();
    bl->add_option("--data", bl_data, "Dataset file")->required();
    bl->add_option("--beam", bl_beam, "Beam file, or 'desk'");
    bl->add_option("-K,--grids", bl_k);
    bl->add_option("-L,--sparsity", bl_l);
    bl->add_option("--seed", bl_seed);
    bl->add_option("--out-dir", bl_dir)->required();

    // eval
    std::string ev_data, ev_beam = "desk", ev_labels, ev_summary, ev_out;
    std::size_t ev_k = 0;
    auto* ev = app.add_subcommand("eval", "Score predicted labels (and summary) against a dataset");
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--beam", ev_beam, "Beam file, or 'desk'");
    ev->add_option("--labels", ev_labels, "labels CSV")->required();
    ev->add_option("--summary", ev_summary, "Grid summary JSON supplying centers and per-grid CAPS");
    ev->add_option("-K,--grids", ev_k, "Grid count (default: summary size or max label + 1)");
    ev->add_option("-o,--output", ev_out, "Metrics JSON (default stdout)");

    // predict
    std::string pr_summary, pr_beam, pr_out;
    auto* pr = app.add_subcommand("predict", "Per-grid RSRP under a new beam pattern");
    pr->add_option("--summary", pr_summary)->required();
    pr->add_option("--beam", pr_beam, "Beam file, or 'desk'")->required();
    pr->add_option("-o,--output", pr_out, "Output CSV")->required();

    // sweep
    std::string sw_config;
    auto* sw = app.add_subcommand("sweep", "Run a JSON-configured experiment sweep");
    sw->add_option("config", sw_config, "Experiment JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*build) {
            csg::BeamSpec spec;
            if (beam_config.empty()) {
                spec = csg::parse_beam_spec(csg::desk_beam_json(), "/beam");
            } else {
                json j;
                try {
                    j = json::parse(csg::read_text_file(beam_config));
                } catch (const json::parse_error& e) {
                    throw csg::ConfigError(beam_config, e.what());
                }
                spec = csg::parse_beam_spec(j, "");
            }
            const auto a = csg::build_beam(spec);
            csg::save_beam_pattern(a, beam_out);
            std::printf("wrote %s (M=%zu, N=%zu)\n", beam_out.c_str(), a.n_beams(), a.n_angles());
        } else if (*gen) {
            const auto a = beam_from(gd_beam);
            if (gd.n_angles == 0) gd.n_angles = a.n_angles();
            const auto ds = csg::gen_dataset(gd, a);
            csg::save_dataset(ds, gd_out);
            std::printf("wrote %s (I=%zu, K=%zu, N=%zu, M=%zu)\n", gd_out.c_str(), ds.n_samples(), ds.n_grids(),
                        ds.n_angles(), ds.n_beams());
        } else if (*tr) {
            auto scheme = csg::SchemeFlags::parse(tr_scheme);
            if (!scheme) throw UsageError("--scheme: unknown scheme '" + tr_scheme + "'");
            const auto a = beam_from(tr_beam);
            const auto ds = csg::load_dataset(tr_data);
            tc.scheme = *scheme;
            tc.n_grids = tr_k ? tr_k : ds.n_grids();
            tc.sparsity = tr_l ? tr_l : ds.sparsity;
            const auto r = csg::train(tc, ds, a);
            fs::create_directories(tr_dir);
            const fs::path dir(tr_dir);
            csg::save_checkpoint({r.encoder, r.codebook, std::nullopt, std::nullopt}, dir / "checkpoint.csgw");
            csg::save_summary(r.summary, dir / "summary.json");
            std::ostringstream log;
            csg::write_train_log_csv(r.log, log);
            csg::write_text_file(dir / "train_log.csv", log.str());
            csg::write_text_file(dir / "labels.csv", csg::labels_csv(r.assignment.labels));
            const auto report = csg::evaluate(ds, a, r.assignment.labels, tc.n_grids, r.final_active_ratio,
                                              &r.assignment.centers, &r.summary, tc.floor_mw);
            write_report(report, (dir / "metrics.json").string());
            std::printf("scheme %s: active ratio %.4f, ARI %.4f\n", scheme->name().c_str(), r.final_active_ratio,
                        report.clustering.ari);
        } else if (*bl) {
            if (!csg::is_pipeline(bl_name)) throw UsageError("--pipeline: unknown pipeline '" + bl_name + "'");
            const auto a = beam_from(bl_beam);
            const auto ds = csg::load_dataset(bl_data);
            const std::size_t k = bl_k ? bl_k : ds.n_grids();
            const std::size_t l = bl_l ? bl_l : ds.sparsity;
            const auto p = csg::run_pipeline(bl_name, ds, a, k, l, bl_seed);
            fs::create_directories(bl_dir);
            const fs::path dir(bl_dir);
            csg::write_text_file(dir / "labels.csv", csg::labels_csv(p.labels));
            std::optional<csg::GridCapsSummary> summary;
            if (p.has_centers()) {
                summary = csg::pipeline_summary(p, a, k, l);
                csg::save_summary(*summary, dir / "summary.json");
            }
            std::set<std::uint32_t> used(p.labels.begin(), p.labels.end());
            const auto report = csg::evaluate(ds, a, p.labels, k, static_cast<double>(used.size()) / static_cast<double>(k),
                                              p.has_centers() ? &p.centers : nullptr, summary ? &*summary : nullptr);
            write_report(report, (dir / "metrics.json").string());
            std::printf("%s: ARI %.4f\n", bl_name.c_str(), report.clustering.ari);
        } else if (*ev) {
            const auto a = beam_from(ev_beam);
            const auto ds = csg::load_dataset(ev_data);
            const auto labels = csg::parse_labels_csv(csg::read_text_file(ev_labels));
            if (labels.size() != ds.n_samples())
                throw csg::Error(csg::ErrorKind::shape, "labels has " + std::to_string(labels.size()) +
                                                            " rows, dataset has " + std::to_string(ds.n_samples()));
            std::optional<csg::GridCapsSummary> summary;
            csg::Matrix centers;
            if (!ev_summary.empty()) {
                summary = csg::load_summary(ev_summary);
                centers.resize(static_cast<Eigen::Index>(summary->n_grids()), static_cast<Eigen::Index>(summary->n_angles));
                for (std::size_t g = 0; g < summary->n_grids(); ++g)
                    centers.row(static_cast<Eigen::Index>(g)) = summary->grids[g].center.transpose();
            }
            std::size_t k = ev_k;
            if (k == 0) k = summary ? summary->n_grids() : 0;
            for (auto l : labels) k = std::max<std::size_t>(k, l + 1);
            std::set<std::uint32_t> used(labels.begin(), labels.end());
            const auto report = csg::evaluate(ds, a, labels, k, static_cast<double>(used.size()) / static_cast<double>(k),
                                              summary ? &centers : nullptr, summary ? &*summary : nullptr);
            write_report(report, ev_out);
        } else if (*pr) {
            const auto summary = csg::load_summary(pr_summary);
            const auto a = beam_from(pr_beam);
            if (a.n_angles() != summary.n_angles) {
                std::fprintf(stderr, "error: summary has N=%zu but beam matrix has N=%zu\n", summary.n_angles,
                             a.n_angles());
                return 1;
            }
            csg::write_text_file(pr_out, csg::prediction_csv(csg::predict_under_beam(summary, a)));
        } else if (*sw) {
            auto cfg = csg::load_experiment_config(sw_config);
            csg::apply_environment_overrides(cfg);
            const auto result = csg::run_experiment(cfg);
            std::size_t failed = 0;
            for (const auto& r : result.runs)
                if (!r.ok) {
                    ++failed;
                    std::fprintf(stderr, "run %s failed: %s\n", csg::run_file_stem(r.method, r.seed, r.round).c_str(),
                                 r.error.c_str());
                }
            std::printf("%zu runs, %zu failed; reports in %s\n", result.runs.size(), failed, cfg.output_dir.c_str());
            return result.exit_code;
        }
    } catch (const csg::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const csg::Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", std::string(csg::to_string(e.kind())).c_str(), e.what());
        return e.kind() == csg::ErrorKind::invalid_config ? 2 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
