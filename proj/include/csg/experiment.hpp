// SPDX-License-Identifier: Apache-2.0
//
// JSON-configured experiment sweeps: dataset and beam construction, (method,
// seed, round) cells executed in a worker pool, per-run reports, aggregates
// and plot data.
#pragma once

#include "csg/baselines.hpp"
#include "csg/datagen.hpp"
#include "csg/errors.hpp"
#include "csg/lscm.hpp"
#include "csg/metrics.hpp"
#include "csg/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace csg {

/// Raised for schema violations; `field` is a JSON-pointer-like path.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(ErrorKind::invalid_config, field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

struct BeamSpec {
    std::optional<std::filesystem::path> path;
    AntennaConfig antenna;  // precoder filled in by the builder
    AngularGrid grid;
    nlohmann::json precoder;  // kept verbatim for the builder
};

struct DatasetSpec {
    std::optional<std::filesystem::path> path;
    SyntheticConfig synthetic;
    bool seed_from_run = true;  // synthetic seed follows the run seed unless pinned
};

struct ExperimentConfig {
    DatasetSpec dataset;
    BeamSpec beam;
    std::vector<std::string> methods;
    std::vector<std::uint64_t> seeds;
    std::vector<double> scales;  // one round per entry; empty = a single round at the dataset's own s
    std::vector<std::string> metrics;  // empty = all
    std::filesystem::path output_dir = "csg_out";
    TrainConfig train;  // seed, K and L are filled per run
    std::optional<std::size_t> n_grids;
    std::optional<std::size_t> sparsity;
    std::size_t workers = 1;
};

/// "csg_ae:<scheme>" or a baseline pipeline name.
bool is_method(const std::string& name);

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Applies CSG_OUTPUT_DIR and CSG_WORKERS when set.
void apply_environment_overrides(ExperimentConfig& cfg);

BeamSpec parse_beam_spec(const nlohmann::json& j, const std::string& where);
AntennaConfig parse_antenna(const nlohmann::json& j, const std::string& where);
AngularGrid parse_grid(const nlohmann::json& j, const std::string& where);
BeamPatternMatrix build_beam(const BeamSpec& spec);

/// Steered 4 x 8 beam fan over a 16 x 16 grid on an 8 x 4 panel (N = 256, M = 32).
nlohmann::json desk_beam_json();
BeamPatternMatrix desk_beam();

struct RunOutcome {
    std::string method;
    std::uint64_t seed = 0;
    std::size_t round = 0;
    double scale = 0.0;
    bool ok = false;
    std::string error;
    MetricsReport report;
    std::optional<TrainLog> log;
    double wall_seconds = 0.0;
};

/// One cell: builds the data for (seed, round), runs the method, scores it.
RunOutcome run_cell(const ExperimentConfig& cfg, const BeamPatternMatrix& a, const std::string& method,
                    std::uint64_t seed, std::size_t round);

/// Scores labels and optional centers/summary against a synthetic dataset.
MetricsReport evaluate(const SyntheticDataset& ds, const BeamPatternMatrix& a, const Labels& labels,
                       std::size_t k, double active_ratio, const Matrix* centers,
                       const GridCapsSummary* summary, double floor_mw = kDefaultFloorMw);

struct SweepResult {
    std::vector<RunOutcome> runs;
    int exit_code = 0;
};

/// Runs every cell, writes runs/*.json, curves/*.csv, aggregate.csv and
/// manifest.json under cfg.output_dir. Exit code 1 when any cell failed.
SweepResult run_experiment(const ExperimentConfig& cfg);

std::string run_file_stem(const std::string& method, std::uint64_t seed, std::size_t round);

/// grid,active,beam_0..beam_{M-1}; inactive rows carry the floor value.
std::string prediction_csv(const GridPrediction& p);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// sample,label
std::string labels_csv(const Labels& labels);
Labels parse_labels_csv(const std::string& text);

}  // namespace csg
