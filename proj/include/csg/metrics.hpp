// SPDX-License-Identifier: Apache-2.0
//
// External clustering scores, CAPS center accuracy and per-grid RSRP error.
#pragma once

#include "csg/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace csg {

struct ContingencyTable {
    std::vector<std::vector<std::size_t>> counts;  // [class][cluster], compacted ids
    std::vector<std::size_t> class_totals;
    std::vector<std::size_t> cluster_totals;
    std::size_t total = 0;

    static ContingencyTable build(const Labels& truth, const Labels& pred);
};

struct ClusteringScores {
    double ari = 0.0;
    double nmi = 0.0;
    double homogeneity = 0.0;
    double completeness = 0.0;
    double v_measure = 0.0;
};

/// Natural-log entropies. Conventions: homogeneity is 1 when H(C) = 0,
/// completeness is 1 when H(K) = 0; NMI is 1 when both entropies vanish and 0
/// when exactly one does; ARI is 1 when its denominator vanishes.
ClusteringScores clustering_metrics(const Labels& truth, const Labels& pred);

struct NmseResult {
    double value = 0.0;
    std::size_t counted = 0;
    std::size_t skipped_zero_norm = 0;
};

/// Mean over samples of ||x_true(k_i) - x_pred(p_i)|| / ||x_true(k_i)||, where
/// p_i is the predicted grid the method put sample i in.
NmseResult sample_mean_nmse(const Matrix& true_centers, const Labels& true_labels, const Matrix& pred_centers,
                            const Labels& pred_labels);

/// Sensitivity variant: predicted centers are matched one-to-one to true
/// centers by minimum total distance, and each sample is scored against the
/// predicted center matched to its true grid.
NmseResult matched_sample_mean_nmse(const Matrix& true_centers, const Labels& true_labels,
                                    const Matrix& pred_centers);

/// Minimum-cost assignment of rows to columns of a rows <= cols cost matrix.
/// Returns the column chosen for each row.
std::vector<std::size_t> hungarian(const Eigen::MatrixXd& cost);

/// Exact transportation between uniform distributions on a (K1 atoms) and
/// b (K2 atoms) with the given ground cost, via integer min-cost flow.
double transport_cost(const Eigen::MatrixXd& cost);

/// Order-1 Wasserstein distance between uniform distributions on two center
/// sets under the Euclidean ground metric.
double center_wasserstein(const Matrix& a, const Matrix& b);

struct GridMae {
    std::optional<double> active_mae;
    double overall_mae = 0.0;
};

GridMae grid_mae(const Matrix& real_dbm, const Matrix& pred_dbm, const std::vector<bool>& active);

struct GridAverages {
    Matrix dbm;                // K x M; floor dBm where inactive
    std::vector<bool> active;  // nonzero average power
    std::vector<std::size_t> counts;
};

/// Per-grid average of observed RSRP, taken in mW and converted to dBm.
GridAverages grid_average_rsrp(const Matrix& rsrp_dbm, const Labels& labels, std::size_t k,
                               double floor_mw = kDefaultFloorMw);

struct MetricsReport {
    ClusteringScores clustering;
    double active_ratio = 0.0;
    std::optional<double> sample_mean_nmse;
    std::optional<double> matched_sample_mean_nmse;
    std::optional<double> center_wasserstein;
    std::optional<double> active_mae;
    std::optional<double> overall_mae;
    std::size_t nmse_skipped = 0;
    double floor_dbm = -120.0;
};

nlohmann::json to_json(const MetricsReport& report);

}  // namespace csg
