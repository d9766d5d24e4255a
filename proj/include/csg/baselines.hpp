// SPDX-License-Identifier: Apache-2.0
//
// k-means, greedy sparse coding (OMP and its nonnegative variants) and the
// baseline pipelines composed from them.
#pragma once

#include "csg/datagen.hpp"
#include "csg/lscm.hpp"
#include "csg/model.hpp"
#include "csg/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace csg {

struct KMeansOptions {
    std::size_t max_iter = 300;
    // Convergence when the summed squared center shift drops below
    // tol * (mean per-feature variance of the data).
    double tol = 1e-4;
    std::size_t n_init = 1;  // restarts; the lowest-inertia run is kept
};

struct KMeansResult {
    Matrix centers;  // K x D
    Labels labels;
    double inertia = 0.0;
    std::size_t iterations = 0;
    std::vector<double> inertia_history;  // one entry per assignment step
};

KMeansResult kmeans(const Matrix& data, std::size_t k, std::uint64_t seed, const KMeansOptions& options = {});

/// Nearest row of `centers` for every row of `data`, ties to the lowest index.
Labels assign_nearest(const Matrix& data, const Matrix& centers);

enum class SparseVariant { omp, nomp, wnomp };

std::string to_string(SparseVariant v);
std::optional<SparseVariant> parse_sparse_variant(const std::string& name);

struct SparseCode {
    Vector x;                          // length N
    std::vector<std::size_t> support;  // atoms in selection order
    double residual_norm = 0.0;
    std::vector<double> residual_history;  // after each added atom
    SparseVariant variant = SparseVariant::omp;
};

/// Lawson-Hanson active set for min ||d c - y|| s.t. c >= 0. The tolerance is
/// relative to max |d^T y|.
Vector nnls(const Matrix& d, const Vector& y, double tol = 1e-10, std::size_t max_iter = 0);

/// Greedy sparse coding of y over the columns of `dictionary`. For wnomp the
/// selection correlation is multiplied by `weights` (default: inverse column
/// norms).
SparseCode sparse_code(const Matrix& dictionary, const Vector& y, std::size_t sparsity, SparseVariant variant,
                       const Vector* weights = nullptr);

inline SparseCode sparse_code(const BeamPatternMatrix& a, const Vector& y_mw, std::size_t sparsity,
                              SparseVariant variant, const Vector* weights = nullptr) {
    return sparse_code(a.gains, y_mw, sparsity, variant, weights);
}

struct PipelineOptions {
    KMeansOptions kmeans{300, 1e-4, 10};
    std::optional<Vector> wnomp_weights;
};

struct PipelineResult {
    std::string name;
    Labels labels;
    Matrix centers;  // K x N CAPS centers; empty when the pipeline yields none
    std::map<std::string, double> diagnostics;

    bool has_centers() const { return centers.rows() > 0; }
};

const std::vector<std::string>& pipeline_names();
bool is_pipeline(const std::string& name);

PipelineResult run_pipeline(const std::string& name, const SyntheticDataset& ds, const BeamPatternMatrix& a,
                            std::size_t k, std::size_t sparsity, std::uint64_t seed,
                            const PipelineOptions& options = {});

/// Grid summary in the model's schema; the pipeline centers stand in for x-bar.
GridCapsSummary pipeline_summary(const PipelineResult& result, const BeamPatternMatrix& a, std::size_t k,
                                 std::size_t sparsity, double floor_mw = kDefaultFloorMw);

}  // namespace csg
