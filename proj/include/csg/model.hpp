// SPDX-License-Identifier: Apache-2.0
//
// Quantizing autoencoder pieces that sit behind the encoder: the L-sparse
// nonnegative codebook, nearest-codeword assignment, the two loss terms and
// the per-grid CAPS summary used for prediction under new beam patterns.
#pragma once

#include "csg/autodiff.hpp"
#include "csg/lscm.hpp"
#include "csg/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace csg {

struct Codebook {
    Matrix xi;  // N x K raw codewords, one per column
    std::size_t sparsity = 1;  // L
    // Fixed multiplier on the rectified, thresholded column. Keeps raw entries
    // O(1) when CAPS values are tiny.
    double scale = 1.0;

    std::size_t n_angles() const { return static_cast<std::size_t>(xi.rows()); }
    std::size_t n_grids() const { return static_cast<std::size_t>(xi.cols()); }

    /// Indices kept by delta_L on column k: the L largest by value, ties to
    /// the lower index, returned in ascending index order.
    std::vector<std::size_t> kept_indices(std::size_t k) const;
    Vector effective_codeword(std::size_t k) const;
    /// All effective codewords as rows, K x N.
    Matrix effective_codewords() const;

    std::vector<ParamBlock> blocks();
    std::vector<ConstParamBlock> blocks() const;
    std::uint64_t digest() const;
    void validate() const;
};

struct GridAssignment {
    Labels labels;                                // k_i per sample
    std::vector<std::vector<std::size_t>> members;  // I_(k)
    Matrix centers;                               // K x N effective codewords
    std::vector<std::vector<std::size_t>> supports;  // N_(k)
    std::vector<double> distances;                // squared distance to the assigned codeword

    std::size_t n_grids() const { return members.size(); }
    std::size_t n_samples() const { return labels.size(); }
};

/// Nearest effective codeword in Euclidean distance, ties to the lowest index.
GridAssignment quantize(const Codebook& cb, const Matrix& embeddings);

/// Mean over members of grid k of the embeddings projected onto N_(k); zero for
/// an empty grid.
Vector projected_mean(const GridAssignment& assignment, const Matrix& embeddings, std::size_t k);

double active_ratio(const GridAssignment& assignment);

struct LossWeights {
    double reconstruction = 1.0;  // w1
    double quantization = 1.0;    // w2
};

struct LossOptions {
    bool exclude_empty_grids = false;
    bool want_embedding_grads = true;
    bool want_codebook_grads = true;
};

struct LossResult {
    double l1 = 0.0;
    double l2 = 0.0;
    double combined = 0.0;
    // Unweighted partial derivatives; callers combine them according to the
    // training scheme.
    Matrix grad_embeddings_l1;  // B x N
    Matrix grad_embeddings_l2;  // B x N
    Matrix grad_codebook;       // N x K, dL2 / dxi
};

/// L2 = (1/K) sum_k (1/N) ||x_(k) - mu_(k)||^2 in CAPS units. With
/// exclude_empty_grids the average runs over active grids only.
LossResult quantization_loss(const Matrix& embeddings, const GridAssignment& assignment, const Codebook& cb,
                             const LossOptions& options = {});

LossResult compute_losses(const Matrix& embeddings, const GridAssignment& assignment, const Codebook& cb,
                          const BeamPatternMatrix& a, const Matrix& y_dbm, const LossWeights& weights,
                          double floor_mw = kDefaultFloorMw, const LossOptions& options = {});

/// Central differences of L2 against dL2/dxi with the embeddings held fixed.
GradientCheckReport codebook_gradient_check(Codebook cb, const Matrix& embeddings, const LossOptions& options = {});

// ---------------------------------------------------------------------------
// Grid summary

struct GridRecord {
    std::vector<std::size_t> support;
    Vector center;        // effective codeword (or pipeline center)
    Vector average;       // x-bar, mean of member CAPS estimates
    std::size_t member_count = 0;
    bool active = false;
    Vector average_dbm;   // forward_rsrp of `average` under the training beams
};

struct GridCapsSummary {
    std::size_t n_angles = 0;
    std::size_t sparsity = 0;
    std::vector<GridRecord> grids;

    std::size_t n_grids() const { return grids.size(); }
};

/// Per-grid mean of member embeddings, with dBm views under the training beams.
GridCapsSummary summarize_grids(const GridAssignment& assignment, const Matrix& embeddings,
                                const BeamPatternMatrix& a, std::size_t sparsity,
                                double floor_mw = kDefaultFloorMw);

struct GridPrediction {
    std::vector<Vector> dbm;  // per grid; floor dBm for inactive grids
    std::vector<bool> active;
};

GridPrediction predict_under_beam(const GridCapsSummary& summary, const BeamPatternMatrix& a_new,
                                  double floor_mw = kDefaultFloorMw);

std::string summary_to_json(const GridCapsSummary& summary);
GridCapsSummary summary_from_json(const std::string& text);
void save_summary(const GridCapsSummary& summary, const std::filesystem::path& path);
GridCapsSummary load_summary(const std::filesystem::path& path);

}  // namespace csg
