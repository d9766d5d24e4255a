// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "csg/lscm.hpp"
#include "csg/types.hpp"

#include <cstdint>
#include <filesystem>

namespace csg {

struct SyntheticConfig {
    std::size_t n_grids = 100;          // K
    std::size_t n_angles = 6552;        // N
    std::size_t sparsity = 5;           // L
    std::size_t samples_per_grid = 100;
    double laplace_power = 1e-5;        // p; Laplace scale is sqrt(p)
    double scale = 0.1;                 // s, perturbation magnitude in [0, 1]
    std::uint64_t seed = 0;
    double floor_mw = kDefaultFloorMw;

    void validate() const;
};

/// Samples are stored grid-major: sample i belongs to grid i / samples_per_grid.
struct SyntheticDataset {
    Matrix centers;        // K x N, each exactly L-sparse and >= 0
    Matrix samples;        // I x N
    Matrix rsrp_dbm;       // I x M
    Labels labels;         // I
    Matrix perturbations;  // I x N
    std::size_t sparsity = 0;
    double scale = 0.0;
    double laplace_power = 0.0;

    std::size_t n_grids() const { return static_cast<std::size_t>(centers.rows()); }
    std::size_t n_samples() const { return static_cast<std::size_t>(rsrp_dbm.rows()); }
    std::size_t n_angles() const { return static_cast<std::size_t>(centers.cols()); }
    std::size_t n_beams() const { return static_cast<std::size_t>(rsrp_dbm.cols()); }
    bool has_caps() const { return samples.rows() > 0; }
    bool has_labels() const { return !labels.empty(); }
};

Matrix gen_centers(const SyntheticConfig& cfg);
SyntheticDataset gen_dataset(const SyntheticConfig& cfg, const BeamPatternMatrix& a);

/// Smallest strictly positive entry of a row; 0 when the row has none.
double min_nonzero(const Eigen::Ref<const Vector>& v);

inline constexpr std::uint32_t kDatasetVersion = 1;

void save_dataset(const SyntheticDataset& ds, const std::filesystem::path& path);
SyntheticDataset load_dataset(const std::filesystem::path& path);

}  // namespace csg
