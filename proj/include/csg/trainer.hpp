// SPDX-License-Identifier: Apache-2.0
//
// Training schemes for the quantizing autoencoder: the naive joint update and
// any combination of encoder pretraining (P), k-means codebook initialization
// (I), detached quantization gradients (D) and asynchronous encoder-then-
// codebook updates (A).
#pragma once

#include "csg/autodiff.hpp"
#include "csg/baselines.hpp"
#include "csg/datagen.hpp"
#include "csg/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace csg {

struct SchemeFlags {
    bool pretrain = false;
    bool kmeans_init = false;
    bool detached = false;
    bool asynchronous = false;

    /// "PIDA", "PI", ..., or "naive" when no flag is set.
    std::string name() const;
    /// Accepts "naive" or any subset of the letters P, I, D, A in that order.
    static std::optional<SchemeFlags> parse(const std::string& name);
    static SchemeFlags pida() { return {true, true, true, true}; }
};

struct TrainConfig {
    SchemeFlags scheme = SchemeFlags::pida();
    std::size_t pretrain_epochs = 2000;  // T0
    std::size_t total_epochs = 4000;     // T; the joint phase runs T - T0 epochs when pretraining
    std::size_t batch_size = 0;          // 0 = full batch
    LossWeights weights;
    AdamWConfig optimizer;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
    std::size_t n_grids = 100;  // K
    std::size_t sparsity = 5;   // L
    std::size_t width = 256;
    std::size_t depth = 6;
    double naive_init_std = 0.01;  // raw codebook entries when k-means init is off
    bool exclude_empty_grids = false;
    std::size_t kmeans_restarts = 10;
    double floor_mw = kDefaultFloorMw;

    std::size_t joint_epochs() const;
    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based, counted across both phases
    std::string phase;      // "pretrain" or "train"
    double l1 = 0.0;
    double l2 = 0.0;
    double combined = 0.0;
    double active_ratio = 0.0;
    double val_l1 = 0.0;
    double val_combined = 0.0;
    // Norm of the quantization-loss gradient that actually reached the
    // encoder; identically zero under detached updates.
    double encoder_l2_grad_norm = 0.0;
    // Digest of the encoder parameters whose embeddings produced the
    // assignment used in the codebook step.
    std::uint64_t assignment_encoder_digest = 0;
    std::uint64_t encoder_digest_after = 0;
};

struct TrainLog {
    std::vector<EpochRecord> records;
    std::vector<double> wall_seconds;  // per epoch; kept apart from the deterministic records
    std::size_t best_pretrain_epoch = 0;
    std::size_t best_train_epoch = 0;
    double post_init_active_ratio = 0.0;
};

void write_train_log_csv(const TrainLog& log, std::ostream& out);

/// Train/validation split: fixed permutation of sample indices from the seed.
struct DataSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};
DataSplit split_samples(std::size_t n_samples, double val_fraction, std::uint64_t seed);

Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& rows);

/// Fresh encoder with input standardization and output scale fitted to the
/// given observations.
EncoderParams make_encoder(const TrainConfig& cfg, const Matrix& y_dbm, const BeamPatternMatrix& a);

struct PretrainResult {
    EncoderParams encoder;
    TrainLog log;
};

PretrainResult pretrain_encoder(const TrainConfig& cfg, EncoderParams init, const Matrix& y_train,
                                const Matrix& y_val, const BeamPatternMatrix& a);

Codebook init_codebook(const Matrix& embeddings, std::size_t k, std::size_t sparsity, double scale,
                       std::uint64_t seed, std::size_t restarts = 10);

Codebook random_codebook(std::size_t n, std::size_t k, std::size_t sparsity, double scale, double std,
                         std::uint64_t seed);

struct Validation {
    double l1 = 0.0;
    double l2 = 0.0;
    double combined = 0.0;
    double active_ratio = 0.0;
};

Validation validate(const EncoderParams& encoder, const Codebook& cb, const Matrix& y_dbm,
                    const BeamPatternMatrix& a, const TrainConfig& cfg);

struct TrainResult {
    EncoderParams encoder;
    Codebook codebook;
    TrainLog log;
    Matrix embeddings;          // final model on every sample
    GridAssignment assignment;  // final model on every sample
    GridCapsSummary summary;
    double final_active_ratio = 0.0;
    double pretrain_l1 = 0.0;   // training-set L1 of the selected pretrained encoder
};

TrainResult train(const TrainConfig& cfg, const Matrix& y_dbm, const BeamPatternMatrix& a);

inline TrainResult train(const TrainConfig& cfg, const SyntheticDataset& ds, const BeamPatternMatrix& a) {
    return train(cfg, ds.rsrp_dbm, a);
}

// Checkpoint: "CSGW1", version, encoder, codebook, optimizer states, digest.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    EncoderParams encoder;
    std::optional<Codebook> codebook;
    std::optional<OptimizerState> encoder_optimizer;
    std::optional<OptimizerState> codebook_optimizer;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace csg
