// SPDX-License-Identifier: Apache-2.0
//
// Fixed-graph reverse mode for the encoder MLP and the dB-scale
// reconstruction loss, plus the decoupled-weight-decay optimizer.
#pragma once

#include "csg/lscm.hpp"
#include "csg/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace csg {

class Rng;
namespace io {
class Reader;
class Writer;
}  // namespace io

struct DenseLayer {
    Matrix weight;  // out x in
    Vector bias;    // out
    bool skip = false;  // output += input (requires out == in)
};

/// Mutable view of one parameter block, addressed by a dotted path.
struct ParamBlock {
    std::string name;
    double* data;
    std::size_t size;
};

struct ConstParamBlock {
    std::string name;
    const double* data;
    std::size_t size;
};

struct EncoderParams {
    std::vector<DenseLayer> layers;
    // Fixed, non-trainable affine maps on both ends of the network.
    Vector input_shift;   // subtracted from y_dbm
    Vector input_scale;   // divides the shifted input
    double output_scale = 1.0;  // multiplies the rectified output

    std::size_t input_dim() const { return static_cast<std::size_t>(layers.front().weight.cols()); }
    std::size_t output_dim() const { return static_cast<std::size_t>(layers.back().weight.rows()); }

    /// depth dense layers of the given width; skip connections on 1-based layer
    /// numbers listed in skip_layers. Weights ~ N(0, 2 / fan_in), biases zero.
    static EncoderParams init(std::size_t input_dim, std::size_t output_dim, std::size_t width, Rng& rng,
                              std::size_t depth = 6, std::vector<std::size_t> skip_layers = {2, 4});

    std::vector<ParamBlock> blocks();
    std::vector<ConstParamBlock> blocks() const;
    std::size_t parameter_count() const;
    /// FNV-1a over all trainable parameter bytes.
    std::uint64_t digest() const;
    void validate() const;
};

/// Per-layer activations retained for the backward pass.
struct EncoderCache {
    std::vector<Matrix> inputs;          // h_l fed into layer l
    std::vector<Matrix> preactivations;  // z_l
};

struct EncoderOutput {
    Matrix embeddings;  // B x N, >= 0
    EncoderCache cache;
};

EncoderOutput encoder_forward(const EncoderParams& params, const Matrix& y_dbm);

/// Gradients mirroring EncoderParams::layers and, when used, the codebook.
struct GradientSet {
    std::vector<DenseLayer> encoder;
    Matrix codebook;  // N x K, empty when absent

    bool has_encoder() const { return !encoder.empty(); }
    bool has_codebook() const { return codebook.size() > 0; }
};

/// Backpropagate dLoss/d(embeddings) through the encoder.
std::vector<DenseLayer> encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                                         const Matrix& grad_embeddings);

struct ReconstructionResult {
    double loss = 0.0;       // mean over samples and beams of |y - y_hat| in dB
    Matrix grad_embeddings;  // dL1 / dx, B x N
};

/// dB-scale MAE between y_dbm and 10 log10(max(A x, floor)); sign(0) = 0 and
/// the floor branch has zero derivative.
ReconstructionResult reconstruction_loss(const Matrix& embeddings, const BeamPatternMatrix& a,
                                         const Matrix& y_dbm, double floor_mw, bool want_grad = true);

struct ReconstructionGrads {
    double loss = 0.0;
    GradientSet grads;
};

ReconstructionGrads reconstruction_loss_and_grads(const EncoderParams& params, const EncoderOutput& forward,
                                                  const BeamPatternMatrix& a, const Matrix& y_dbm,
                                                  double floor_mw);

struct AdamWConfig {
    double learning_rate = 1e-2;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    AdamWConfig config;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::uint64_t step = 0;

    /// Zeroed accumulators shaped like the given blocks.
    template <typename Blocks>
    static OptimizerState for_blocks(const Blocks& blocks, AdamWConfig config) {
        OptimizerState s;
        s.config = config;
        for (const auto& b : blocks) {
            s.first_moment.emplace_back(b.size, 0.0);
            s.second_moment.emplace_back(b.size, 0.0);
        }
        return s;
    }
};

/// One bias-corrected step with decay applied to the parameters directly.
/// Rejects non-finite gradients before touching any parameter.
void adamw_step(OptimizerState& state, const std::vector<ParamBlock>& params,
                const std::vector<ConstParamBlock>& grads);

std::vector<ConstParamBlock> gradient_blocks(const std::vector<DenseLayer>& grads);

// ---------------------------------------------------------------------------
// Finite-difference checking

struct BlockCheck {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
};

struct GradientCheckReport {
    std::vector<BlockCheck> blocks;

    double max_rel_error() const;
    std::size_t skipped_kinks() const;
    bool passes(double tolerance) const { return max_rel_error() < tolerance; }
};

/// Loss evaluation used by the checker. `signature` receives one entry per
/// non-smooth switch (residual sign, rectifier state, floor branch, ...); a
/// coordinate whose +/- probes disagree on it straddles a kink and is skipped.
using ProbeFn = std::function<long double(std::vector<std::int8_t>& signature)>;

/// Central differences with step 1e-6 * max(1, |theta|) per coordinate.
/// Relative error is |a - f| / max(|a|, |f|, 1e-7 * block max |a|); an all-zero
/// block reports 0.
GradientCheckReport finite_difference_check(const std::vector<ParamBlock>& params,
                                            const std::vector<ConstParamBlock>& analytic, const ProbeFn& probe);

/// Reverse mode against central differences for L1 w.r.t. every encoder block.
GradientCheckReport gradient_check(EncoderParams params, const Matrix& y_dbm, const BeamPatternMatrix& a,
                                   double floor_mw = kDefaultFloorMw);

// Serialization helpers shared by the checkpoint format.
void write_encoder(io::Writer& w, const EncoderParams& params);
EncoderParams read_encoder(io::Reader& r);
void write_optimizer(io::Writer& w, const OptimizerState& state);
OptimizerState read_optimizer(io::Reader& r);

}  // namespace csg
