// SPDX-License-Identifier: Apache-2.0
#include "csg/autodiff.hpp"

#include "csg/binary_io.hpp"
#include "csg/errors.hpp"
#include "csg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace csg {

namespace {

constexpr double kDbPerNeper = 10.0 / std::numbers::ln10;

inline double relu(double v) { return v > 0.0 ? v : 0.0; }
inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Matrix affine(const Matrix& h, const DenseLayer& layer) {
    Matrix z = h * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    return z;
}

}  // namespace

EncoderParams EncoderParams::init(std::size_t input_dim, std::size_t output_dim, std::size_t width, Rng& rng,
                                  std::size_t depth, std::vector<std::size_t> skip_layers) {
    require(input_dim >= 1 && output_dim >= 1 && width >= 1, ErrorKind::invalid_config,
            "encoder dimensions must be >= 1");
    require(depth >= 1, ErrorKind::invalid_config, "encoder depth must be >= 1");
    EncoderParams p;
    for (std::size_t l = 0; l < depth; ++l) {
        const std::size_t in = l == 0 ? input_dim : width;
        const std::size_t out = l + 1 == depth ? output_dim : width;
        DenseLayer layer;
        layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
        const double std = std::sqrt(2.0 / static_cast<double>(in));
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = std * rng.normal();
        layer.bias = Vector::Zero(static_cast<Eigen::Index>(out));
        layer.skip = std::find(skip_layers.begin(), skip_layers.end(), l + 1) != skip_layers.end();
        require(!layer.skip || in == out, ErrorKind::invalid_config,
                "skip connection at layer " + std::to_string(l + 1) + " needs matching widths");
        p.layers.push_back(std::move(layer));
    }
    p.input_shift = Vector::Zero(static_cast<Eigen::Index>(input_dim));
    p.input_scale = Vector::Ones(static_cast<Eigen::Index>(input_dim));
    return p;
}

std::vector<ParamBlock> EncoderParams::blocks() {
    std::vector<ParamBlock> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& layer = layers[l];
        const std::string prefix = "encoder.layer" + std::to_string(l + 1);
        out.push_back({prefix + ".weight", layer.weight.data(), static_cast<std::size_t>(layer.weight.size())});
        out.push_back({prefix + ".bias", layer.bias.data(), static_cast<std::size_t>(layer.bias.size())});
    }
    return out;
}

std::vector<ConstParamBlock> EncoderParams::blocks() const {
    std::vector<ConstParamBlock> out;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const std::string prefix = "encoder.layer" + std::to_string(l + 1);
        out.push_back({prefix + ".weight", layer.weight.data(), static_cast<std::size_t>(layer.weight.size())});
        out.push_back({prefix + ".bias", layer.bias.data(), static_cast<std::size_t>(layer.bias.size())});
    }
    return out;
}

std::vector<ConstParamBlock> gradient_blocks(const std::vector<DenseLayer>& grads) {
    std::vector<ConstParamBlock> out;
    for (std::size_t l = 0; l < grads.size(); ++l) {
        const std::string prefix = "encoder.layer" + std::to_string(l + 1);
        out.push_back({prefix + ".weight", grads[l].weight.data(), static_cast<std::size_t>(grads[l].weight.size())});
        out.push_back({prefix + ".bias", grads[l].bias.data(), static_cast<std::size_t>(grads[l].bias.size())});
    }
    return out;
}

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks()) n += b.size;
    return n;
}

std::uint64_t EncoderParams::digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& b : blocks())
        h = io::fnv1a({reinterpret_cast<const std::uint8_t*>(b.data), b.size * sizeof(double)}, h);
    return h;
}

void EncoderParams::validate() const {
    require(!layers.empty(), ErrorKind::shape, "encoder has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        require(layer.bias.size() == layer.weight.rows(), ErrorKind::shape,
                "layer " + std::to_string(l + 1) + " bias length mismatch");
        if (l > 0)
            require(layer.weight.cols() == layers[l - 1].weight.rows(), ErrorKind::shape,
                    "layer " + std::to_string(l + 1) + " input width does not chain");
        require(!layer.skip || layer.weight.rows() == layer.weight.cols(), ErrorKind::shape,
                "skip layer " + std::to_string(l + 1) + " is not square");
    }
    require(static_cast<std::size_t>(input_shift.size()) == input_dim() &&
                static_cast<std::size_t>(input_scale.size()) == input_dim(),
            ErrorKind::shape, "input normalization length mismatch");
    require(output_scale > 0 && std::isfinite(output_scale), ErrorKind::invalid_config, "output scale must be > 0");
}

EncoderOutput encoder_forward(const EncoderParams& params, const Matrix& y_dbm) {
    require(y_dbm.rows() > 0, ErrorKind::shape, "empty batch");
    require(static_cast<std::size_t>(y_dbm.cols()) == params.input_dim(), ErrorKind::shape,
            "batch has " + std::to_string(y_dbm.cols()) + " beams, encoder expects " +
                std::to_string(params.input_dim()));
    require(y_dbm.allFinite(), ErrorKind::numeric_input, "encoder input contains non-finite values");

    EncoderOutput out;
    auto& cache = out.cache;
    Matrix h = (y_dbm.rowwise() - params.input_shift.transpose()).array().rowwise() /
               params.input_scale.transpose().array();
    const std::size_t depth = params.layers.size();
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& layer = params.layers[l];
        Matrix z = affine(h, layer);
        cache.inputs.push_back(std::move(h));
        if (l + 1 < depth) {
            h = z.unaryExpr(&relu);
            if (layer.skip) h += cache.inputs.back();
        } else {
            out.embeddings = z.unaryExpr(&relu) * params.output_scale;
        }
        cache.preactivations.push_back(std::move(z));
    }
    return out;
}

std::vector<DenseLayer> encoder_backward(const EncoderParams& params, const EncoderCache& cache,
                                         const Matrix& grad_embeddings) {
    const std::size_t depth = params.layers.size();
    require(cache.preactivations.size() == depth, ErrorKind::shape, "cache does not match encoder depth");
    require(grad_embeddings.rows() == cache.preactivations.back().rows() &&
                grad_embeddings.cols() == cache.preactivations.back().cols(),
            ErrorKind::shape, "embedding gradient shape mismatch");
    std::vector<DenseLayer> grads(depth);
    // Gradient w.r.t. the output of the current layer (post skip).
    Matrix upstream = grad_embeddings * params.output_scale;
    for (std::size_t l = depth; l-- > 0;) {
        const auto& layer = params.layers[l];
        const Matrix& z = cache.preactivations[l];
        Matrix gz = upstream.array() * (z.array() > 0.0).cast<double>();
        grads[l].weight = gz.transpose() * cache.inputs[l];
        grads[l].bias = gz.colwise().sum().transpose();
        grads[l].skip = layer.skip;
        if (l == 0) break;
        Matrix down = gz * layer.weight;
        if (layer.skip) down += upstream;
        upstream = std::move(down);
    }
    return grads;
}

ReconstructionResult reconstruction_loss(const Matrix& embeddings, const BeamPatternMatrix& a, const Matrix& y_dbm,
                                         double floor_mw, bool want_grad) {
    require(static_cast<std::size_t>(embeddings.cols()) == a.n_angles(), ErrorKind::shape,
            "embeddings have " + std::to_string(embeddings.cols()) + " entries, beam matrix has " +
                std::to_string(a.n_angles()) + " columns");
    require(static_cast<std::size_t>(y_dbm.cols()) == a.n_beams() && y_dbm.rows() == embeddings.rows(),
            ErrorKind::shape, "observation batch shape mismatch");
    require(embeddings.rows() > 0, ErrorKind::shape, "empty batch");
    const Matrix u = embeddings * a.gains.transpose();  // B x M, mW
    const double inv_count = 1.0 / static_cast<double>(u.size());
    ReconstructionResult out;
    Matrix gu;
    if (want_grad) gu.resize(u.rows(), u.cols());
    double total = 0.0;
    for (Eigen::Index b = 0; b < u.rows(); ++b) {
        for (Eigen::Index m = 0; m < u.cols(); ++m) {
            const double power = u(b, m);
            const double predicted = 10.0 * std::log10(std::max(power, floor_mw));
            const double r = predicted - y_dbm(b, m);
            total += std::abs(r);
            if (want_grad) gu(b, m) = power > floor_mw ? sign(r) * inv_count * kDbPerNeper / power : 0.0;
        }
    }
    out.loss = total * inv_count;
    if (want_grad) out.grad_embeddings = gu * a.gains;
    return out;
}

ReconstructionGrads reconstruction_loss_and_grads(const EncoderParams& params, const EncoderOutput& forward,
                                                  const BeamPatternMatrix& a, const Matrix& y_dbm,
                                                  double floor_mw) {
    auto rec = reconstruction_loss(forward.embeddings, a, y_dbm, floor_mw, true);
    ReconstructionGrads out;
    out.loss = rec.loss;
    out.grads.encoder = encoder_backward(params, forward.cache, rec.grad_embeddings);
    return out;
}

void adamw_step(OptimizerState& state, const std::vector<ParamBlock>& params,
                const std::vector<ConstParamBlock>& grads) {
    require(params.size() == grads.size() && params.size() == state.first_moment.size(), ErrorKind::shape,
            "optimizer state, parameters and gradients disagree on block count");
    for (std::size_t b = 0; b < params.size(); ++b) {
        require(params[b].size == grads[b].size && params[b].size == state.first_moment[b].size(), ErrorKind::shape,
                "block " + params[b].name + " size mismatch");
        for (std::size_t i = 0; i < grads[b].size; ++i)
            if (!std::isfinite(grads[b].data[i]))
                fail(ErrorKind::optimizer, "non-finite gradient in " + params[b].name + "[" + std::to_string(i) + "]");
    }
    const auto& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    const double decay = 1.0 - c.learning_rate * c.weight_decay;
    for (std::size_t b = 0; b < params.size(); ++b) {
        double* theta = params[b].data;
        const double* g = grads[b].data;
        auto& m = state.first_moment[b];
        auto& v = state.second_moment[b];
        for (std::size_t i = 0; i < params[b].size; ++i) {
            theta[i] *= decay;
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            theta[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

double GradientCheckReport::max_rel_error() const {
    double e = 0.0;
    for (const auto& b : blocks) e = std::max(e, b.max_rel_error);
    return e;
}

std::size_t GradientCheckReport::skipped_kinks() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.skipped_kinks;
    return n;
}

GradientCheckReport finite_difference_check(const std::vector<ParamBlock>& params,
                                            const std::vector<ConstParamBlock>& analytic, const ProbeFn& probe) {
    require(params.size() == analytic.size(), ErrorKind::shape, "gradient check block count mismatch");
    GradientCheckReport report;
    std::vector<std::int8_t> base_sig, plus_sig, minus_sig;
    probe(base_sig);
    for (std::size_t b = 0; b < params.size(); ++b) {
        require(params[b].size == analytic[b].size, ErrorKind::shape, "block " + params[b].name + " size mismatch");
        BlockCheck check{params[b].name};
        double scale = 0.0;
        for (std::size_t i = 0; i < analytic[b].size; ++i) scale = std::max(scale, std::abs(analytic[b].data[i]));
        const double guard = 1e-7 * scale;
        for (std::size_t i = 0; i < params[b].size; ++i) {
            double& theta = params[b].data[i];
            const double saved = theta;
            const double step = 1e-6 * std::max(1.0, std::abs(saved));
            const double up = saved + step;
            const double down = saved - step;
            theta = up;
            const long double f_plus = probe(plus_sig);
            theta = down;
            const long double f_minus = probe(minus_sig);
            theta = saved;
            if (plus_sig != base_sig || minus_sig != base_sig) {
                ++check.skipped_kinks;
                continue;
            }
            const auto numeric = static_cast<double>((f_plus - f_minus) / (static_cast<long double>(up) - down));
            const double exact = analytic[b].data[i];
            const double denom = std::max({std::abs(exact), std::abs(numeric), guard});
            const double rel = denom > 0.0 ? std::abs(exact - numeric) / denom : 0.0;
            check.max_rel_error = std::max(check.max_rel_error, rel);
            ++check.checked;
        }
        report.blocks.push_back(std::move(check));
    }
    return report;
}

namespace {

// Extended-precision re-evaluation of the encoder + L1 with plain loops. The
// finite-difference quotient divides by 2e-6, so double rounding noise in the
// loss would otherwise dominate small gradient entries.
long double reference_l1(const EncoderParams& params, const Matrix& y_dbm, const BeamPatternMatrix& a,
                         double floor_mw, std::vector<std::int8_t>& signature) {
    using T = long double;
    signature.clear();
    const Eigen::Index batch = y_dbm.rows();
    const Eigen::Index m_beams = y_dbm.cols();
    T total = 0;
    std::vector<T> h, next;
    for (Eigen::Index b = 0; b < batch; ++b) {
        h.resize(static_cast<std::size_t>(m_beams));
        for (Eigen::Index m = 0; m < m_beams; ++m)
            h[static_cast<std::size_t>(m)] =
                (static_cast<T>(y_dbm(b, m)) - params.input_shift[m]) / static_cast<T>(params.input_scale[m]);
        for (std::size_t l = 0; l < params.layers.size(); ++l) {
            const auto& layer = params.layers[l];
            const bool last = l + 1 == params.layers.size();
            next.assign(static_cast<std::size_t>(layer.weight.rows()), 0);
            for (Eigen::Index o = 0; o < layer.weight.rows(); ++o) {
                T z = layer.bias[o];
                for (Eigen::Index i = 0; i < layer.weight.cols(); ++i)
                    z += static_cast<T>(layer.weight(o, i)) * h[static_cast<std::size_t>(i)];
                signature.push_back(z > 0 ? 1 : 0);
                T out = z > 0 ? z : 0;
                if (last) out *= params.output_scale;
                if (layer.skip) out += h[static_cast<std::size_t>(o)];
                next[static_cast<std::size_t>(o)] = out;
            }
            h.swap(next);
        }
        for (Eigen::Index m = 0; m < m_beams; ++m) {
            T u = 0;
            for (Eigen::Index n = 0; n < a.gains.cols(); ++n)
                u += static_cast<T>(a.gains(m, n)) * h[static_cast<std::size_t>(n)];
            signature.push_back(u > floor_mw ? 1 : 0);
            const T r = 10 * std::log10(std::max<T>(u, floor_mw)) - static_cast<T>(y_dbm(b, m));
            signature.push_back(r > 0 ? 1 : (r < 0 ? -1 : 0));
            total += r < 0 ? -r : r;
        }
    }
    return total / static_cast<T>(batch * m_beams);
}

}  // namespace

GradientCheckReport gradient_check(EncoderParams params, const Matrix& y_dbm, const BeamPatternMatrix& a,
                                   double floor_mw) {
    const auto fwd = encoder_forward(params, y_dbm);
    const auto analytic = reconstruction_loss_and_grads(params, fwd, a, y_dbm, floor_mw);
    ProbeFn probe = [&](std::vector<std::int8_t>& sig) {
        return reference_l1(params, y_dbm, a, floor_mw, sig);
    };
    return finite_difference_check(params.blocks(), gradient_blocks(analytic.grads.encoder), probe);
}

// ---------------------------------------------------------------------------

void write_encoder(io::Writer& w, const EncoderParams& params) {
    params.validate();
    w.u64(params.layers.size());
    for (const auto& layer : params.layers) {
        w.u64(static_cast<std::uint64_t>(layer.weight.rows()));
        w.u64(static_cast<std::uint64_t>(layer.weight.cols()));
        w.u32(layer.skip ? 1 : 0);
    }
    w.f64s({params.input_shift.data(), static_cast<std::size_t>(params.input_shift.size())});
    w.f64s({params.input_scale.data(), static_cast<std::size_t>(params.input_scale.size())});
    w.f64(params.output_scale);
    for (const auto& b : params.blocks()) w.f64s({b.data, b.size});
}

EncoderParams read_encoder(io::Reader& r) {
    EncoderParams p;
    const auto depth = r.u64();
    require(depth >= 1 && depth < 1024, ErrorKind::corrupt, "implausible layer count");
    for (std::uint64_t l = 0; l < depth; ++l) {
        const auto rows = r.u64(), cols = r.u64();
        require(rows >= 1 && cols >= 1 && rows < (1u << 24) && cols < (1u << 24), ErrorKind::corrupt,
                "implausible layer shape");
        DenseLayer layer;
        layer.weight.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        layer.bias.resize(static_cast<Eigen::Index>(rows));
        layer.skip = r.u32() != 0;
        p.layers.push_back(std::move(layer));
    }
    const auto m = static_cast<Eigen::Index>(p.layers.front().weight.cols());
    p.input_shift.resize(m);
    p.input_scale.resize(m);
    r.f64s({p.input_shift.data(), static_cast<std::size_t>(m)});
    r.f64s({p.input_scale.data(), static_cast<std::size_t>(m)});
    p.output_scale = r.f64();
    for (const auto& b : p.blocks()) r.f64s({b.data, b.size});
    p.validate();
    return p;
}

void write_optimizer(io::Writer& w, const OptimizerState& state) {
    const auto& c = state.config;
    for (double v : {c.learning_rate, c.weight_decay, c.beta1, c.beta2, c.epsilon}) w.f64(v);
    w.u64(state.step);
    w.u64(state.first_moment.size());
    for (std::size_t b = 0; b < state.first_moment.size(); ++b) {
        w.u64(state.first_moment[b].size());
        w.f64s(state.first_moment[b]);
        w.f64s(state.second_moment[b]);
    }
}

OptimizerState read_optimizer(io::Reader& r) {
    OptimizerState s;
    s.config.learning_rate = r.f64();
    s.config.weight_decay = r.f64();
    s.config.beta1 = r.f64();
    s.config.beta2 = r.f64();
    s.config.epsilon = r.f64();
    s.step = r.u64();
    const auto blocks = r.u64();
    require(blocks < 4096, ErrorKind::corrupt, "implausible optimizer block count");
    for (std::uint64_t b = 0; b < blocks; ++b) {
        const auto n = r.u64();
        require(n <= r.remaining() / 16, ErrorKind::truncated, "optimizer block exceeds payload");
        s.first_moment.emplace_back(n);
        s.second_moment.emplace_back(n);
        r.f64s(s.first_moment.back());
        r.f64s(s.second_moment.back());
    }
    return s;
}

}  // namespace csg
