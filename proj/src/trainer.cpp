// SPDX-License-Identifier: Apache-2.0
#include "csg/trainer.hpp"

#include "csg/binary_io.hpp"
#include "csg/errors.hpp"
#include "csg/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace csg {

std::string SchemeFlags::name() const {
    std::string s;
    if (pretrain) s += 'P';
    if (kmeans_init) s += 'I';
    if (detached) s += 'D';
    if (asynchronous) s += 'A';
    return s.empty() ? "naive" : s;
}

std::optional<SchemeFlags> SchemeFlags::parse(const std::string& name) {
    if (name == "naive") return SchemeFlags{};
    if (name.empty()) return std::nullopt;
    SchemeFlags f;
    static constexpr std::string_view order = "PIDA";
    std::size_t pos = 0;
    for (char c : name) {
        const auto at = order.find(c, pos);
        if (at == std::string_view::npos) return std::nullopt;
        pos = at + 1;
        switch (c) {
            case 'P': f.pretrain = true; break;
            case 'I': f.kmeans_init = true; break;
            case 'D': f.detached = true; break;
            case 'A': f.asynchronous = true; break;
        }
    }
    return f;
}

std::size_t TrainConfig::joint_epochs() const {
    if (!scheme.pretrain) return total_epochs;
    return total_epochs > pretrain_epochs ? total_epochs - pretrain_epochs : 0;
}

void TrainConfig::validate() const {
    require(pretrain_epochs <= total_epochs, ErrorKind::invalid_config, "pretrain_epochs must not exceed total_epochs");
    require(!scheme.pretrain || pretrain_epochs >= 1, ErrorKind::invalid_config,
            "pretraining is enabled but pretrain_epochs is 0");
    require(val_fraction >= 0.0 && val_fraction <= 0.5, ErrorKind::invalid_config, "val_fraction must be in [0, 0.5]");
    require(n_grids >= 1, ErrorKind::invalid_config, "n_grids must be >= 1");
    require(sparsity >= 1, ErrorKind::invalid_config, "sparsity must be >= 1");
    require(width >= 1 && depth >= 1, ErrorKind::invalid_config, "encoder width and depth must be >= 1");
    require(weights.reconstruction >= 0 && weights.quantization >= 0, ErrorKind::invalid_config,
            "loss weights must be >= 0");
    require(optimizer.learning_rate > 0 && optimizer.weight_decay >= 0, ErrorKind::invalid_config,
            "learning rate must be > 0 and weight decay >= 0");
    require(naive_init_std >= 0, ErrorKind::invalid_config, "naive_init_std must be >= 0");
    require(floor_mw > 0, ErrorKind::invalid_config, "floor must be positive");
}

void write_train_log_csv(const TrainLog& log, std::ostream& out) {
    out << "epoch,phase,l1,l2,combined,active_ratio,val_l1,val_combined\n";
    for (const auto& r : log.records) {
        out << r.epoch << ',' << r.phase << ',' << io::format_double(r.l1) << ',' << io::format_double(r.l2) << ','
            << io::format_double(r.combined) << ',' << io::format_double(r.active_ratio) << ','
            << io::format_double(r.val_l1) << ',' << io::format_double(r.val_combined) << '\n';
    }
}

DataSplit split_samples(std::size_t n_samples, double val_fraction, std::uint64_t seed) {
    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::substream(seed, 0x5eed5);
    rng.shuffle(order);
    auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n_samples)));
    if (val_fraction > 0 && n_val == 0 && n_samples >= 2) n_val = 1;
    DataSplit s;
    s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

EncoderParams make_encoder(const TrainConfig& cfg, const Matrix& y_dbm, const BeamPatternMatrix& a) {
    require(y_dbm.rows() >= 1, ErrorKind::empty_dataset, "cannot fit an encoder to zero samples");
    require(static_cast<std::size_t>(y_dbm.cols()) == a.n_beams(), ErrorKind::shape,
            "observations have M=" + std::to_string(y_dbm.cols()) + ", beam matrix has M=" + std::to_string(a.n_beams()));
    Rng rng = Rng::substream(cfg.seed, 0xe7c0de);
    auto p = EncoderParams::init(a.n_beams(), a.n_angles(), cfg.width, rng, cfg.depth);
    const auto b = static_cast<double>(y_dbm.rows());
    p.input_shift = y_dbm.colwise().mean().transpose();
    p.input_scale.resize(y_dbm.cols());
    for (Eigen::Index m = 0; m < y_dbm.cols(); ++m) {
        const double sd = std::sqrt((y_dbm.col(m).array() - p.input_shift[m]).square().sum() / b);
        p.input_scale[m] = sd > 1e-9 ? sd : 1.0;
    }
    // Uniform-spectrum level that reproduces the mean observed power.
    const double mean_power = y_dbm.unaryExpr([](double v) { return to_mw(v); }).mean();
    const double mean_row_sum = a.gains.rowwise().sum().mean();
    p.output_scale = mean_row_sum > 0 && mean_power > 0 ? mean_power / mean_row_sum : 1.0;
    p.validate();
    return p;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (batch_size == 0 || batch_size >= n) return {order};
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
    return out;
}

double train_l1(const EncoderParams& enc, const Matrix& y, const BeamPatternMatrix& a, double floor_mw) {
    return reconstruction_loss(encoder_forward(enc, y).embeddings, a, y, floor_mw, false).loss;
}

void scale_in_place(Matrix& m, double s) { m *= s; }

void scale_in_place(std::vector<DenseLayer>& layers, double s) {
    for (auto& l : layers) {
        l.weight *= s;
        l.bias *= s;
    }
}

void check_codebook(const Codebook& cb, std::size_t epoch) {
    const Matrix c = cb.effective_codewords();
    for (Eigen::Index k = 0; k < c.rows(); ++k) {
        std::size_t nnz = 0;
        for (Eigen::Index n = 0; n < c.cols(); ++n) {
            require(c(k, n) >= 0.0, ErrorKind::numeric_input,
                    "epoch " + std::to_string(epoch) + ": negative codeword entry");
            nnz += c(k, n) > 0.0 ? 1 : 0;
        }
        require(nnz <= cb.sparsity, ErrorKind::numeric_input,
                "epoch " + std::to_string(epoch) + ": codeword " + std::to_string(k) + " exceeds sparsity");
    }
}

template <typename Fn>
auto with_epoch(std::size_t epoch, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.kind(), "epoch " + std::to_string(epoch) + ": " + e.what());
    }
}

using Clock = std::chrono::steady_clock;

}  // namespace

PretrainResult pretrain_encoder(const TrainConfig& cfg, EncoderParams init, const Matrix& y_train,
                                const Matrix& y_val, const BeamPatternMatrix& a) {
    cfg.validate();
    require(y_train.rows() >= 1, ErrorKind::empty_dataset, "pretraining needs at least one training sample");
    PretrainResult out;
    out.encoder = init;
    if (cfg.pretrain_epochs == 0) return out;

    EncoderParams enc = std::move(init);
    auto opt = OptimizerState::for_blocks(enc.blocks(), cfg.optimizer);
    Rng rng = Rng::substream(cfg.seed, 0xba7c4);
    const bool has_val = y_val.rows() > 0;
    double best = std::numeric_limits<double>::infinity();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
        const auto t0 = Clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.phase = "pretrain";
        double l1_sum = 0.0;
        with_epoch(epoch, [&] {
            for (const auto& batch : make_batches(static_cast<std::size_t>(y_train.rows()), cfg.batch_size, rng)) {
                const Matrix y = batch.size() == static_cast<std::size_t>(y_train.rows()) ? y_train : select_rows(y_train, batch);
                const auto fwd = encoder_forward(enc, y);
                auto g = reconstruction_loss_and_grads(enc, fwd, a, y, cfg.floor_mw);
                require(std::isfinite(g.loss), ErrorKind::optimizer, "non-finite reconstruction loss");
                l1_sum += g.loss * static_cast<double>(batch.size());
                scale_in_place(g.grads.encoder, cfg.weights.reconstruction);
                adamw_step(opt, enc.blocks(), gradient_blocks(g.grads.encoder));
            }
            return 0;
        });
        rec.l1 = l1_sum / static_cast<double>(y_train.rows());
        rec.l2 = nan;
        rec.combined = cfg.weights.reconstruction * rec.l1;
        rec.active_ratio = nan;
        rec.val_l1 = has_val ? train_l1(enc, y_val, a, cfg.floor_mw) : train_l1(enc, y_train, a, cfg.floor_mw);
        rec.val_combined = cfg.weights.reconstruction * rec.val_l1;
        rec.encoder_digest_after = enc.digest();
        if (rec.val_l1 < best) {
            best = rec.val_l1;
            out.encoder = enc;
            out.log.best_pretrain_epoch = epoch;
        }
        out.log.records.push_back(rec);
        out.log.wall_seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    }
    return out;
}

Codebook init_codebook(const Matrix& embeddings, std::size_t k, std::size_t sparsity, double scale,
                       std::uint64_t seed, std::size_t restarts) {
    require(static_cast<std::size_t>(embeddings.rows()) >= k, ErrorKind::invalid_config,
            "codebook init needs at least K=" + std::to_string(k) + " samples, got " + std::to_string(embeddings.rows()));
    require(scale > 0, ErrorKind::invalid_config, "codebook scale must be > 0");
    KMeansOptions opts;
    opts.n_init = std::max<std::size_t>(1, restarts);
    const auto km = kmeans(embeddings, k, seed, opts);
    Codebook cb;
    cb.sparsity = sparsity;
    cb.scale = scale;
    cb.xi = km.centers.transpose() / scale;
    return cb;
}

Codebook random_codebook(std::size_t n, std::size_t k, std::size_t sparsity, double scale, double std,
                         std::uint64_t seed) {
    Codebook cb;
    cb.sparsity = sparsity;
    cb.scale = scale;
    cb.xi.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    Rng rng = Rng::substream(seed, 0xc0deb00c);
    for (Eigen::Index i = 0; i < cb.xi.size(); ++i) cb.xi.data()[i] = std * rng.normal();
    return cb;
}

Validation validate(const EncoderParams& encoder, const Codebook& cb, const Matrix& y_dbm, const BeamPatternMatrix& a,
                    const TrainConfig& cfg) {
    Validation v;
    if (y_dbm.rows() == 0) return v;
    const auto fwd = encoder_forward(encoder, y_dbm);
    const auto asg = quantize(cb, fwd.embeddings);
    LossOptions opts;
    opts.exclude_empty_grids = cfg.exclude_empty_grids;
    opts.want_codebook_grads = false;
    opts.want_embedding_grads = false;
    const auto loss = compute_losses(fwd.embeddings, asg, cb, a, y_dbm, cfg.weights, cfg.floor_mw, opts);
    v.l1 = loss.l1;
    v.l2 = loss.l2;
    v.combined = loss.combined;
    v.active_ratio = active_ratio(asg);
    return v;
}

TrainResult train(const TrainConfig& cfg, const Matrix& y_dbm, const BeamPatternMatrix& a) {
    cfg.validate();
    require(y_dbm.rows() >= 1, ErrorKind::empty_dataset, "training needs at least one sample");
    const auto split = split_samples(static_cast<std::size_t>(y_dbm.rows()), cfg.val_fraction, cfg.seed);
    const Matrix y_train = select_rows(y_dbm, split.train);
    const Matrix y_val = select_rows(y_dbm, split.val);
    const bool has_val = y_val.rows() > 0;
    const auto& scheme = cfg.scheme;

    TrainResult out;
    EncoderParams enc = make_encoder(cfg, y_train, a);
    if (scheme.pretrain) {
        auto pre = pretrain_encoder(cfg, std::move(enc), y_train, y_val, a);
        enc = std::move(pre.encoder);
        out.log = std::move(pre.log);
    }
    out.pretrain_l1 = train_l1(enc, y_train, a, cfg.floor_mw);

    const Matrix init_embeddings = encoder_forward(enc, y_train).embeddings;
    Codebook cb = scheme.kmeans_init
                      ? init_codebook(init_embeddings, cfg.n_grids, cfg.sparsity, enc.output_scale, cfg.seed,
                                      cfg.kmeans_restarts)
                      : random_codebook(a.n_angles(), cfg.n_grids, cfg.sparsity, enc.output_scale,
                                        cfg.naive_init_std, cfg.seed);
    out.log.post_init_active_ratio = active_ratio(quantize(cb, init_embeddings));

    auto enc_opt = OptimizerState::for_blocks(enc.blocks(), cfg.optimizer);
    auto cb_opt = OptimizerState::for_blocks(cb.blocks(), cfg.optimizer);
    Rng rng = Rng::substream(cfg.seed, 0x70a1);
    LossOptions loss_opts;
    loss_opts.exclude_empty_grids = cfg.exclude_empty_grids;
    const double w1 = cfg.weights.reconstruction;
    const double w2 = cfg.weights.quantization;

    EncoderParams best_enc = enc;
    Codebook best_cb = cb;
    double best = std::numeric_limits<double>::infinity();
    const std::size_t offset = out.log.records.size();
    std::optional<EncoderOutput> carried;

    for (std::size_t e = 1; e <= cfg.joint_epochs(); ++e) {
        const std::size_t epoch = offset + e;
        const auto t0 = Clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.phase = "train";
        double l1_sum = 0.0, l2_sum = 0.0, ar_sum = 0.0;
        const auto batches = make_batches(static_cast<std::size_t>(y_train.rows()), cfg.batch_size, rng);
        with_epoch(epoch, [&] {
            for (const auto& batch : batches) {
                const Matrix y = batches.size() == 1 ? y_train : select_rows(y_train, batch);
                const auto weight = static_cast<double>(batch.size());
                // Full batch: the previous codebook step already ran the current encoder on this data.
                EncoderOutput fwd = carried ? std::move(*carried) : encoder_forward(enc, y);
                carried.reset();
                const auto asg = quantize(cb, fwd.embeddings);
                loss_opts.want_embedding_grads = true;
                loss_opts.want_codebook_grads = !scheme.asynchronous;
                auto loss = compute_losses(fwd.embeddings, asg, cb, a, y, cfg.weights, cfg.floor_mw, loss_opts);
                require(std::isfinite(loss.combined), ErrorKind::optimizer,
                        "non-finite loss (l1=" + io::format_double(loss.l1) + ", l2=" + io::format_double(loss.l2) + ")");
                l1_sum += loss.l1 * weight;
                l2_sum += loss.l2 * weight;
                ar_sum += active_ratio(asg) * weight;

                // Quantization-loss path into the encoder; cut entirely when detached.
                Matrix to_encoder = scheme.detached ? Matrix::Zero(fwd.embeddings.rows(), fwd.embeddings.cols())
                                                    : Matrix(w2 * loss.grad_embeddings_l2);
                rec.encoder_l2_grad_norm = std::max(rec.encoder_l2_grad_norm, to_encoder.norm());
                Matrix grad_x = w1 * loss.grad_embeddings_l1 + to_encoder;
                const auto enc_grads = encoder_backward(enc, fwd.cache, grad_x);

                if (!scheme.asynchronous) {
                    rec.assignment_encoder_digest = enc.digest();
                    scale_in_place(loss.grad_codebook, w2);
                    const std::vector<ConstParamBlock> cb_grads = {
                        {"codebook.xi", loss.grad_codebook.data(), static_cast<std::size_t>(loss.grad_codebook.size())}};
                    adamw_step(enc_opt, enc.blocks(), gradient_blocks(enc_grads));
                    adamw_step(cb_opt, cb.blocks(), cb_grads);
                } else {
                    adamw_step(enc_opt, enc.blocks(), gradient_blocks(enc_grads));
                    // Fresh embeddings from the updated encoder, assigned with the old codebook.
                    EncoderOutput fresh_fwd = encoder_forward(enc, y);
                    const Matrix& fresh = fresh_fwd.embeddings;
                    rec.assignment_encoder_digest = enc.digest();
                    const auto fresh_asg = quantize(cb, fresh);
                    LossOptions q_opts = loss_opts;
                    q_opts.want_embedding_grads = false;
                    q_opts.want_codebook_grads = true;
                    auto q = quantization_loss(fresh, fresh_asg, cb, q_opts);
                    scale_in_place(q.grad_codebook, w2);
                    const std::vector<ConstParamBlock> cb_grads = {
                        {"codebook.xi", q.grad_codebook.data(), static_cast<std::size_t>(q.grad_codebook.size())}};
                    adamw_step(cb_opt, cb.blocks(), cb_grads);
                    if (batches.size() == 1) carried = std::move(fresh_fwd);
                }
            }
            check_codebook(cb, epoch);
            return 0;
        });
        const auto n_train = static_cast<double>(y_train.rows());
        rec.l1 = l1_sum / n_train;
        rec.l2 = l2_sum / n_train;
        rec.combined = w1 * rec.l1 + w2 * rec.l2;
        rec.active_ratio = ar_sum / n_train;
        rec.encoder_digest_after = enc.digest();
        const auto val = validate(enc, cb, has_val ? y_val : y_train, a, cfg);
        rec.val_l1 = val.l1;
        rec.val_combined = val.combined;
        if (val.combined < best) {
            best = val.combined;
            best_enc = enc;
            best_cb = cb;
            out.log.best_train_epoch = epoch;
        }
        out.log.records.push_back(rec);
        out.log.wall_seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    }

    out.encoder = std::move(best_enc);
    out.codebook = std::move(best_cb);
    out.embeddings = encoder_forward(out.encoder, y_dbm).embeddings;
    out.assignment = quantize(out.codebook, out.embeddings);
    out.final_active_ratio = active_ratio(out.assignment);
    out.summary = summarize_grids(out.assignment, out.embeddings, a, cfg.sparsity, cfg.floor_mw);
    return out;
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::string_view kCheckpointMagic = "CSGW1";
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    io::Writer w;
    w.bytes(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    write_encoder(w, ck.encoder);
    w.u32(ck.codebook ? 1 : 0);
    if (ck.codebook) {
        const auto& cb = *ck.codebook;
        cb.validate();
        w.u64(cb.n_angles());
        w.u64(cb.n_grids());
        w.u64(cb.sparsity);
        w.f64(cb.scale);
        w.f64s({cb.xi.data(), static_cast<std::size_t>(cb.xi.size())});
    }
    for (const auto* opt : {&ck.encoder_optimizer, &ck.codebook_optimizer}) {
        w.u32(*opt ? 1 : 0);
        if (*opt) write_optimizer(w, **opt);
    }
    const auto digest = io::fnv1a(w.buffer());
    w.u64(digest);
    w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    auto r = io::Reader::open(path);
    if (r.remaining() < kCheckpointMagic.size() || r.bytes(kCheckpointMagic.size()) != kCheckpointMagic)
        fail(ErrorKind::unrecognized_format, path.string() + " is not a checkpoint file");
    require(r.remaining() >= 8, ErrorKind::truncated, "checkpoint too short");
    const auto& buf = r.buffer();
    std::uint64_t stored = 0;
    for (int b = 0; b < 8; ++b) stored |= static_cast<std::uint64_t>(buf[buf.size() - 8 + static_cast<std::size_t>(b)]) << (8 * b);
    const auto version = r.u32();
    require(version == kCheckpointVersion, ErrorKind::version_mismatch,
            "checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
    require(io::fnv1a({buf.data(), buf.size() - 8}) == stored, ErrorKind::corrupt, "checkpoint digest mismatch");
    Checkpoint ck;
    ck.encoder = read_encoder(r);
    if (r.u32() != 0) {
        Codebook cb;
        const auto n = r.u64(), k = r.u64();
        cb.sparsity = r.u64();
        cb.scale = r.f64();
        require(n >= 1 && k >= 1 && n <= r.remaining() / 8 / k, ErrorKind::truncated, "codebook block exceeds payload");
        cb.xi.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
        r.f64s({cb.xi.data(), static_cast<std::size_t>(cb.xi.size())});
        cb.validate();
        ck.codebook = std::move(cb);
    }
    if (r.u32() != 0) ck.encoder_optimizer = read_optimizer(r);
    if (r.u32() != 0) ck.codebook_optimizer = read_optimizer(r);
    r.u64();
    require(r.remaining() == 0, ErrorKind::corrupt, "trailing bytes after checkpoint payload");
    return ck;
}

}  // namespace csg
