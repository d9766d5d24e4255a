// SPDX-License-Identifier: Apache-2.0
#include "csg/datagen.hpp"

#include "csg/binary_io.hpp"
#include "csg/errors.hpp"
#include "csg/rng.hpp"

#include <cmath>
#include <limits>

namespace csg {

namespace {

constexpr std::string_view kDatasetMagic = "CSGD1";

// Stream ids: centers use 2k, samples of grid k use 2k + 1.
Rng center_stream(std::uint64_t seed, std::size_t k) { return Rng::substream(seed, 2 * k); }
Rng sample_stream(std::uint64_t seed, std::size_t k) { return Rng::substream(seed, 2 * k + 1); }

std::span<const double> row_span(const Matrix& m, Eigen::Index r) {
    return {m.row(r).data(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

void SyntheticConfig::validate() const {
    require(n_grids >= 1, ErrorKind::invalid_config, "K must be >= 1");
    require(n_angles >= 1, ErrorKind::invalid_config, "N must be >= 1");
    require(sparsity >= 1, ErrorKind::invalid_config, "L must be >= 1 (empty support)");
    require(sparsity <= n_angles, ErrorKind::invalid_config,
            "L = " + std::to_string(sparsity) + " exceeds N = " + std::to_string(n_angles));
    require(samples_per_grid >= 1, ErrorKind::invalid_config, "samples_per_grid must be >= 1");
    require(scale >= 0 && scale <= 1, ErrorKind::invalid_config, "scale s must lie in [0, 1]");
    require(laplace_power > 0 && std::isfinite(laplace_power), ErrorKind::invalid_config, "p must be > 0");
    require(floor_mw > 0, ErrorKind::invalid_config, "floor must be > 0");
}

double min_nonzero(const Eigen::Ref<const Vector>& v) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (v[i] > 0 && v[i] < best) best = v[i];
    return std::isfinite(best) ? best : 0.0;
}

Matrix gen_centers(const SyntheticConfig& cfg) {
    cfg.validate();
    const double b = std::sqrt(cfg.laplace_power);
    Matrix centers = Matrix::Zero(static_cast<Eigen::Index>(cfg.n_grids), static_cast<Eigen::Index>(cfg.n_angles));
    for (std::size_t k = 0; k < cfg.n_grids; ++k) {
        Rng rng = center_stream(cfg.seed, k);
        for (std::size_t n : rng.sample_without_replacement(cfg.n_angles, cfg.sparsity)) {
            double v = 0.0;
            while (v == 0.0) v = std::abs(rng.laplace(b));
            centers(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n)) = v;
        }
    }
    return centers;
}

SyntheticDataset gen_dataset(const SyntheticConfig& cfg, const BeamPatternMatrix& a) {
    cfg.validate();
    require(a.n_angles() == cfg.n_angles, ErrorKind::shape,
            "beam matrix has " + std::to_string(a.n_angles()) + " columns, config N = " +
                std::to_string(cfg.n_angles));
    SyntheticDataset ds;
    ds.sparsity = cfg.sparsity;
    ds.scale = cfg.scale;
    ds.laplace_power = cfg.laplace_power;
    ds.centers = gen_centers(cfg);

    const auto n = static_cast<Eigen::Index>(cfg.n_angles);
    const auto total = static_cast<Eigen::Index>(cfg.n_grids * cfg.samples_per_grid);
    ds.samples.resize(total, n);
    ds.perturbations.resize(total, n);
    ds.rsrp_dbm.resize(total, static_cast<Eigen::Index>(a.n_beams()));
    ds.labels.resize(static_cast<std::size_t>(total));

    for (std::size_t k = 0; k < cfg.n_grids; ++k) {
        const auto kr = static_cast<Eigen::Index>(k);
        const double base = min_nonzero(ds.centers.row(kr).transpose());
        require(base > 0, ErrorKind::invalid_config, "grid center " + std::to_string(k) + " has empty support");
        const double amp = cfg.scale * base;
        Rng rng = sample_stream(cfg.seed, k);
        for (std::size_t j = 0; j < cfg.samples_per_grid; ++j) {
            const auto i = static_cast<Eigen::Index>(k * cfg.samples_per_grid + j);
            for (Eigen::Index c = 0; c < n; ++c) {
                const double z = rng.truncated_normal(-1.0, 1.0);
                const bool on_support = ds.centers(kr, c) != 0.0;
                ds.perturbations(i, c) = (on_support ? z : std::abs(z)) * amp;
                ds.samples(i, c) = ds.centers(kr, c) + ds.perturbations(i, c);
            }
            ds.labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(k);
            ds.rsrp_dbm.row(i) = forward_rsrp(a, row_span(ds.samples, i), cfg.floor_mw).dbm.transpose();
        }
    }
    return ds;
}

void save_dataset(const SyntheticDataset& ds, const std::filesystem::path& path) {
    const auto i = ds.n_samples();
    require(i > 0, ErrorKind::empty_dataset, "refusing to save a dataset with no samples");
    require(ds.labels.size() == i && static_cast<std::size_t>(ds.samples.rows()) == i &&
                static_cast<std::size_t>(ds.perturbations.rows()) == i,
            ErrorKind::shape, "dataset arrays disagree on sample count");
    require(ds.samples.cols() == ds.centers.cols() && ds.perturbations.cols() == ds.centers.cols(),
            ErrorKind::shape, "dataset arrays disagree on N");
    io::Writer w;
    w.bytes(kDatasetMagic);
    w.u32(kDatasetVersion);
    w.u64(ds.n_grids());
    w.u64(ds.n_angles());
    w.u64(ds.sparsity);
    w.u64(i);
    w.u64(ds.n_beams());
    w.f64(ds.scale);
    w.f64(ds.laplace_power);
    auto flat = [](const Matrix& m) { return std::span<const double>(m.data(), static_cast<std::size_t>(m.size())); };
    w.f64s(flat(ds.centers));
    w.f64s(flat(ds.samples));
    w.f64s(flat(ds.rsrp_dbm));
    w.u32s(ds.labels);
    w.f64s(flat(ds.perturbations));
    w.save(path);
}

SyntheticDataset load_dataset(const std::filesystem::path& path) {
    auto r = io::Reader::open(path);
    if (r.remaining() < kDatasetMagic.size() || r.bytes(kDatasetMagic.size()) != kDatasetMagic)
        fail(ErrorKind::unrecognized_format, path.string() + " is not a dataset file");
    const std::uint32_t version = r.u32();
    require(version == kDatasetVersion, ErrorKind::version_mismatch,
            "dataset version " + std::to_string(version) + ", expected " + std::to_string(kDatasetVersion));
    const auto k = r.u64(), n = r.u64(), l = r.u64(), i = r.u64(), m = r.u64();
    SyntheticDataset ds;
    ds.sparsity = l;
    ds.scale = r.f64();
    ds.laplace_power = r.f64();
    require(k >= 1 && n >= 1 && m >= 1, ErrorKind::corrupt, "zero dimension in dataset header");
    const std::uint64_t need = 8 * (k * n + 2 * i * n + i * m) + 4 * i;
    require(r.remaining() >= need, ErrorKind::truncated,
            "payload has " + std::to_string(r.remaining()) + " bytes, header implies " + std::to_string(need));
    auto read = [&r](Matrix& mat, std::uint64_t rows, std::uint64_t cols) {
        mat.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        r.f64s(std::span<double>(mat.data(), static_cast<std::size_t>(mat.size())));
    };
    read(ds.centers, k, n);
    read(ds.samples, i, n);
    read(ds.rsrp_dbm, i, m);
    ds.labels.resize(i);
    r.u32s(ds.labels);
    read(ds.perturbations, i, n);
    require(r.remaining() == 0, ErrorKind::corrupt, "trailing bytes after dataset payload");
    for (auto lab : ds.labels) require(lab < k, ErrorKind::corrupt, "label out of range");
    return ds;
}

}  // namespace csg
