// SPDX-License-Identifier: Apache-2.0
#include "csg/lscm.hpp"

#include "csg/binary_io.hpp"
#include "csg/errors.hpp"
#include "csg/rng.hpp"

#include <cmath>
#include <numbers>

namespace csg {

namespace {
constexpr std::string_view kBeamMagic = "CSGA1";
}

AngularGrid AngularGrid::uniform(double theta_min, double theta_max, std::size_t n_v,
                                 double phi_min, double phi_max, std::size_t n_h) {
    auto linspace = [](double lo, double hi, std::size_t n) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i)
            v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        return v;
    };
    AngularGrid g{linspace(theta_min, theta_max, n_v), linspace(phi_min, phi_max, n_h)};
    g.validate();
    return g;
}

void AngularGrid::validate() const {
    require(!elevations.empty() && !azimuths.empty(), ErrorKind::invalid_config, "angular grid must be non-empty");
    for (double a : elevations) require(std::isfinite(a), ErrorKind::invalid_config, "non-finite elevation");
    for (double a : azimuths) require(std::isfinite(a), ErrorKind::invalid_config, "non-finite azimuth");
}

void AntennaConfig::validate() const {
    require(power_mw > 0 && std::isfinite(power_mw), ErrorKind::invalid_config, "transmit power must be > 0");
    require(wavelength != 0 && std::isfinite(wavelength), ErrorKind::invalid_config, "wavelength must be non-zero");
    require(n_y >= 1 && n_z >= 1, ErrorKind::invalid_config, "panel dimensions must be >= 1");
    for (double g : gain) require(g >= 0 && std::isfinite(g), ErrorKind::invalid_config, "antenna gain must be >= 0");
}

CVector steering_vector(const AntennaConfig& config, double theta, double phi) {
    require(config.wavelength != 0 && std::isfinite(config.wavelength), ErrorKind::invalid_config,
            "wavelength must be non-zero");
    const double k = 2.0 * std::numbers::pi / config.wavelength;
    const double py = config.spacing_y * std::sin(theta) * std::sin(phi);
    const double pz = config.spacing_z * std::cos(theta);
    CVector s(static_cast<Eigen::Index>(config.n_elements()));
    for (std::size_t y = 0; y < config.n_y; ++y) {
        for (std::size_t z = 0; z < config.n_z; ++z) {
            double phase = -k * (py * static_cast<double>(y) + pz * static_cast<double>(z));
            s[static_cast<Eigen::Index>(y * config.n_z + z)] = std::polar(1.0, phase);
        }
    }
    return s;
}

BeamPatternMatrix build_beam_pattern(const AntennaConfig& config, const AngularGrid& grid) {
    config.validate();
    grid.validate();
    const std::size_t n = grid.size();
    require(config.gain.empty() || config.gain.size() == n, ErrorKind::shape,
            "gain table has " + std::to_string(config.gain.size()) + " entries, grid has " + std::to_string(n));
    require(static_cast<std::size_t>(config.precoder.rows()) == config.n_elements(), ErrorKind::shape,
            "precoder has " + std::to_string(config.precoder.rows()) + " rows, panel has " +
                std::to_string(config.n_elements()) + " elements");
    require(config.precoder.cols() >= 1, ErrorKind::shape, "precoder must have at least one beam");

    const std::size_t m = config.n_beams();
    BeamPatternMatrix out{Matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)), BeamSource::computed};
    const CMatrix bh = config.precoder.adjoint();  // M x N_T
    for (std::size_t col = 0; col < n; ++col) {
        auto [theta, phi] = grid.angle(col);
        const CVector s = steering_vector(config, theta, phi);
        const CVector proj = bh * s;
        const double g = config.gain.empty() ? 1.0 : config.gain[col];
        for (std::size_t row = 0; row < m; ++row)
            out.gains(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) =
                config.power_mw * g * g * std::norm(proj[static_cast<Eigen::Index>(row)]);
    }
    return out;
}

CMatrix steered_precoder(const AntennaConfig& panel, std::span<const std::pair<double, double>> directions) {
    const auto nt = static_cast<Eigen::Index>(panel.n_elements());
    CMatrix b(nt, static_cast<Eigen::Index>(directions.size()));
    const double norm = 1.0 / std::sqrt(static_cast<double>(nt));
    for (std::size_t m = 0; m < directions.size(); ++m)
        b.col(static_cast<Eigen::Index>(m)) = steering_vector(panel, directions[m].first, directions[m].second) * norm;
    return b;
}

CMatrix random_phase_precoder(std::size_t n_elements, std::size_t n_beams, std::uint64_t seed) {
    Rng rng(seed);
    CMatrix b(static_cast<Eigen::Index>(n_elements), static_cast<Eigen::Index>(n_beams));
    const double norm = 1.0 / std::sqrt(static_cast<double>(n_elements));
    for (Eigen::Index e = 0; e < b.rows(); ++e)
        for (Eigen::Index m = 0; m < b.cols(); ++m)
            b(e, m) = std::polar(norm, 2.0 * std::numbers::pi * rng.uniform());
    return b;
}

double to_dbm(double mw, double floor_mw) { return 10.0 * std::log10(std::max(mw, floor_mw)); }

double to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

RsrpSample forward_rsrp(const BeamPatternMatrix& a, std::span<const double> x, double floor_mw) {
    require(x.size() == a.n_angles(), ErrorKind::shape,
            "CAPS has " + std::to_string(x.size()) + " entries, beam matrix has " + std::to_string(a.n_angles()) +
                " columns");
    require(floor_mw > 0, ErrorKind::invalid_config, "floor must be positive");
    const auto m = static_cast<Eigen::Index>(a.n_beams());
    RsrpSample out{Vector(m), Vector(m)};
    for (Eigen::Index r = 0; r < m; ++r) {
        const double* row = a.gains.row(r).data();
        double acc = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) acc += row[c] * x[c];
        out.mw[r] = acc;
        out.dbm[r] = to_dbm(acc, floor_mw);
    }
    return out;
}

void save_beam_pattern(const BeamPatternMatrix& a, const std::filesystem::path& path) {
    require(a.gains.size() > 0, ErrorKind::shape, "beam pattern matrix is empty");
    for (Eigen::Index i = 0; i < a.gains.size(); ++i) {
        const double v = a.gains.data()[i];
        require(std::isfinite(v) && v >= 0, ErrorKind::numeric_input,
                "beam gains must be finite and >= 0 (flat index " + std::to_string(i) + ")");
    }
    io::Writer w;
    w.bytes(kBeamMagic);
    w.u64(a.n_beams());
    w.u64(a.n_angles());
    w.f64s(std::span<const double>(a.gains.data(), static_cast<std::size_t>(a.gains.size())));
    w.save(path);
}

BeamPatternMatrix load_beam_pattern(const std::filesystem::path& path) {
    auto r = io::Reader::open(path);
    if (r.remaining() < kBeamMagic.size() || r.bytes(kBeamMagic.size()) != kBeamMagic)
        fail(ErrorKind::unrecognized_format, path.string() + " is not a beam pattern file");
    const std::uint64_t m = r.u64();
    const std::uint64_t n = r.u64();
    require(m >= 1 && n >= 1, ErrorKind::corrupt, "beam pattern dimensions must be >= 1");
    require(n <= r.remaining() / 8 / m, ErrorKind::truncated,
            "expected " + std::to_string(m) + "x" + std::to_string(n) + " entries");
    BeamPatternMatrix a{Matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)), BeamSource::loaded};
    r.f64s(std::span<double>(a.gains.data(), static_cast<std::size_t>(a.gains.size())));
    require(r.remaining() == 0, ErrorKind::corrupt, "trailing bytes after beam pattern payload");
    for (Eigen::Index i = 0; i < a.gains.size(); ++i) {
        const double v = a.gains.data()[i];
        require(std::isfinite(v), ErrorKind::corrupt, "non-finite entry at flat index " + std::to_string(i));
        require(v >= 0, ErrorKind::corrupt, "negative entry at flat index " + std::to_string(i));
    }
    return a;
}

}  // namespace csg
