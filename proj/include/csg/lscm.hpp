// SPDX-License-Identifier: Apache-2.0
//
// Linear statistical channel model: the discretised angular space, the
// URA steering vectors, the beam pattern matrix A and the RSRP forward map
// y = A x (mW) with its dBm view.
#pragma once

#include "csg/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace csg {

/// Elevation-major angular grid: flat index n = v * N_H + h (0-based).
struct AngularGrid {
    std::vector<double> elevations;  // theta_v, radians from the panel's z axis
    std::vector<double> azimuths;    // phi_h, radians

    std::size_t n_elevation() const { return elevations.size(); }
    std::size_t n_azimuth() const { return azimuths.size(); }
    std::size_t size() const { return elevations.size() * azimuths.size(); }

    std::size_t flat_index(std::size_t v, std::size_t h) const { return v * azimuths.size() + h; }
    std::pair<std::size_t, std::size_t> split_index(std::size_t n) const {
        return {n / azimuths.size(), n % azimuths.size()};
    }
    std::pair<double, double> angle(std::size_t n) const {
        auto [v, h] = split_index(n);
        return {elevations[v], azimuths[h]};
    }

    /// Evenly spaced angles, endpoints included (a single point sits at the lower bound).
    static AngularGrid uniform(double theta_min, double theta_max, std::size_t n_v,
                               double phi_min, double phi_max, std::size_t n_h);

    void validate() const;
};

/// BS-side antenna parameters. Element (y, z) of the N_y x N_z panel maps to
/// precoder row y * N_z + z.
struct AntennaConfig {
    double power_mw = 1.0;
    CMatrix precoder;  // N_T x M
    std::size_t n_y = 1;
    std::size_t n_z = 1;
    double spacing_y = 0.5;   // meters
    double spacing_z = 0.5;   // meters
    double wavelength = 1.0;  // meters
    std::vector<double> gain; // per-angle gain g_n; empty means all ones

    std::size_t n_elements() const { return n_y * n_z; }
    std::size_t n_beams() const { return static_cast<std::size_t>(precoder.cols()); }
    void validate() const;
};

enum class BeamSource { computed, loaded };

struct BeamPatternMatrix {
    Matrix gains;  // M x N, mW per unit CAPS gain
    BeamSource source = BeamSource::computed;

    std::size_t n_beams() const { return static_cast<std::size_t>(gains.rows()); }
    std::size_t n_angles() const { return static_cast<std::size_t>(gains.cols()); }
};

struct RsrpSample {
    Vector mw;
    Vector dbm;
};

CVector steering_vector(const AntennaConfig& config, double theta, double phi);

/// Default closed form [A]_{m,n} = P * g_n^2 * |b_m^H s_n|^2.
BeamPatternMatrix build_beam_pattern(const AntennaConfig& config, const AngularGrid& grid);

/// Beams b_m = s(theta_m, phi_m) / sqrt(N_T), one per requested direction.
CMatrix steered_precoder(const AntennaConfig& panel, std::span<const std::pair<double, double>> directions);

/// Unit-modulus random-phase beams scaled by 1/sqrt(N_T).
CMatrix random_phase_precoder(std::size_t n_elements, std::size_t n_beams, std::uint64_t seed);

double to_dbm(double mw, double floor_mw = kDefaultFloorMw);
double to_mw(double dbm);

/// y_mw = A x accumulated in column order, y_dbm = 10 log10(max(y_mw, floor)).
RsrpSample forward_rsrp(const BeamPatternMatrix& a, std::span<const double> x,
                        double floor_mw = kDefaultFloorMw);

void save_beam_pattern(const BeamPatternMatrix& a, const std::filesystem::path& path);
BeamPatternMatrix load_beam_pattern(const std::filesystem::path& path);

}  // namespace csg
