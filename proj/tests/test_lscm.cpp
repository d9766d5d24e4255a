// SPDX-License-Identifier: Apache-2.0
#include "csg/errors.hpp"
#include "csg/lscm.hpp"
#include "csg/rng.hpp"

#include "doctest.h"

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace csg;

namespace {

AntennaConfig panel(std::size_t ny, std::size_t nz) {
    AntennaConfig c;
    c.n_y = ny;
    c.n_z = nz;
    c.spacing_y = 0.37;
    c.spacing_z = 0.61;
    c.wavelength = 0.9;
    return c;
}

// Straight from the element formula, without the library's loop structure.
std::complex<double> steering_entry(const AntennaConfig& c, std::size_t y, std::size_t z, double th, double ph) {
    const double arg = 2.0 * std::numbers::pi / c.wavelength *
                       (c.spacing_y * double(y) * std::sin(th) * std::sin(ph) + c.spacing_z * double(z) * std::cos(th));
    return {std::cos(arg), -std::sin(arg)};
}

std::filesystem::path tmp(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("csg_lscm_" + name);
}

}  // namespace

TEST_CASE("steering vector at broadside is all ones") {
    auto c = panel(4, 3);
    auto s = steering_vector(c, std::numbers::pi / 2, 0.0);
    REQUIRE(s.size() == 12);
    for (Eigen::Index i = 0; i < s.size(); ++i) CHECK(std::abs(s[i] - std::complex<double>(1.0, 0.0)) < 1e-15);
}

TEST_CASE("single element steering vector is [1]") {
    auto s = steering_vector(panel(1, 1), 0.3, -1.1);
    REQUIRE(s.size() == 1);
    CHECK(s[0] == std::complex<double>(1.0, 0.0));
}

TEST_CASE("steering vector matches the element formula and has unit modulus") {
    auto c = panel(5, 4);
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        const double th = rng.uniform() * std::numbers::pi, ph = (rng.uniform() - 0.5) * 2 * std::numbers::pi;
        auto s = steering_vector(c, th, ph);
        for (std::size_t y = 0; y < 5; ++y)
            for (std::size_t z = 0; z < 4; ++z) {
                const auto v = s[Eigen::Index(y * 4 + z)];
                CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);
                CHECK(std::abs(v - steering_entry(c, y, z, th, ph)) < 1e-12);
            }
    }
}

TEST_CASE("zero wavelength is an invalid config") {
    auto c = panel(2, 2);
    c.wavelength = 0.0;
    try {
        steering_vector(c, 0.1, 0.2);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_config);
    }
}

TEST_CASE("single element beam pattern equals P everywhere") {
    AntennaConfig c = panel(1, 1);
    c.power_mw = 2.0;
    c.precoder = CMatrix::Ones(1, 1);
    auto g = AngularGrid::uniform(0.2, 2.9, 5, -1.0, 1.0, 7);
    auto a = build_beam_pattern(c, g);
    REQUIRE(a.n_beams() == 1);
    REQUIRE(a.n_angles() == 35);
    for (Eigen::Index n = 0; n < 35; ++n) CHECK(a.gains(0, n) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("beam pattern follows P g^2 |b^H s|^2 and scales with P") {
    AntennaConfig c = panel(3, 2);
    c.precoder = random_phase_precoder(6, 4, 11);
    auto g = AngularGrid::uniform(0.5, 2.5, 4, -0.8, 0.8, 5);
    c.gain.resize(g.size());
    for (std::size_t n = 0; n < g.size(); ++n) c.gain[n] = 0.5 + 0.1 * double(n % 3);
    c.power_mw = 1.5;
    auto a = build_beam_pattern(c, g);
    for (std::size_t n = 0; n < g.size(); ++n) {
        auto [th, ph] = g.angle(n);
        for (std::size_t m = 0; m < 4; ++m) {
            std::complex<double> acc = 0;
            for (std::size_t y = 0; y < 3; ++y)
                for (std::size_t z = 0; z < 2; ++z)
                    acc += std::conj(c.precoder(Eigen::Index(y * 2 + z), Eigen::Index(m))) * steering_entry(c, y, z, th, ph);
            const double want = 1.5 * c.gain[n] * c.gain[n] * std::norm(acc);
            CHECK(a.gains(Eigen::Index(m), Eigen::Index(n)) == doctest::Approx(want).epsilon(1e-12));
        }
    }
    CHECK(a.gains.minCoeff() >= 0.0);
    auto c2 = c;
    c2.power_mw = 3.0;
    auto a2 = build_beam_pattern(c2, g);
    CHECK((a2.gains - 2.0 * a.gains).cwiseAbs().maxCoeff() <= 1e-15 * a.gains.maxCoeff() * 4);
}

TEST_CASE("precoder row count must match the panel") {
    AntennaConfig c = panel(2, 2);
    c.precoder = CMatrix::Ones(3, 2);
    try {
        build_beam_pattern(c, AngularGrid::uniform(0, 1, 2, 0, 1, 2));
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::shape);
    }
}

TEST_CASE("forward_rsrp examples") {
    BeamPatternMatrix a{Matrix::Identity(3, 3), BeamSource::loaded};
    std::vector<double> x{1, 2, 3};
    auto r = forward_rsrp(a, x);
    CHECK(r.mw[0] == 1.0);
    CHECK(r.mw[1] == 2.0);
    CHECK(r.mw[2] == 3.0);
    CHECK(to_dbm(100.0) == doctest::Approx(20.0).epsilon(1e-15));
    std::vector<double> zero(3, 0.0);
    auto z = forward_rsrp(a, zero, 1e-12);
    for (int i = 0; i < 3; ++i) CHECK(z.dbm[i] == doctest::Approx(-120.0).epsilon(1e-14));
    std::vector<double> bad(2, 0.0);
    CHECK_THROWS_AS(forward_rsrp(a, bad), Error);
}

TEST_CASE("forward_rsrp is linear for nonnegative combinations") {
    Rng rng(5);
    BeamPatternMatrix a{Matrix(6, 20), BeamSource::loaded};
    for (Eigen::Index i = 0; i < a.gains.size(); ++i) a.gains.data()[i] = rng.uniform();
    for (int t = 0; t < 50; ++t) {
        std::vector<double> x1(20), x2(20), mix(20);
        const double al = rng.uniform() * 3, be = rng.uniform() * 3;
        for (int n = 0; n < 20; ++n) {
            x1[n] = rng.uniform();
            x2[n] = rng.uniform();
            mix[n] = al * x1[n] + be * x2[n];
        }
        auto y = forward_rsrp(a, mix).mw;
        auto y1 = forward_rsrp(a, x1).mw, y2 = forward_rsrp(a, x2).mw;
        for (int m = 0; m < 6; ++m) {
            const double want = al * y1[m] + be * y2[m];
            CHECK(std::abs(y[m] - want) <= 1e-10 * std::abs(want));
        }
    }
}

TEST_CASE("dBm and mW round-trip above the floor") {
    Rng rng(8);
    for (int t = 0; t < 1000; ++t) {
        const double mw = std::pow(10.0, -11.0 + 14.0 * rng.uniform());
        CHECK(std::abs(to_mw(to_dbm(mw)) - mw) / mw < 1e-12);
    }
}

TEST_CASE("flat angular index round-trips elevation-major") {
    auto g = AngularGrid::uniform(0, 1, 7, 0, 1, 5);
    std::size_t n = 0;
    for (std::size_t v = 0; v < 7; ++v)
        for (std::size_t h = 0; h < 5; ++h, ++n) {
            CHECK(g.flat_index(v, h) == n);
            auto [vv, hh] = g.split_index(n);
            CHECK(vv == v);
            CHECK(hh == h);
        }
}

TEST_CASE("beam pattern files round-trip and reject bad payloads") {
    Rng rng(2);
    BeamPatternMatrix a{Matrix(4, 9), BeamSource::computed};
    for (Eigen::Index i = 0; i < a.gains.size(); ++i) a.gains.data()[i] = rng.uniform() * 1e-3;
    const auto p = tmp("roundtrip.csga");
    save_beam_pattern(a, p);
    auto b = load_beam_pattern(p);
    CHECK(b.source == BeamSource::loaded);
    CHECK(b.gains == a.gains);

    {
        std::ofstream out(tmp("bad.csga"), std::ios::binary);
        out << "NOTAB";
    }
    try {
        load_beam_pattern(tmp("bad.csga"));
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::unrecognized_format);
    }

    a.gains(1, 1) = -1.0;
    CHECK_THROWS_AS(save_beam_pattern(a, tmp("neg.csga")), Error);
}

TEST_CASE("loader rejects a negative entry written by hand") {
    const auto p = tmp("handneg.csga");
    {
        std::ofstream out(p, std::ios::binary);
        out.write("CSGA1", 5);
        std::uint64_t dims[2] = {1, 2};
        out.write(reinterpret_cast<const char*>(dims), sizeof dims);
        double vals[2] = {1.0, -0.5};
        out.write(reinterpret_cast<const char*>(vals), sizeof vals);
    }
    CHECK_THROWS_AS(load_beam_pattern(p), Error);
}
