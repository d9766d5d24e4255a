// SPDX-License-Identifier: Apache-2.0
#include "csg/autodiff.hpp"
#include "csg/binary_io.hpp"
#include "csg/errors.hpp"
#include "csg/rng.hpp"
#include "oracles/oracles.hpp"

#include "doctest.h"

#include <cmath>
#include <limits>

using namespace csg;

namespace {

struct Instance {
    EncoderParams params;
    Matrix y_dbm;
    BeamPatternMatrix a;
};

// M = 4 beams, N = 8 angles, width 8, the production depth and skips.
Instance small_instance(std::uint64_t seed, std::size_t batch = 6) {
    Rng rng(seed);
    Instance in;
    in.a.gains.resize(4, 8);
    for (Eigen::Index i = 0; i < in.a.gains.size(); ++i) in.a.gains.data()[i] = 0.05 + rng.uniform();
    in.params = EncoderParams::init(4, 8, 8, rng);
    for (auto& l : in.params.layers)
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = 0.1 * rng.normal();
    in.params.input_shift = Vector::Constant(4, -30.0);
    in.params.input_scale = Vector::Constant(4, 5.0);
    in.params.output_scale = 0.3;
    in.y_dbm.resize(Eigen::Index(batch), 4);
    for (Eigen::Index i = 0; i < in.y_dbm.size(); ++i) in.y_dbm.data()[i] = -30.0 + 6.0 * rng.normal();
    return in;
}

}  // namespace

TEST_CASE("encoder init shapes, skips and nonnegative output") {
    Rng rng(1);
    auto p = EncoderParams::init(32, 256, 64, rng);
    REQUIRE(p.layers.size() == 6);
    CHECK(p.layers[0].weight.cols() == 32);
    CHECK(p.layers[5].weight.rows() == 256);
    for (std::size_t l = 0; l < 6; ++l) CHECK(p.layers[l].skip == (l == 1 || l == 3));
    CHECK(p.parameter_count() == std::size_t(32 * 64 + 64 + 4 * (64 * 64 + 64) + 64 * 256 + 256));
    Matrix y = Matrix::Random(10, 32) * 20.0;
    auto out = encoder_forward(p, y);
    CHECK(out.embeddings.rows() == 10);
    CHECK(out.embeddings.minCoeff() >= 0.0);
    CHECK_THROWS_AS(EncoderParams::init(4, 8, 8, rng, 2, {1}), Error);
}

TEST_CASE("reverse mode matches central differences against an independent probe") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto in = small_instance(seed);
        const auto fwd = encoder_forward(in.params, in.y_dbm);
        const auto an = reconstruction_loss_and_grads(in.params, fwd, in.a, in.y_dbm, kDefaultFloorMw);
        std::vector<std::int8_t> sig;
        const long double l = oracle::l1_probe(in.params, in.y_dbm, in.a.gains, kDefaultFloorMw, sig);
        CHECK(std::abs(double(l) - an.loss) <= 1e-12 * std::max(1.0, an.loss));
        auto params = in.params;
        ProbeFn probe = [&](std::vector<std::int8_t>& s) { return oracle::l1_probe(params, in.y_dbm, in.a.gains, kDefaultFloorMw, s); };
        auto rep = finite_difference_check(params.blocks(), gradient_blocks(an.grads.encoder), probe);
        CHECK_MESSAGE(rep.max_rel_error() < 1e-6, "seed " << seed << " err " << rep.max_rel_error());
        std::size_t checked = 0;
        for (const auto& b : rep.blocks) checked += b.checked;
        CHECK(checked > 0);
    }
}

TEST_CASE("library gradient_check agrees") {
    for (std::uint64_t seed = 100; seed < 105; ++seed) {
        auto in = small_instance(seed);
        CHECK(gradient_check(in.params, in.y_dbm, in.a).passes(1e-6));
    }
}

TEST_CASE("finite differences detect a wrong gradient") {
    auto in = small_instance(7);
    const auto fwd = encoder_forward(in.params, in.y_dbm);
    auto an = reconstruction_loss_and_grads(in.params, fwd, in.a, in.y_dbm, kDefaultFloorMw);
    an.grads.encoder[2].weight *= 1.01;
    auto params = in.params;
    ProbeFn probe = [&](std::vector<std::int8_t>& s) { return oracle::l1_probe(params, in.y_dbm, in.a.gains, kDefaultFloorMw, s); };
    auto rep = finite_difference_check(params.blocks(), gradient_blocks(an.grads.encoder), probe);
    CHECK(rep.max_rel_error() > 1e-3);
}

TEST_CASE("embedding gradient of the dB MAE matches the closed form") {
    BeamPatternMatrix a{Matrix::Identity(2, 2), BeamSource::loaded};
    Matrix x(1, 2);
    x << 2.0, 0.5;
    Matrix y(1, 2);
    y << 0.0, 0.0;  // 0 dBm = 1 mW
    auto r = reconstruction_loss(x, a, y, kDefaultFloorMw);
    const double c = 10.0 / std::log(10.0);
    CHECK(r.loss == doctest::Approx((10 * std::log10(2.0) + -10 * std::log10(0.5)) / 2));
    // residual y - yhat: negative for x=2 (sign -1), positive for x=0.5.
    CHECK(r.grad_embeddings(0, 0) == doctest::Approx(c / 2.0 / 2.0));
    CHECK(r.grad_embeddings(0, 1) == doctest::Approx(-c / 0.5 / 2.0));
}

TEST_CASE("adamw step matches a hand-rolled update") {
    std::vector<double> theta{1.0, -2.0, 0.5};
    std::vector<double> grad{0.3, -0.1, 0.0};
    AdamWConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.weight_decay = 0.1;
    std::vector<ParamBlock> p{{"w", theta.data(), 3}};
    std::vector<ConstParamBlock> g{{"w", grad.data(), 3}};
    auto st = OptimizerState::for_blocks(p, cfg);
    std::vector<double> ref = theta, m(3, 0), v(3, 0);
    for (int t = 1; t <= 5; ++t) {
        adamw_step(st, p, g);
        for (int i = 0; i < 3; ++i) {
            ref[i] *= 1 - 0.01 * 0.1;
            m[i] = 0.9 * m[i] + 0.1 * grad[i];
            v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
            const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
            ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    for (int i = 0; i < 3; ++i) CHECK(theta[i] == doctest::Approx(ref[i]).epsilon(1e-14));
    CHECK(st.step == 5);
}

TEST_CASE("adamw rejects non-finite gradients before touching parameters") {
    std::vector<double> theta{1.0, 2.0};
    std::vector<double> grad{0.1, std::numeric_limits<double>::quiet_NaN()};
    std::vector<ParamBlock> p{{"codebook.xi", theta.data(), 2}};
    std::vector<ConstParamBlock> g{{"codebook.xi", grad.data(), 2}};
    auto st = OptimizerState::for_blocks(p, AdamWConfig{});
    try {
        adamw_step(st, p, g);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::optimizer);
        CHECK(std::string(e.what()).find("codebook.xi") != std::string::npos);
    }
    CHECK(theta[0] == 1.0);
    CHECK(st.step == 0);
}

TEST_CASE("encoder and optimizer serialization round-trip") {
    auto in = small_instance(3);
    io::Writer w;
    write_encoder(w, in.params);
    auto blocks = in.params.blocks();
    auto st = OptimizerState::for_blocks(blocks, AdamWConfig{});
    st.step = 4;
    st.first_moment[0][0] = 0.25;
    write_optimizer(w, st);
    io::Reader r(w.buffer());
    auto back = read_encoder(r);
    auto st2 = read_optimizer(r);
    CHECK(back.digest() == in.params.digest());
    CHECK(back.input_shift == in.params.input_shift);
    CHECK(back.output_scale == in.params.output_scale);
    CHECK(st2.step == 4);
    CHECK(st2.first_moment[0][0] == 0.25);
    CHECK(r.remaining() == 0);
}
