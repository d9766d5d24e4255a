// SPDX-License-Identifier: Apache-2.0
#include "csg/errors.hpp"
#include "csg/model.hpp"
#include "csg/rng.hpp"
#include "oracles/oracles.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace csg;

namespace {

Codebook random_codebook_for_test(std::size_t n, std::size_t k, std::size_t l, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Codebook cb;
    cb.xi.resize(Eigen::Index(n), Eigen::Index(k));
    for (Eigen::Index i = 0; i < cb.xi.size(); ++i) cb.xi.data()[i] = rng.normal();
    cb.sparsity = l;
    cb.scale = scale;
    return cb;
}

Matrix random_embeddings(std::size_t b, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::abs(rng.normal());
    return x;
}

// Brute-force nearest effective codeword, full Euclidean distance.
std::uint32_t nearest(const Matrix& cw, const Eigen::RowVectorXd& x) {
    std::uint32_t best = 0;
    double bd = INFINITY;
    for (Eigen::Index k = 0; k < cw.rows(); ++k) {
        const double d = (cw.row(k) - x).squaredNorm();
        if (d < bd) {
            bd = d;
            best = std::uint32_t(k);
        }
    }
    return best;
}

}  // namespace

TEST_CASE("kept indices take the L largest with ties to the lower index") {
    Codebook cb;
    cb.xi.resize(5, 1);
    cb.xi << 1.0, 3.0, 3.0, -1.0, 3.0;
    cb.sparsity = 2;
    auto kept = cb.kept_indices(0);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0] == 1);
    CHECK(kept[1] == 2);
    cb.scale = 0.5;
    auto c = cb.effective_codeword(0);
    CHECK(c[1] == 1.5);
    CHECK(c[2] == 1.5);
    CHECK(c[4] == 0.0);
}

TEST_CASE("effective codewords are L-sparse and nonnegative") {
    auto cb = random_codebook_for_test(30, 7, 4, 2, 0.1);
    auto cw = cb.effective_codewords();
    for (Eigen::Index k = 0; k < cw.rows(); ++k) {
        CHECK((cw.row(k).array() > 0).count() <= 4);
        CHECK(cw.row(k).minCoeff() >= 0.0);
    }
}

TEST_CASE("quantize agrees with brute-force nearest codeword") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto cb = random_codebook_for_test(20, 6, 3, seed, 2.0);
        auto x = random_embeddings(40, 20, seed + 100);
        auto q = quantize(cb, x);
        const auto cw = cb.effective_codewords();
        std::size_t total = 0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            CHECK(q.labels[std::size_t(i)] == nearest(cw, x.row(i)));
            CHECK(q.distances[std::size_t(i)] == doctest::Approx((cw.row(q.labels[std::size_t(i)]) - x.row(i)).squaredNorm()));
        }
        for (const auto& m : q.members) total += m.size();
        CHECK(total == 40);
    }
}

TEST_CASE("quantize breaks exact ties toward the lowest index") {
    Codebook cb;
    cb.xi = Matrix::Zero(3, 3);
    cb.xi(0, 0) = 1.0;
    cb.xi(0, 1) = 1.0;
    cb.xi(2, 2) = 5.0;
    cb.sparsity = 1;
    Matrix x(1, 3);
    x << 1.0, 0.0, 0.0;
    CHECK(quantize(cb, x).labels[0] == 0);
}

TEST_CASE("active ratio counts nonempty grids") {
    Codebook cb;
    cb.xi = Matrix::Zero(2, 4);
    cb.xi(0, 0) = 1.0;
    cb.xi(1, 1) = 1.0;
    cb.xi(0, 2) = -1.0;
    cb.xi(1, 3) = -1.0;
    cb.sparsity = 1;
    Matrix x(3, 2);
    x << 1, 0, 0, 1, 0.9, 0.1;
    auto q = quantize(cb, x);
    // Codewords 2 and 3 rectify to zero vectors and are never the nearest.
    CHECK(active_ratio(q) == doctest::Approx(0.5));
}

TEST_CASE("quantization loss matches a hand computation") {
    Codebook cb;
    cb.xi.resize(2, 2);
    cb.xi << 1.0, 0.0, 0.0, 2.0;
    cb.sparsity = 1;
    Matrix x(3, 2);
    x << 0.8, 0.1, 1.2, 0.3, 0.2, 1.5;
    auto q = quantize(cb, x);
    REQUIRE(q.labels == Labels{0, 0, 1});
    auto r = quantization_loss(x, q, cb);
    // grid 0: mu = (1.0, 0), c = (1, 0) -> 0; grid 1: mu = (0, 1.5), c = (0, 2) -> 0.25.
    CHECK(r.l2 == doctest::Approx((0.0 + 0.25 / 2) / 2));
}

TEST_CASE("codebook gradient matches differences of an independent L2") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto cb = random_codebook_for_test(12, 4, 3, seed, 0.7);
        auto x = random_embeddings(30, 12, seed + 50);
        auto q = quantize(cb, x);
        LossOptions opt;
        opt.want_embedding_grads = false;
        auto an = quantization_loss(x, q, cb, opt);
        std::vector<std::int8_t> sig;
        CHECK(double(oracle::l2_probe(cb, x, q.labels, sig)) == doctest::Approx(an.l2).epsilon(1e-12));
        const Labels fixed = q.labels;
        auto work = cb;
        ProbeFn probe = [&](std::vector<std::int8_t>& s) { return oracle::l2_probe(work, x, fixed, s); };
        std::vector<ConstParamBlock> g{{"codebook.xi", an.grad_codebook.data(), std::size_t(an.grad_codebook.size())}};
        auto rep = finite_difference_check(work.blocks(), g, probe);
        CHECK_MESSAGE(rep.max_rel_error() < 1e-6, "seed " << seed);
        CHECK(codebook_gradient_check(cb, x).passes(1e-6));
    }
}

TEST_CASE("negative loss weights are rejected") {
    auto cb = random_codebook_for_test(8, 2, 2, 1);
    auto x = random_embeddings(4, 8, 2);
    auto q = quantize(cb, x);
    BeamPatternMatrix a{Matrix::Ones(3, 8), BeamSource::loaded};
    Matrix y = Matrix::Zero(4, 3);
    try {
        compute_losses(x, q, cb, a, y, LossWeights{1.0, -1.0});
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_config);
    }
}

TEST_CASE("grid summary JSON round-trip and prediction identities") {
    Rng rng(4);
    BeamPatternMatrix a{Matrix(5, 10), BeamSource::loaded};
    for (Eigen::Index i = 0; i < a.gains.size(); ++i) a.gains.data()[i] = rng.uniform();
    auto cb = random_codebook_for_test(10, 4, 3, 6);
    cb.xi.col(3).setConstant(-1.0);  // never chosen: stays inactive
    auto x = random_embeddings(25, 10, 9);
    auto q = quantize(cb, x);
    auto s = summarize_grids(q, x, a, 3);
    auto text = summary_to_json(s);
    auto back = summary_from_json(text);
    CHECK(summary_to_json(back) == text);

    auto p1 = predict_under_beam(back, a);
    for (std::size_t k = 0; k < s.n_grids(); ++k) {
        CHECK(p1.active[k] == s.grids[k].active);
        if (p1.active[k]) CHECK(p1.dbm[k] == s.grids[k].average_dbm);
        else CHECK(p1.dbm[k].maxCoeff() == doctest::Approx(-120.0));
    }
    BeamPatternMatrix a2{2.0 * a.gains, BeamSource::loaded};
    auto p2 = predict_under_beam(back, a2);
    for (std::size_t k = 0; k < s.n_grids(); ++k)
        if (p1.active[k])
            for (Eigen::Index m = 0; m < 5; ++m)
                CHECK(std::abs(p2.dbm[k][m] - p1.dbm[k][m] - 10 * std::log10(2.0)) < 1e-9);

    BeamPatternMatrix wrong{Matrix::Ones(5, 11), BeamSource::loaded};
    CHECK_THROWS_AS(predict_under_beam(back, wrong), Error);
}

TEST_CASE("corrupt summaries are reported as such") {
    for (const char* bad : {"{", "{\"K\": 2}", "[]", "{\"K\":1,\"N\":3,\"L\":1,\"grids\":[{\"index\":0}]}"}) {
        try {
            summary_from_json(bad);
            FAIL("expected error for " << bad);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::corrupt);
        }
    }
    const auto p = std::filesystem::temp_directory_path() / "csg_model_bad_summary.json";
    {
        std::ofstream(p) << "not json";
    }
    CHECK_THROWS_AS(load_summary(p), Error);
}
