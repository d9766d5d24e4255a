// SPDX-License-Identifier: Apache-2.0
//
// Reference implementations used as test oracles. Written independently of
// the library: plain loops, long double where it matters, brute force where
// the instance is small enough.
#pragma once

#include "csg/autodiff.hpp"
#include "csg/model.hpp"
#include "csg/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <vector>

namespace oracle {

using csg::Labels;
using csg::Matrix;
using csg::Vector;
using Idx = Eigen::Index;

// Frozen output of nomp_recovery_oracle.py (20000 trials, seed 12345).
inline constexpr double kNompRecoveryRate = 0.9707;

// --- losses ----------------------------------------------------------------

/// Encoder forward and dB-domain MAE, one scalar at a time. The signature
/// records every ReLU, floor and absolute-value branch.
inline long double l1_probe(const csg::EncoderParams& p, const Matrix& y, const Matrix& gains, double floor_mw,
                            std::vector<std::int8_t>& sig) {
    sig.clear();
    long double total = 0;
    for (Idx i = 0; i < y.rows(); ++i) {
        std::vector<long double> h(std::size_t(y.cols()));
        for (Idx m = 0; m < y.cols(); ++m) h[std::size_t(m)] = ((long double)y(i, m) - p.input_shift[m]) / p.input_scale[m];
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            const auto& layer = p.layers[l];
            std::vector<long double> nh(std::size_t(layer.weight.rows()));
            for (Idx o = 0; o < layer.weight.rows(); ++o) {
                long double z = layer.bias[o];
                for (Idx c = 0; c < layer.weight.cols(); ++c) z += (long double)layer.weight(o, c) * h[std::size_t(c)];
                sig.push_back(z > 0);
                long double r = z > 0 ? z : 0;
                if (l + 1 == p.layers.size()) r *= p.output_scale;
                if (layer.skip) r += h[std::size_t(o)];
                nh[std::size_t(o)] = r;
            }
            h.swap(nh);
        }
        for (Idx m = 0; m < gains.rows(); ++m) {
            long double s = 0;
            for (Idx n = 0; n < gains.cols(); ++n) s += (long double)gains(m, n) * h[std::size_t(n)];
            sig.push_back(s > floor_mw);
            const long double yhat = 10.0L * std::log10(s > floor_mw ? s : (long double)floor_mw);
            const long double r = (long double)y(i, m) - yhat;
            sig.push_back(r > 0 ? 1 : (r < 0 ? -1 : 0));
            total += r < 0 ? -r : r;
        }
    }
    return total / (long double)(y.rows() * y.cols());
}

/// Quantization loss for fixed labels: per grid, squared distance between the
/// rectified top-L codeword and the member mean projected on its support.
inline long double l2_probe(const csg::Codebook& cb, const Matrix& x, const Labels& labels,
                            std::vector<std::int8_t>& sig) {
    sig.clear();
    const auto k_count = cb.n_grids();
    const auto n = cb.n_angles();
    long double total = 0;
    for (std::size_t k = 0; k < k_count; ++k) {
        std::vector<std::pair<double, std::size_t>> col;
        for (std::size_t r = 0; r < n; ++r) col.push_back({cb.xi(Idx(r), Idx(k)), r});
        std::stable_sort(col.begin(), col.end(), [](auto a, auto b) { return a.first > b.first; });
        std::vector<bool> on(n, false);
        for (std::size_t j = 0; j < std::min(cb.sparsity, n); ++j) on[col[j].second] = true;
        // Ties at the cut change the kept set; flag them as a kink.
        if (cb.sparsity < n) sig.push_back(col[cb.sparsity - 1].first == col[cb.sparsity].first ? 3 : 4);
        for (std::size_t r = 0; r < n; ++r) sig.push_back(on[r] ? (cb.xi(Idx(r), Idx(k)) > 0 ? 2 : 1) : 0);
        std::vector<long double> mu(n, 0);
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] != k) continue;
            ++cnt;
            for (std::size_t r = 0; r < n; ++r)
                if (on[r] && cb.xi(Idx(r), Idx(k)) > 0) mu[r] += x(Idx(i), Idx(r));
        }
        long double s = 0;
        for (std::size_t r = 0; r < n; ++r) {
            const long double m = cnt ? mu[r] / cnt : 0;
            const double raw = cb.xi(Idx(r), Idx(k));
            const long double c = on[r] && raw > 0 ? (long double)cb.scale * raw : 0;
            s += (c - m) * (c - m);
        }
        total += s / n;
    }
    return total / k_count;
}

// --- sparse coding ---------------------------------------------------------

inline Matrix columns(const Matrix& d, const std::vector<std::size_t>& cols) {
    Matrix s(d.rows(), Idx(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) s.col(Idx(j)) = d.col(Idx(cols[j]));
    return s;
}

inline double ls_residual(const Matrix& s, const Vector& y) {
    if (s.cols() == 0) return y.norm();
    const Vector c = s.colPivHouseholderQr().solve(y);
    return (y - s * c).norm();
}

/// NNLS by enumerating every subset of a handful of columns.
inline double nnls_residual(const Matrix& s, const Vector& y) {
    double best = y.norm();
    const auto k = s.cols();
    for (unsigned mask = 1; mask < (1u << k); ++mask) {
        std::vector<std::size_t> pick;
        for (Idx j = 0; j < k; ++j)
            if (mask & (1u << j)) pick.push_back(std::size_t(j));
        const Matrix sub = columns(s, pick);
        const Vector c = sub.colPivHouseholderQr().solve(y);
        if (c.minCoeff() < 0) continue;
        best = std::min(best, (y - sub * c).norm());
    }
    return best;
}

struct SupportOptimum {
    double residual = INFINITY;
    std::set<std::size_t> support;
};

/// Best residual over every support of size min(L, N), L <= 2.
inline SupportOptimum exhaustive_support(const Matrix& d, const Vector& y, std::size_t l, bool nonneg) {
    SupportOptimum out;
    const auto n = std::size_t(d.cols());
    auto consider = [&](const std::vector<std::size_t>& supp) {
        const Matrix s = columns(d, supp);
        const double r = nonneg ? nnls_residual(s, y) : ls_residual(s, y);
        if (r < out.residual) {
            out.residual = r;
            out.support = {supp.begin(), supp.end()};
        }
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (l == 1 || n == 1) consider({i});
        else
            for (std::size_t j = i + 1; j < n; ++j) consider({i, j});
    }
    return out;
}

// --- clustering ------------------------------------------------------------

/// Adjusted Rand index from explicit pair counting.
inline double ari_by_pairs(const Labels& a, const Labels& b) {
    long double both = 0, only_a = 0, only_b = 0, none = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const bool sa = a[i] == a[j], sb = b[i] == b[j];
            if (sa && sb) ++both;
            else if (sa) ++only_a;
            else if (sb) ++only_b;
            else ++none;
        }
    const long double pairs = both + only_a + only_b + none;
    const long double pa = both + only_a, pb = both + only_b;
    const long double expected = pa * pb / pairs;
    const long double maxi = (pa + pb) / 2;
    if (maxi == expected) return 1.0;
    return double((both - expected) / (maxi - expected));
}

inline double entropy(const Labels& a) {
    std::map<std::uint32_t, int> counts;
    for (auto v : a) ++counts[v];
    double h = 0;
    const double n = double(a.size());
    for (auto [k, c] : counts) h -= c / n * std::log(c / n);
    return h;
}

/// H(A | B), natural log.
inline double conditional_entropy(const Labels& a, const Labels& b) {
    std::map<std::uint32_t, Labels> by_b;
    for (std::size_t i = 0; i < a.size(); ++i) by_b[b[i]].push_back(a[i]);
    double h = 0;
    for (auto& [k, members] : by_b) h += double(members.size()) / double(a.size()) * entropy(members);
    return h;
}

// --- transport -------------------------------------------------------------

/// W1 between uniform measures on the rows of a and b: replicate atoms to
/// lcm(Ka, Kb) equal masses and try every matching.
inline double w1_brute_force(const Matrix& a, const Matrix& b) {
    const auto k1 = std::size_t(a.rows()), k2 = std::size_t(b.rows()), n = std::lcm(k1, k2);
    std::vector<Eigen::RowVectorXd> pa, pb;
    for (std::size_t i = 0; i < k1; ++i)
        for (std::size_t r = 0; r < n / k1; ++r) pa.push_back(a.row(Idx(i)));
    for (std::size_t j = 0; j < k2; ++j)
        for (std::size_t r = 0; r < n / k2; ++r) pb.push_back(b.row(Idx(j)));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = INFINITY;
    do {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += (pa[i] - pb[perm[i]]).norm();
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / double(n);
}

}  // namespace oracle
