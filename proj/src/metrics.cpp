// SPDX-License-Identifier: Apache-2.0
#include "csg/metrics.hpp"

#include "csg/errors.hpp"
#include "csg/lscm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>

namespace csg {

ContingencyTable ContingencyTable::build(const Labels& truth, const Labels& pred) {
    require(truth.size() == pred.size(), ErrorKind::shape,
            "label arrays differ in length (" + std::to_string(truth.size()) + " vs " + std::to_string(pred.size()) + ")");
    auto compact = [](const Labels& labels) {
        std::map<std::uint32_t, std::size_t> ids;
        for (auto l : labels) ids.emplace(l, 0);
        std::size_t next = 0;
        for (auto& [_, id] : ids) id = next++;
        std::vector<std::size_t> out(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) out[i] = ids[labels[i]];
        return std::pair{out, next};
    };
    auto [c, nc] = compact(truth);
    auto [k, nk] = compact(pred);
    ContingencyTable t;
    t.counts.assign(nc, std::vector<std::size_t>(nk, 0));
    t.class_totals.assign(nc, 0);
    t.cluster_totals.assign(nk, 0);
    for (std::size_t i = 0; i < c.size(); ++i) {
        ++t.counts[c[i]][k[i]];
        ++t.class_totals[c[i]];
        ++t.cluster_totals[k[i]];
    }
    t.total = truth.size();
    return t;
}

namespace {

long double comb2(std::size_t n) { return static_cast<long double>(n) * (static_cast<long double>(n) - 1) / 2; }

double entropy(const std::vector<std::size_t>& totals, std::size_t n) {
    double h = 0.0;
    for (std::size_t t : totals)
        if (t > 0) {
            const double p = static_cast<double>(t) / static_cast<double>(n);
            h -= p * std::log(p);
        }
    return h;
}

}  // namespace

ClusteringScores clustering_metrics(const Labels& truth, const Labels& pred) {
    require(!truth.empty(), ErrorKind::empty_dataset, "clustering metrics need at least one sample");
    const auto t = ContingencyTable::build(truth, pred);
    ClusteringScores s;

    long double index = 0, sum_a = 0, sum_b = 0;
    for (const auto& row : t.counts)
        for (std::size_t v : row) index += comb2(v);
    for (std::size_t v : t.class_totals) sum_a += comb2(v);
    for (std::size_t v : t.cluster_totals) sum_b += comb2(v);
    const long double pairs = comb2(t.total);
    // Numerator and denominator both scaled by C(I, 2) to stay in integers.
    const long double num = index * pairs - sum_a * sum_b;
    const long double den = 0.5L * (sum_a + sum_b) * pairs - sum_a * sum_b;
    s.ari = den == 0 ? 1.0 : static_cast<double>(num / den);

    const auto n = static_cast<double>(t.total);
    const double hc = entropy(t.class_totals, t.total);
    const double hk = entropy(t.cluster_totals, t.total);
    double mi = 0.0, hc_given_k = 0.0, hk_given_c = 0.0;
    for (std::size_t c = 0; c < t.counts.size(); ++c) {
        for (std::size_t k = 0; k < t.counts[c].size(); ++k) {
            const auto nck = static_cast<double>(t.counts[c][k]);
            if (nck == 0) continue;
            const auto nc = static_cast<double>(t.class_totals[c]);
            const auto nk = static_cast<double>(t.cluster_totals[k]);
            mi += nck / n * std::log(n * nck / (nc * nk));
            hc_given_k -= nck / n * std::log(nck / nk);
            hk_given_c -= nck / n * std::log(nck / nc);
        }
    }
    if (hc == 0.0 && hk == 0.0)
        s.nmi = 1.0;
    else if (hc == 0.0 || hk == 0.0)
        s.nmi = 0.0;
    else
        s.nmi = std::clamp(mi / std::sqrt(hc * hk), 0.0, 1.0);
    s.homogeneity = hc == 0.0 ? 1.0 : std::clamp(1.0 - hc_given_k / hc, 0.0, 1.0);
    s.completeness = hk == 0.0 ? 1.0 : std::clamp(1.0 - hk_given_c / hk, 0.0, 1.0);
    const double hsum = s.homogeneity + s.completeness;
    s.v_measure = hsum == 0.0 ? 0.0 : 2.0 * s.homogeneity * s.completeness / hsum;
    return s;
}

NmseResult sample_mean_nmse(const Matrix& true_centers, const Labels& true_labels, const Matrix& pred_centers,
                            const Labels& pred_labels) {
    require(true_labels.size() == pred_labels.size(), ErrorKind::shape, "label arrays differ in length");
    require(true_centers.cols() == pred_centers.cols(), ErrorKind::shape, "center sets differ in dimension");
    NmseResult out;
    double total = 0.0;
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
        require(true_labels[i] < true_centers.rows(), ErrorKind::index, "true label out of range");
        require(pred_labels[i] < pred_centers.rows(), ErrorKind::index, "predicted label out of range");
        const auto truth = true_centers.row(true_labels[i]);
        const double norm = truth.norm();
        if (norm == 0.0) {
            ++out.skipped_zero_norm;
            continue;
        }
        total += (truth - pred_centers.row(pred_labels[i])).norm() / norm;
        ++out.counted;
    }
    out.value = out.counted == 0 ? 0.0 : total / static_cast<double>(out.counted);
    return out;
}

NmseResult matched_sample_mean_nmse(const Matrix& true_centers, const Labels& true_labels,
                                    const Matrix& pred_centers) {
    require(true_centers.cols() == pred_centers.cols(), ErrorKind::shape, "center sets differ in dimension");
    const bool transpose = true_centers.rows() > pred_centers.rows();
    const Matrix& rows = transpose ? pred_centers : true_centers;
    const Matrix& cols = transpose ? true_centers : pred_centers;
    Eigen::MatrixXd cost(rows.rows(), cols.rows());
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
        for (Eigen::Index j = 0; j < cols.rows(); ++j) cost(i, j) = (rows.row(i) - cols.row(j)).norm();
    const auto match = hungarian(cost);
    // Unmatched true grids are scored against the zero vector.
    Matrix matched = Matrix::Zero(true_centers.rows(), true_centers.cols());
    for (std::size_t r = 0; r < match.size(); ++r) {
        if (transpose)
            matched.row(static_cast<Eigen::Index>(match[r])) = pred_centers.row(static_cast<Eigen::Index>(r));
        else
            matched.row(static_cast<Eigen::Index>(r)) = pred_centers.row(static_cast<Eigen::Index>(match[r]));
    }
    return sample_mean_nmse(true_centers, true_labels, matched, true_labels);
}

std::vector<std::size_t> hungarian(const Eigen::MatrixXd& cost) {
    const auto n = static_cast<std::size_t>(cost.rows());
    const auto m = static_cast<std::size_t>(cost.cols());
    require(n <= m, ErrorKind::shape, "assignment needs rows <= cols");
    if (n == 0) return {};
    constexpr double inf = std::numeric_limits<double>::infinity();
    // Potentials over 1-based rows/cols; column 0 is a sentinel.
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        owner[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = owner[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (owner[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= m; ++j)
        if (owner[j] != 0) assignment[owner[j] - 1] = j - 1;
    return assignment;
}

double transport_cost(const Eigen::MatrixXd& cost) {
    const auto k1 = static_cast<std::size_t>(cost.rows());
    const auto k2 = static_cast<std::size_t>(cost.cols());
    require(k1 >= 1 && k2 >= 1, ErrorKind::shape, "transport needs nonempty supports");
    // Source -> row i (k2 units) -> col j -> sink (k1 units). Successive
    // shortest paths with Bellman-Ford on the residual graph.
    struct Edge {
        std::size_t to;
        long long cap;
        double cost;
    };
    const std::size_t source = 0, sink = k1 + k2 + 1, nodes = k1 + k2 + 2;
    std::vector<Edge> edges;
    std::vector<std::vector<std::size_t>> adj(nodes);
    auto add = [&](std::size_t a, std::size_t b, long long cap, double c) {
        adj[a].push_back(edges.size());
        edges.push_back({b, cap, c});
        adj[b].push_back(edges.size());
        edges.push_back({a, 0, -c});
    };
    for (std::size_t i = 0; i < k1; ++i) add(source, 1 + i, static_cast<long long>(k2), 0.0);
    for (std::size_t i = 0; i < k1; ++i)
        for (std::size_t j = 0; j < k2; ++j)
            add(1 + i, 1 + k1 + j, static_cast<long long>(std::min(k1, k2)) * static_cast<long long>(std::max(k1, k2)),
                cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    for (std::size_t j = 0; j < k2; ++j) add(1 + k1 + j, sink, static_cast<long long>(k1), 0.0);

    const long long need = static_cast<long long>(k1 * k2);
    long long flow = 0;
    double total = 0.0;
    constexpr double inf = std::numeric_limits<double>::infinity();
    while (flow < need) {
        std::vector<double> dist(nodes, inf);
        std::vector<std::size_t> via(nodes, edges.size());
        std::vector<bool> queued(nodes, false);
        std::queue<std::size_t> q;
        dist[source] = 0.0;
        q.push(source);
        while (!q.empty()) {
            const std::size_t a = q.front();
            q.pop();
            queued[a] = false;
            for (std::size_t e : adj[a]) {
                const auto& edge = edges[e];
                if (edge.cap <= 0) continue;
                const double nd = dist[a] + edge.cost;
                if (nd < dist[edge.to] - 1e-15 * std::max(1.0, std::abs(nd))) {
                    dist[edge.to] = nd;
                    via[edge.to] = e;
                    if (!queued[edge.to]) {
                        queued[edge.to] = true;
                        q.push(edge.to);
                    }
                }
            }
        }
        require(dist[sink] < inf, ErrorKind::numeric_input, "transport problem infeasible");
        long long push = need - flow;
        for (std::size_t v = sink; v != source; v = edges[via[v] ^ 1].to) push = std::min(push, edges[via[v]].cap);
        for (std::size_t v = sink; v != source; v = edges[via[v] ^ 1].to) {
            edges[via[v]].cap -= push;
            edges[via[v] ^ 1].cap += push;
            total += static_cast<double>(push) * edges[via[v]].cost;
        }
        flow += push;
    }
    return total / static_cast<double>(need);
}

double center_wasserstein(const Matrix& a, const Matrix& b) {
    require(a.rows() >= 1 && b.rows() >= 1, ErrorKind::shape, "Wasserstein distance needs nonempty center sets");
    require(a.cols() == b.cols(), ErrorKind::shape, "center sets differ in dimension");
    Eigen::MatrixXd cost(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.rows(); ++j) cost(i, j) = (a.row(i) - b.row(j)).norm();
    if (a.rows() != b.rows()) return transport_cost(cost);
    const auto match = hungarian(cost);
    double total = 0.0;
    for (std::size_t i = 0; i < match.size(); ++i) total += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(match[i]));
    return total / static_cast<double>(match.size());
}

GridMae grid_mae(const Matrix& real_dbm, const Matrix& pred_dbm, const std::vector<bool>& active) {
    require(real_dbm.rows() == pred_dbm.rows() && real_dbm.cols() == pred_dbm.cols(), ErrorKind::shape,
            "real and predicted per-grid RSRP differ in shape");
    require(active.size() == static_cast<std::size_t>(real_dbm.rows()), ErrorKind::shape,
            "active mask length differs from grid count");
    require(real_dbm.rows() >= 1, ErrorKind::shape, "grid MAE needs at least one grid");
    GridMae out;
    double all = 0.0, act = 0.0;
    std::size_t n_active = 0;
    for (Eigen::Index k = 0; k < real_dbm.rows(); ++k) {
        const double mae = (real_dbm.row(k) - pred_dbm.row(k)).cwiseAbs().mean();
        all += mae;
        if (active[static_cast<std::size_t>(k)]) {
            act += mae;
            ++n_active;
        }
    }
    out.overall_mae = all / static_cast<double>(real_dbm.rows());
    if (n_active > 0) out.active_mae = act / static_cast<double>(n_active);
    return out;
}

GridAverages grid_average_rsrp(const Matrix& rsrp_dbm, const Labels& labels, std::size_t k, double floor_mw) {
    require(labels.size() == static_cast<std::size_t>(rsrp_dbm.rows()), ErrorKind::shape,
            "label count differs from RSRP rows");
    GridAverages out;
    Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(k), rsrp_dbm.cols());
    out.counts.assign(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require(labels[i] < k, ErrorKind::index, "grid label out of range");
        sums.row(labels[i]) += rsrp_dbm.row(static_cast<Eigen::Index>(i)).unaryExpr([](double v) { return to_mw(v); });
        ++out.counts[labels[i]];
    }
    out.dbm.resize(sums.rows(), sums.cols());
    out.active.assign(k, false);
    for (std::size_t c = 0; c < k; ++c) {
        const auto row = static_cast<Eigen::Index>(c);
        if (out.counts[c] > 0) sums.row(row) /= static_cast<double>(out.counts[c]);
        out.active[c] = out.counts[c] > 0 && (sums.row(row).array() > 0.0).any();
        for (Eigen::Index m = 0; m < sums.cols(); ++m)
            out.dbm(row, m) = out.active[c] ? to_dbm(sums(row, m), floor_mw) : to_dbm(0.0, floor_mw);
    }
    return out;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["ari"] = r.clustering.ari;
    j["nmi"] = r.clustering.nmi;
    j["homogeneity"] = r.clustering.homogeneity;
    j["completeness"] = r.clustering.completeness;
    j["v_measure"] = r.clustering.v_measure;
    j["active_ratio"] = r.active_ratio;
    auto opt = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
    };
    opt("sample_mean_nmse", r.sample_mean_nmse);
    opt("matched_sample_mean_nmse", r.matched_sample_mean_nmse);
    opt("center_wasserstein", r.center_wasserstein);
    opt("active_mae", r.active_mae);
    opt("overall_mae", r.overall_mae);
    if (r.sample_mean_nmse) j["nmse_skipped_zero_norm"] = r.nmse_skipped;
    j["provenance"] = {{"wasserstein_order", 1},
                       {"wasserstein_ground_metric", "euclidean"},
                       {"entropy_base", "e"},
                       {"nmse_center_correspondence", "assigned"},
                       {"floor_dbm", r.floor_dbm}};
    return j;
}

}  // namespace csg
