// SPDX-License-Identifier: Apache-2.0
#include "csg/baselines.hpp"

#include "csg/errors.hpp"
#include "csg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace csg {

namespace {

double sq_dist(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

// Greedy k-means++: each new center is the best of 2 + floor(ln K) candidates
// drawn proportionally to squared distance, judged by the resulting potential.
Matrix kmeanspp_seed(const Matrix& data, std::size_t k, Rng& rng) {
    const auto n = static_cast<std::size_t>(data.rows());
    const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
    Matrix centers(static_cast<Eigen::Index>(k), data.cols());
    centers.row(0) = data.row(static_cast<Eigen::Index>(rng.below(n)));
    std::vector<double> d2(n), cand_d2(n), best_d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(data, static_cast<Eigen::Index>(i), centers, 0);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t best_pick = 0;
        double best_potential = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t pick = n - 1;
            if (total > 0.0) {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (acc > target) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = rng.below(n);
            }
            double potential = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                cand_d2[i] = std::min(d2[i], (data.row(static_cast<Eigen::Index>(i)) -
                                              data.row(static_cast<Eigen::Index>(pick))).squaredNorm());
                potential += cand_d2[i];
            }
            if (potential < best_potential) {
                best_potential = potential;
                best_pick = pick;
                best_d2.swap(cand_d2);
            }
        }
        centers.row(static_cast<Eigen::Index>(c)) = data.row(static_cast<Eigen::Index>(best_pick));
        d2.swap(best_d2);
    }
    return centers;
}

KMeansResult lloyd(const Matrix& data, Matrix centers, const KMeansOptions& options, double tol_abs) {
    const auto n = static_cast<std::size_t>(data.rows());
    const auto k = static_cast<std::size_t>(centers.rows());
    KMeansResult out;
    std::vector<double> dist(n);
    for (std::size_t iter = 0;; ++iter) {
        out.labels = assign_nearest(data, centers);
        for (std::size_t i = 0; i < n; ++i)
            dist[i] = sq_dist(data, static_cast<Eigen::Index>(i), centers, out.labels[i]);

        // Empty clusters adopt the point currently farthest from its center.
        std::vector<std::size_t> counts(k, 0);
        for (auto l : out.labels) ++counts[l];
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i)
                if (counts[out.labels[i]] > 1 && dist[i] > far_d) {
                    far = i;
                    far_d = dist[i];
                }
            if (far_d < 0.0) break;  // fewer distinct points than clusters
            --counts[out.labels[far]];
            out.labels[far] = static_cast<std::uint32_t>(c);
            ++counts[c];
            centers.row(static_cast<Eigen::Index>(c)) = data.row(static_cast<Eigen::Index>(far));
            dist[far] = 0.0;
        }
        double inertia = 0.0;
        for (double d : dist) inertia += d;
        out.inertia_history.push_back(inertia);
        out.inertia = inertia;
        out.iterations = iter + 1;
        if (iter + 1 >= options.max_iter) break;

        Matrix updated = Matrix::Zero(centers.rows(), centers.cols());
        for (std::size_t i = 0; i < n; ++i) updated.row(out.labels[i]) += data.row(static_cast<Eigen::Index>(i));
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0)
                updated.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
            else
                updated.row(static_cast<Eigen::Index>(c)) = centers.row(static_cast<Eigen::Index>(c));
        }
        const double shift = (updated - centers).squaredNorm();
        centers = std::move(updated);
        if (shift <= tol_abs) break;
    }
    // Labels returned are exactly the nearest-center assignment of the returned centers.
    out.labels = assign_nearest(data, centers);
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) inertia += sq_dist(data, static_cast<Eigen::Index>(i), centers, out.labels[i]);
    out.inertia_history.push_back(inertia);
    out.inertia = inertia;
    out.centers = std::move(centers);
    return out;
}

}  // namespace

Labels assign_nearest(const Matrix& data, const Matrix& centers) {
    require(data.cols() == centers.cols(), ErrorKind::shape, "data and centers disagree on dimension");
    Labels labels(static_cast<std::size_t>(data.rows()));
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < centers.rows(); ++c) {
            const double d = sq_dist(data, i, centers, c);
            if (d < best_d) {
                best_d = d;
                best = static_cast<std::size_t>(c);
            }
        }
        labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
    }
    return labels;
}

KMeansResult kmeans(const Matrix& data, std::size_t k, std::uint64_t seed, const KMeansOptions& options) {
    require(k >= 1, ErrorKind::invalid_config, "k-means needs K >= 1");
    require(data.rows() >= 1, ErrorKind::empty_dataset, "k-means needs at least one point");
    require(static_cast<std::size_t>(data.rows()) >= k, ErrorKind::invalid_config,
            "k-means needs at least K=" + std::to_string(k) + " points, got " + std::to_string(data.rows()));
    require(data.allFinite(), ErrorKind::numeric_input, "k-means data contains non-finite values");
    require(options.max_iter >= 1 && options.n_init >= 1, ErrorKind::invalid_config,
            "k-means max_iter and n_init must be >= 1");
    double tol_abs = 0.0;
    if (options.tol > 0.0) {
        const Eigen::RowVectorXd mean = data.colwise().mean();
        const double var = (data.rowwise() - mean).squaredNorm() / static_cast<double>(data.size());
        tol_abs = options.tol * var;
    }
    KMeansResult best;
    for (std::size_t r = 0; r < options.n_init; ++r) {
        Rng rng = Rng::substream(seed, r);
        auto run = lloyd(data, kmeanspp_seed(data, k, rng), options, tol_abs);
        if (r == 0 || run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

// ---------------------------------------------------------------------------

std::string to_string(SparseVariant v) {
    switch (v) {
        case SparseVariant::omp: return "omp";
        case SparseVariant::nomp: return "nomp";
        case SparseVariant::wnomp: return "wnomp";
    }
    return "?";
}

std::optional<SparseVariant> parse_sparse_variant(const std::string& name) {
    if (name == "omp") return SparseVariant::omp;
    if (name == "nomp") return SparseVariant::nomp;
    if (name == "wnomp") return SparseVariant::wnomp;
    return std::nullopt;
}

namespace {

Vector least_squares(const Matrix& d, const std::vector<std::size_t>& cols, const Vector& y) {
    Eigen::MatrixXd sub(d.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = d.col(static_cast<Eigen::Index>(cols[j]));
    return sub.colPivHouseholderQr().solve(y);
}

}  // namespace

Vector nnls(const Matrix& d, const Vector& y, double tol, std::size_t max_iter) {
    require(d.rows() == y.size(), ErrorKind::shape, "nnls: dictionary rows differ from target length");
    const auto n = static_cast<std::size_t>(d.cols());
    if (max_iter == 0) max_iter = 3 * n + 10;
    Vector x = Vector::Zero(d.cols());
    const Vector w0 = d.transpose() * y;
    const double scale = w0.cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) return x;
    const double thresh = tol * scale;
    std::vector<bool> passive(n, false);
    Vector w = w0;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        std::size_t j = n;
        double best = thresh;
        for (std::size_t c = 0; c < n; ++c)
            if (!passive[c] && w[static_cast<Eigen::Index>(c)] > best) {
                best = w[static_cast<Eigen::Index>(c)];
                j = c;
            }
        if (j == n) break;
        passive[j] = true;
        for (std::size_t inner = 0; inner <= n; ++inner) {
            std::vector<std::size_t> cols;
            for (std::size_t c = 0; c < n; ++c)
                if (passive[c]) cols.push_back(c);
            const Vector s_p = least_squares(d, cols, y);
            bool feasible = true;
            for (Eigen::Index c = 0; c < s_p.size(); ++c) feasible = feasible && s_p[c] > 0.0;
            if (feasible) {
                x.setZero();
                for (std::size_t c = 0; c < cols.size(); ++c) x[static_cast<Eigen::Index>(cols[c])] = s_p[static_cast<Eigen::Index>(c)];
                break;
            }
            double alpha = 1.0;
            for (std::size_t c = 0; c < cols.size(); ++c) {
                const double sc = s_p[static_cast<Eigen::Index>(c)];
                const double xc = x[static_cast<Eigen::Index>(cols[c])];
                if (sc <= 0.0 && xc - sc > 0.0) alpha = std::min(alpha, xc / (xc - sc));
            }
            for (std::size_t c = 0; c < cols.size(); ++c) {
                auto& xc = x[static_cast<Eigen::Index>(cols[c])];
                xc += alpha * (s_p[static_cast<Eigen::Index>(c)] - xc);
                if (xc <= 0.0) {
                    xc = 0.0;
                    passive[cols[c]] = false;
                }
            }
            if (std::none_of(passive.begin(), passive.end(), [](bool b) { return b; })) break;
        }
        w = d.transpose() * (y - d * x);
    }
    return x;
}

SparseCode sparse_code(const Matrix& dictionary, const Vector& y, std::size_t sparsity, SparseVariant variant,
                       const Vector* weights) {
    require(dictionary.rows() == y.size(), ErrorKind::shape,
            "target has " + std::to_string(y.size()) + " entries, dictionary has " +
                std::to_string(dictionary.rows()) + " rows");
    require(sparsity >= 1, ErrorKind::invalid_config, "sparsity must be >= 1");
    require(y.allFinite(), ErrorKind::numeric_input, "sparse coding target is not finite");
    const auto n = dictionary.cols();
    SparseCode out;
    out.variant = variant;
    out.x = Vector::Zero(n);
    out.residual_norm = y.norm();
    if (out.residual_norm == 0.0) return out;

    Vector w;
    if (variant == SparseVariant::wnomp) {
        if (weights) {
            require(weights->size() == n, ErrorKind::shape, "wnomp weight vector length differs from N");
            w = *weights;
        } else {
            w.resize(n);
            for (Eigen::Index c = 0; c < n; ++c) {
                const double norm = dictionary.col(c).norm();
                w[c] = norm > 0.0 ? 1.0 / norm : 0.0;
            }
        }
    }

    const double scale = (dictionary.transpose() * y).cwiseAbs().maxCoeff();
    const double thresh = 1e-12 * scale;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    Vector residual = y;
    const std::size_t steps = std::min<std::size_t>(sparsity, static_cast<std::size_t>(n));
    for (std::size_t step = 0; step < steps; ++step) {
        const Vector corr = dictionary.transpose() * residual;
        Eigen::Index pick = -1;
        double best = 0.0;
        for (Eigen::Index c = 0; c < n; ++c) {
            if (used[static_cast<std::size_t>(c)]) continue;
            double score = 0.0;
            switch (variant) {
                case SparseVariant::omp: score = std::abs(corr[c]); break;
                case SparseVariant::nomp: score = corr[c]; break;
                case SparseVariant::wnomp: score = corr[c] * w[c]; break;
            }
            if (score > best && std::abs(corr[c]) > thresh) {
                best = score;
                pick = c;
            }
        }
        if (pick < 0) break;
        used[static_cast<std::size_t>(pick)] = true;
        out.support.push_back(static_cast<std::size_t>(pick));

        Vector coef;
        if (variant == SparseVariant::omp) {
            coef = least_squares(dictionary, out.support, y);
        } else {
            Matrix sub(dictionary.rows(), static_cast<Eigen::Index>(out.support.size()));
            for (std::size_t j = 0; j < out.support.size(); ++j)
                sub.col(static_cast<Eigen::Index>(j)) = dictionary.col(static_cast<Eigen::Index>(out.support[j]));
            coef = nnls(sub, y, 1e-10, 10 * sparsity);
        }
        out.x.setZero();
        for (std::size_t j = 0; j < out.support.size(); ++j)
            out.x[static_cast<Eigen::Index>(out.support[j])] = coef[static_cast<Eigen::Index>(j)];
        residual = y - dictionary * out.x;
        out.residual_norm = residual.norm();
        out.residual_history.push_back(out.residual_norm);
    }
    return out;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& pipeline_names() {
    static const std::vector<std::string> names = {
        "kmeans_x",       "kmeans_y",       "kmeans_y_omp",   "kmeans_y_nomp", "kmeans_y_wnomp",
        "omp_kmeans_x",   "nomp_kmeans_x",  "wnomp_kmeans_x", "gsg_omp",       "gsg_nomp",
        "gsg_wnomp",      "bsg_omp",        "bsg_nomp",       "bsg_wnomp"};
    return names;
}

bool is_pipeline(const std::string& name) {
    const auto& names = pipeline_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

namespace {

Matrix rsrp_mw(const SyntheticDataset& ds) {
    return ds.rsrp_dbm.unaryExpr([](double v) { return to_mw(v); });
}

const Vector* wnomp_weights(const PipelineOptions& options) {
    return options.wnomp_weights ? &*options.wnomp_weights : nullptr;
}

/// Average RSRP per cluster in mW, then one sparse code per cluster.
Matrix code_cluster_means(const Matrix& y_mw, const Labels& labels, std::size_t k, const BeamPatternMatrix& a,
                          std::size_t sparsity, SparseVariant variant, const PipelineOptions& options,
                          std::map<std::string, double>& diag) {
    Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(k), y_mw.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        sums.row(labels[i]) += y_mw.row(static_cast<Eigen::Index>(i));
        ++counts[labels[i]];
    }
    Matrix centers = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(a.n_angles()));
    double residual = 0.0;
    std::size_t empty = 0;
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) {
            ++empty;
            continue;
        }
        const Vector mean = sums.row(static_cast<Eigen::Index>(c)).transpose() / static_cast<double>(counts[c]);
        const auto code = sparse_code(a, mean, sparsity, variant, wnomp_weights(options));
        centers.row(static_cast<Eigen::Index>(c)) = code.x.transpose();
        residual += code.residual_norm / std::max(mean.norm(), 1e-300);
    }
    diag["empty_clusters"] = static_cast<double>(empty);
    diag["mean_relative_residual"] = residual / static_cast<double>(std::max<std::size_t>(1, k - empty));
    return centers;
}

}  // namespace

PipelineResult run_pipeline(const std::string& name, const SyntheticDataset& ds, const BeamPatternMatrix& a,
                            std::size_t k, std::size_t sparsity, std::uint64_t seed, const PipelineOptions& options) {
    require(is_pipeline(name), ErrorKind::invalid_config, "unknown pipeline '" + name + "'");
    require(ds.n_samples() >= 1, ErrorKind::empty_dataset, "pipeline needs at least one sample");
    require(ds.n_beams() == a.n_beams(), ErrorKind::shape,
            "dataset has M=" + std::to_string(ds.n_beams()) + ", beam matrix has M=" + std::to_string(a.n_beams()));
    PipelineResult out;
    out.name = name;

    auto variant_suffix = [&](const std::string& prefix_or_suffix, bool suffix) {
        const std::string v = suffix ? name.substr(prefix_or_suffix.size())
                                     : name.substr(0, name.size() - prefix_or_suffix.size());
        return *parse_sparse_variant(v);
    };

    if (name == "kmeans_x") {
        require(ds.has_caps(), ErrorKind::capability, "kmeans_x needs CAPS samples, dataset has none");
        auto km = kmeans(ds.samples, k, seed, options.kmeans);
        out.labels = std::move(km.labels);
        out.centers = std::move(km.centers);
        out.diagnostics["inertia"] = km.inertia;
    } else if (name == "kmeans_y" || name.rfind("kmeans_y_", 0) == 0 || name.rfind("bsg_", 0) == 0) {
        auto km = kmeans(ds.rsrp_dbm, k, seed, options.kmeans);
        out.labels = std::move(km.labels);
        out.diagnostics["inertia"] = km.inertia;
        if (name != "kmeans_y") {
            const auto variant = name.rfind("bsg_", 0) == 0 ? variant_suffix("bsg_", true) : variant_suffix("kmeans_y_", true);
            out.centers = code_cluster_means(rsrp_mw(ds), out.labels, k, a, sparsity, variant, options, out.diagnostics);
        }
    } else if (name.size() > 9 && name.compare(name.size() - 9, 9, "_kmeans_x") == 0) {
        const auto variant = variant_suffix("_kmeans_x", false);
        const Matrix y_mw = rsrp_mw(ds);
        Matrix codes(y_mw.rows(), static_cast<Eigen::Index>(a.n_angles()));
        double residual = 0.0;
        for (Eigen::Index i = 0; i < y_mw.rows(); ++i) {
            const Vector y = y_mw.row(i).transpose();
            const auto code = sparse_code(a, y, sparsity, variant, wnomp_weights(options));
            codes.row(i) = code.x.transpose();
            residual += code.residual_norm / std::max(y.norm(), 1e-300);
        }
        auto km = kmeans(codes, k, seed, options.kmeans);
        out.labels = std::move(km.labels);
        out.centers = std::move(km.centers);
        out.diagnostics["inertia"] = km.inertia;
        out.diagnostics["mean_relative_residual"] = residual / static_cast<double>(y_mw.rows());
    } else {  // gsg_*
        require(ds.has_labels(), ErrorKind::capability, name + " needs sample locations, dataset carries none");
        const auto variant = variant_suffix("gsg_", true);
        // The generator's grid label serves as a 1-D location coordinate.
        Matrix location(static_cast<Eigen::Index>(ds.labels.size()), 1);
        for (std::size_t i = 0; i < ds.labels.size(); ++i) location(static_cast<Eigen::Index>(i), 0) = ds.labels[i];
        auto km = kmeans(location, k, seed, options.kmeans);
        out.labels = std::move(km.labels);
        out.diagnostics["inertia"] = km.inertia;
        out.centers = code_cluster_means(rsrp_mw(ds), out.labels, k, a, sparsity, variant, options, out.diagnostics);
    }
    return out;
}

GridCapsSummary pipeline_summary(const PipelineResult& result, const BeamPatternMatrix& a, std::size_t k,
                                 std::size_t sparsity, double floor_mw) {
    require(result.has_centers(), ErrorKind::capability, result.name + " yields no CAPS centers");
    GridCapsSummary s;
    s.n_angles = a.n_angles();
    s.sparsity = sparsity;
    std::vector<std::size_t> counts(k, 0);
    for (auto l : result.labels) ++counts[l];
    for (std::size_t c = 0; c < k; ++c) {
        GridRecord g;
        g.center = result.centers.row(static_cast<Eigen::Index>(c)).transpose();
        for (Eigen::Index n = 0; n < g.center.size(); ++n)
            if (g.center[n] > 0.0) g.support.push_back(static_cast<std::size_t>(n));
        g.average = g.center.cwiseMax(0.0);
        g.member_count = counts[c];
        g.active = counts[c] > 0;
        g.average_dbm = forward_rsrp(a, {g.average.data(), s.n_angles}, floor_mw).dbm;
        s.grids.push_back(std::move(g));
    }
    return s;
}

}  // namespace csg
