// SPDX-License-Identifier: Apache-2.0
#include "csg/model.hpp"

#include "csg/binary_io.hpp"
#include "csg/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace csg {

std::vector<std::size_t> Codebook::kept_indices(std::size_t k) const {
    require(k < n_grids(), ErrorKind::index,
            "codeword " + std::to_string(k) + " out of range for K=" + std::to_string(n_grids()));
    const std::size_t n = n_angles();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t keep = std::min(sparsity, n);
    const auto col = static_cast<Eigen::Index>(k);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double va = xi(static_cast<Eigen::Index>(a), col);
                          const double vb = xi(static_cast<Eigen::Index>(b), col);
                          return va > vb || (va == vb && a < b);
                      });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    return order;
}

Vector Codebook::effective_codeword(std::size_t k) const {
    Vector c = Vector::Zero(static_cast<Eigen::Index>(n_angles()));
    for (std::size_t n : kept_indices(k)) {
        const double v = xi(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
        if (v > 0.0) c[static_cast<Eigen::Index>(n)] = scale * v;
    }
    return c;
}

Matrix Codebook::effective_codewords() const {
    Matrix out(static_cast<Eigen::Index>(n_grids()), static_cast<Eigen::Index>(n_angles()));
    for (std::size_t k = 0; k < n_grids(); ++k) out.row(static_cast<Eigen::Index>(k)) = effective_codeword(k).transpose();
    return out;
}

std::vector<ParamBlock> Codebook::blocks() {
    return {{"codebook.xi", xi.data(), static_cast<std::size_t>(xi.size())}};
}

std::vector<ConstParamBlock> Codebook::blocks() const {
    return {{"codebook.xi", xi.data(), static_cast<std::size_t>(xi.size())}};
}

std::uint64_t Codebook::digest() const {
    return io::fnv1a({reinterpret_cast<const std::uint8_t*>(xi.data()), static_cast<std::size_t>(xi.size()) * 8});
}

void Codebook::validate() const {
    require(n_grids() >= 1 && n_angles() >= 1, ErrorKind::shape, "codebook must be at least 1 x 1");
    require(sparsity >= 1, ErrorKind::invalid_config, "codebook sparsity must be >= 1");
    require(scale > 0 && std::isfinite(scale), ErrorKind::invalid_config, "codebook scale must be > 0");
    require(xi.allFinite(), ErrorKind::numeric_input, "codebook contains non-finite entries");
}

GridAssignment quantize(const Codebook& cb, const Matrix& embeddings) {
    const std::size_t k_count = cb.n_grids();
    GridAssignment out;
    out.members.resize(k_count);
    out.centers = cb.effective_codewords();
    out.supports.resize(k_count);
    for (std::size_t k = 0; k < k_count; ++k)
        for (Eigen::Index n = 0; n < out.centers.cols(); ++n)
            if (out.centers(static_cast<Eigen::Index>(k), n) > 0.0) out.supports[k].push_back(static_cast<std::size_t>(n));
    if (embeddings.rows() == 0) return out;
    require(static_cast<std::size_t>(embeddings.cols()) == cb.n_angles(), ErrorKind::shape,
            "embeddings have " + std::to_string(embeddings.cols()) + " entries, codebook has " +
                std::to_string(cb.n_angles()));

    const auto i_count = static_cast<std::size_t>(embeddings.rows());
    out.labels.resize(i_count);
    out.distances.resize(i_count);
    for (std::size_t i = 0; i < i_count; ++i) {
        const auto x = embeddings.row(static_cast<Eigen::Index>(i));
        // ||x - c||^2 minus the shared ||x||^2, accumulated over supp(c) only.
        std::size_t best = 0;
        double best_d = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) {
            double d = 0.0;
            for (std::size_t n : out.supports[k]) {
                const auto col = static_cast<Eigen::Index>(n);
                const double c = out.centers(static_cast<Eigen::Index>(k), col);
                d += c * (c - 2.0 * x[col]);
            }
            if (k == 0 || d < best_d) {
                best = k;
                best_d = d;
            }
        }
        out.labels[i] = static_cast<std::uint32_t>(best);
        out.members[best].push_back(i);
        out.distances[i] = (x - out.centers.row(static_cast<Eigen::Index>(best))).squaredNorm();
    }
    return out;
}

Vector projected_mean(const GridAssignment& assignment, const Matrix& embeddings, std::size_t k) {
    require(k < assignment.n_grids(), ErrorKind::index, "grid " + std::to_string(k) + " out of range");
    Vector mu = Vector::Zero(embeddings.cols());
    const auto& members = assignment.members[k];
    if (members.empty()) return mu;
    for (std::size_t n : assignment.supports[k]) {
        double acc = 0.0;
        for (std::size_t i : members) acc += embeddings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n));
        mu[static_cast<Eigen::Index>(n)] = acc / static_cast<double>(members.size());
    }
    return mu;
}

double active_ratio(const GridAssignment& assignment) {
    if (assignment.n_samples() == 0 || assignment.n_grids() == 0) return 0.0;
    std::size_t active = 0;
    for (const auto& m : assignment.members) active += m.empty() ? 0 : 1;
    return static_cast<double>(active) / static_cast<double>(assignment.n_grids());
}

LossResult quantization_loss(const Matrix& embeddings, const GridAssignment& assignment, const Codebook& cb,
                             const LossOptions& options) {
    const std::size_t k_count = cb.n_grids();
    const auto n = static_cast<double>(cb.n_angles());
    require(assignment.n_grids() == k_count, ErrorKind::shape, "assignment and codebook disagree on K");
    require(assignment.n_samples() == static_cast<std::size_t>(embeddings.rows()), ErrorKind::shape,
            "assignment and embeddings disagree on sample count");

    std::size_t counted = 0;
    for (std::size_t k = 0; k < k_count; ++k)
        if (!options.exclude_empty_grids || !assignment.members[k].empty()) ++counted;

    LossResult out;
    if (options.want_embedding_grads) out.grad_embeddings_l2 = Matrix::Zero(embeddings.rows(), embeddings.cols());
    if (options.want_codebook_grads) out.grad_codebook = Matrix::Zero(cb.xi.rows(), cb.xi.cols());
    if (counted == 0) return out;
    const double coef = 2.0 / (static_cast<double>(counted) * n);

    double total = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
        const auto& members = assignment.members[k];
        if (options.exclude_empty_grids && members.empty()) continue;
        const Vector mu = projected_mean(assignment, embeddings, k);
        const Vector diff = assignment.centers.row(static_cast<Eigen::Index>(k)).transpose() - mu;
        total += diff.squaredNorm() / n;
        if (options.want_codebook_grads) {
            // Threshold mask held fixed; rectifier derivative taken as 0 at 0.
            for (std::size_t idx : cb.kept_indices(k)) {
                const auto row = static_cast<Eigen::Index>(idx);
                const auto col = static_cast<Eigen::Index>(k);
                if (cb.xi(row, col) > 0.0) out.grad_codebook(row, col) = coef * diff[row] * cb.scale;
            }
        }
        if (options.want_embedding_grads && !members.empty()) {
            const double per_member = coef / static_cast<double>(members.size());
            for (std::size_t i : members)
                for (std::size_t idx : assignment.supports[k])
                    out.grad_embeddings_l2(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(idx)) =
                        -per_member * diff[static_cast<Eigen::Index>(idx)];
        }
    }
    out.l2 = total / static_cast<double>(counted);
    out.combined = out.l2;
    return out;
}

LossResult compute_losses(const Matrix& embeddings, const GridAssignment& assignment, const Codebook& cb,
                          const BeamPatternMatrix& a, const Matrix& y_dbm, const LossWeights& weights,
                          double floor_mw, const LossOptions& options) {
    require(weights.reconstruction >= 0 && weights.quantization >= 0 && std::isfinite(weights.reconstruction) &&
                std::isfinite(weights.quantization),
            ErrorKind::invalid_config, "loss weights must be finite and >= 0");
    LossResult out = quantization_loss(embeddings, assignment, cb, options);
    auto rec = reconstruction_loss(embeddings, a, y_dbm, floor_mw, options.want_embedding_grads);
    out.l1 = rec.loss;
    out.grad_embeddings_l1 = std::move(rec.grad_embeddings);
    out.combined = weights.reconstruction * out.l1 + weights.quantization * out.l2;
    return out;
}

namespace {

long double reference_l2(const Codebook& cb, const Matrix& embeddings, const LossOptions& options,
                         std::vector<std::int8_t>& signature) {
    using T = long double;
    signature.clear();
    const auto assignment = quantize(cb, embeddings);
    for (auto label : assignment.labels) signature.push_back(static_cast<std::int8_t>(label));
    const std::size_t k_count = cb.n_grids();
    const std::size_t n = cb.n_angles();
    std::size_t counted = 0;
    T total = 0;
    for (std::size_t k = 0; k < k_count; ++k) {
        const auto kept = cb.kept_indices(k);
        std::vector<bool> mask(n, false);
        for (std::size_t idx : kept) mask[idx] = true;
        for (std::size_t idx = 0; idx < n; ++idx) {
            const double v = cb.xi(static_cast<Eigen::Index>(idx), static_cast<Eigen::Index>(k));
            signature.push_back(static_cast<std::int8_t>(mask[idx] ? (v > 0 ? 2 : 1) : 0));
        }
        const auto& members = assignment.members[k];
        if (options.exclude_empty_grids && members.empty()) continue;
        ++counted;
        T sq = 0;
        for (std::size_t idx = 0; idx < n; ++idx) {
            const double v = cb.xi(static_cast<Eigen::Index>(idx), static_cast<Eigen::Index>(k));
            const T c = mask[idx] && v > 0 ? static_cast<T>(cb.scale) * v : 0;
            T mu = 0;
            if (c > 0 && !members.empty()) {
                for (std::size_t i : members) mu += embeddings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(idx));
                mu /= static_cast<T>(members.size());
            }
            sq += (c - mu) * (c - mu);
        }
        total += sq / static_cast<T>(n);
    }
    return counted == 0 ? 0 : total / static_cast<T>(counted);
}

}  // namespace

GradientCheckReport codebook_gradient_check(Codebook cb, const Matrix& embeddings, const LossOptions& options) {
    const auto assignment = quantize(cb, embeddings);
    LossOptions opts = options;
    opts.want_codebook_grads = true;
    opts.want_embedding_grads = false;
    const auto analytic = quantization_loss(embeddings, assignment, cb, opts);
    ProbeFn probe = [&](std::vector<std::int8_t>& sig) { return reference_l2(cb, embeddings, options, sig); };
    return finite_difference_check(
        cb.blocks(), {{"codebook.xi", analytic.grad_codebook.data(), static_cast<std::size_t>(analytic.grad_codebook.size())}},
        probe);
}

// ---------------------------------------------------------------------------

GridCapsSummary summarize_grids(const GridAssignment& assignment, const Matrix& embeddings,
                                const BeamPatternMatrix& a, std::size_t sparsity, double floor_mw) {
    require(static_cast<std::size_t>(embeddings.cols()) == a.n_angles(), ErrorKind::shape,
            "embeddings and beam matrix disagree on N");
    GridCapsSummary s;
    s.n_angles = a.n_angles();
    s.sparsity = sparsity;
    const auto n = static_cast<Eigen::Index>(s.n_angles);
    for (std::size_t k = 0; k < assignment.n_grids(); ++k) {
        GridRecord g;
        g.support = assignment.supports[k];
        g.center = assignment.centers.rows() > 0 ? Vector(assignment.centers.row(static_cast<Eigen::Index>(k)).transpose())
                                                 : Vector::Zero(n);
        g.average = Vector::Zero(n);
        const auto& members = assignment.members[k];
        g.member_count = members.size();
        g.active = !members.empty();
        for (std::size_t i : members) g.average += embeddings.row(static_cast<Eigen::Index>(i)).transpose();
        if (g.active) g.average /= static_cast<double>(members.size());
        g.average_dbm = forward_rsrp(a, {g.average.data(), s.n_angles}, floor_mw).dbm;
        s.grids.push_back(std::move(g));
    }
    return s;
}

GridPrediction predict_under_beam(const GridCapsSummary& summary, const BeamPatternMatrix& a_new, double floor_mw) {
    require(a_new.n_angles() == summary.n_angles, ErrorKind::shape,
            "summary has N=" + std::to_string(summary.n_angles) + ", beam matrix has N=" +
                std::to_string(a_new.n_angles()));
    GridPrediction out;
    for (const auto& g : summary.grids) {
        const bool active = g.active && (g.average.array() > 0.0).any();
        out.active.push_back(active);
        if (active)
            out.dbm.push_back(forward_rsrp(a_new, {g.average.data(), summary.n_angles}, floor_mw).dbm);
        else
            out.dbm.push_back(Vector::Constant(static_cast<Eigen::Index>(a_new.n_beams()), to_dbm(0.0, floor_mw)));
    }
    return out;
}

namespace {

using nlohmann::json;

json sparse_pairs(const Vector& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (v[i] != 0.0) arr.push_back(json::array({static_cast<std::uint64_t>(i), v[i]}));
    return arr;
}

Vector dense_from_pairs(const json& arr, std::size_t n, const std::string& where) {
    require(arr.is_array(), ErrorKind::corrupt, where + " must be an array of [index, value] pairs");
    Vector v = Vector::Zero(static_cast<Eigen::Index>(n));
    for (const auto& p : arr) {
        require(p.is_array() && p.size() == 2 && p[0].is_number_unsigned() && p[1].is_number(), ErrorKind::corrupt,
                where + " entries must be [index, value]");
        const auto idx = p[0].get<std::uint64_t>();
        const double val = p[1].get<double>();
        require(idx < n, ErrorKind::corrupt, where + " index " + std::to_string(idx) + " >= N");
        require(std::isfinite(val) && val >= 0.0, ErrorKind::corrupt, where + " values must be finite and >= 0");
        v[static_cast<Eigen::Index>(idx)] = val;
    }
    return v;
}

}  // namespace

std::string summary_to_json(const GridCapsSummary& summary) {
    json doc;
    doc["K"] = summary.n_grids();
    doc["N"] = summary.n_angles;
    doc["L"] = summary.sparsity;
    json grids = json::array();
    for (std::size_t k = 0; k < summary.grids.size(); ++k) {
        const auto& g = summary.grids[k];
        json rec;
        rec["index"] = k;
        rec["support"] = g.support;
        rec["center"] = sparse_pairs(g.center);
        rec["xbar"] = sparse_pairs(g.average);
        rec["member_count"] = g.member_count;
        rec["active"] = g.active;
        rec["ybar_dbm"] = std::vector<double>(g.average_dbm.data(), g.average_dbm.data() + g.average_dbm.size());
        grids.push_back(std::move(rec));
    }
    doc["grids"] = std::move(grids);
    return doc.dump(1);
}

GridCapsSummary summary_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::corrupt, std::string("summary JSON: ") + e.what());
    }
    try {
        GridCapsSummary s;
        const auto k_count = doc.at("K").get<std::size_t>();
        s.n_angles = doc.at("N").get<std::size_t>();
        s.sparsity = doc.at("L").get<std::size_t>();
        require(s.n_angles >= 1, ErrorKind::corrupt, "summary N must be >= 1");
        const auto& grids = doc.at("grids");
        require(grids.is_array() && grids.size() == k_count, ErrorKind::corrupt, "summary grid count differs from K");
        for (std::size_t k = 0; k < k_count; ++k) {
            const auto& rec = grids[k];
            const std::string where = "grids[" + std::to_string(k) + "]";
            GridRecord g;
            require(rec.at("index").get<std::size_t>() == k, ErrorKind::corrupt, where + ".index out of order");
            g.support = rec.at("support").get<std::vector<std::size_t>>();
            for (std::size_t idx : g.support) require(idx < s.n_angles, ErrorKind::corrupt, where + ".support index >= N");
            g.center = dense_from_pairs(rec.at("center"), s.n_angles, where + ".center");
            g.average = dense_from_pairs(rec.at("xbar"), s.n_angles, where + ".xbar");
            g.member_count = rec.at("member_count").get<std::size_t>();
            g.active = rec.at("active").get<bool>();
            const auto dbm = rec.at("ybar_dbm").get<std::vector<double>>();
            g.average_dbm = Eigen::Map<const Vector>(dbm.data(), static_cast<Eigen::Index>(dbm.size()));
            s.grids.push_back(std::move(g));
        }
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::corrupt, std::string("summary JSON: ") + e.what());
    }
}

void save_summary(const GridCapsSummary& summary, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::io, "cannot write " + path.string());
    f << summary_to_json(summary) << '\n';
    require(static_cast<bool>(f), ErrorKind::io, "write failed for " + path.string());
}

GridCapsSummary load_summary(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::io, "cannot read " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return summary_from_json(ss.str());
}

}  // namespace csg
