// SPDX-License-Identifier: Apache-2.0
#include "csg/experiment.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace csg;

namespace {

BeamPatternMatrix as_beam(const Matrix& gains) {
    BeamPatternMatrix a;
    a.gains = gains;
    a.source = BeamSource::loaded;
    return a;
}

SyntheticDataset as_dataset(const py::dict& d) {
    SyntheticDataset ds;
    ds.rsrp_dbm = d["rsrp_dbm"].cast<Matrix>();
    if (d.contains("centers")) ds.centers = d["centers"].cast<Matrix>();
    if (d.contains("samples")) ds.samples = d["samples"].cast<Matrix>();
    if (d.contains("labels")) ds.labels = d["labels"].cast<Labels>();
    if (d.contains("sparsity")) ds.sparsity = d["sparsity"].cast<std::size_t>();
    if (d.contains("scale")) ds.scale = d["scale"].cast<double>();
    return ds;
}

py::dict to_dict(const SyntheticDataset& ds) {
    py::dict d;
    d["centers"] = ds.centers;
    d["samples"] = ds.samples;
    d["rsrp_dbm"] = ds.rsrp_dbm;
    d["labels"] = ds.labels;
    d["perturbations"] = ds.perturbations;
    d["sparsity"] = ds.sparsity;
    d["scale"] = ds.scale;
    return d;
}

py::dict scores_dict(const ClusteringScores& s) {
    py::dict d;
    d["ari"] = s.ari;
    d["nmi"] = s.nmi;
    d["homogeneity"] = s.homogeneity;
    d["completeness"] = s.completeness;
    d["v_measure"] = s.v_measure;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Channel space gridization core";
    static py::exception<Error> error_type(m, "CsgError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error_type, e.what());
        }
    });

    m.def("desk_beam", [] { return desk_beam().gains; }, "Beam pattern matrix of the built-in desk geometry (M=32, N=256).");
    m.def(
        "build_beam",
        [](const std::string& spec_json) {
            return build_beam(parse_beam_spec(nlohmann::json::parse(spec_json), "")).gains;
        },
        py::arg("spec_json"), "Beam pattern matrix from a JSON beam spec (angles in degrees).");
    m.def(
        "forward_rsrp",
        [](const Matrix& a, const Vector& x, double floor_mw) {
            auto r = forward_rsrp(as_beam(a), {x.data(), static_cast<std::size_t>(x.size())}, floor_mw);
            return py::make_tuple(r.mw, r.dbm);
        },
        py::arg("a"), py::arg("x"), py::arg("floor_mw") = kDefaultFloorMw);
    m.def(
        "gen_dataset",
        [](const Matrix& a, std::size_t k, std::size_t l, std::size_t samples_per_grid, double s, std::uint64_t seed,
           double p) {
            SyntheticConfig c;
            c.n_grids = k;
            c.n_angles = static_cast<std::size_t>(a.cols());
            c.sparsity = l;
            c.samples_per_grid = samples_per_grid;
            c.scale = s;
            c.seed = seed;
            c.laplace_power = p;
            return to_dict(gen_dataset(c, as_beam(a)));
        },
        py::arg("a"), py::arg("k"), py::arg("l"), py::arg("samples_per_grid"), py::arg("s"), py::arg("seed") = 0,
        py::arg("p") = 1e-5);
    m.def(
        "kmeans",
        [](const Matrix& data, std::size_t k, std::uint64_t seed, std::size_t n_init) {
            KMeansOptions o;
            o.n_init = n_init;
            auto r = kmeans(data, k, seed, o);
            return py::make_tuple(r.centers, r.labels, r.inertia);
        },
        py::arg("data"), py::arg("k"), py::arg("seed") = 0, py::arg("n_init") = 1);
    m.def(
        "sparse_code",
        [](const Matrix& d, const Vector& y, std::size_t l, const std::string& variant) {
            auto v = parse_sparse_variant(variant);
            if (!v) throw Error(ErrorKind::invalid_config, "unknown solver '" + variant + "'");
            auto c = sparse_code(d, y, l, *v);
            return py::make_tuple(c.x, c.support, c.residual_norm);
        },
        py::arg("dictionary"), py::arg("y"), py::arg("l"), py::arg("variant") = "nomp");
    m.def(
        "run_pipeline",
        [](const std::string& name, const py::dict& ds, const Matrix& a, std::size_t k, std::size_t l,
           std::uint64_t seed) {
            auto r = run_pipeline(name, as_dataset(ds), as_beam(a), k, l, seed);
            py::dict out;
            out["labels"] = r.labels;
            out["centers"] = r.has_centers() ? py::cast(r.centers) : py::none();
            return out;
        },
        py::arg("name"), py::arg("dataset"), py::arg("a"), py::arg("k"), py::arg("l"), py::arg("seed") = 0);
    m.def(
        "train",
        [](const Matrix& a, const Matrix& rsrp_dbm, std::size_t k, std::size_t l, const std::string& scheme,
           std::size_t pretrain_epochs, std::size_t total_epochs, std::uint64_t seed, std::size_t width,
           std::size_t depth) {
            auto flags = SchemeFlags::parse(scheme);
            if (!flags) throw Error(ErrorKind::invalid_config, "unknown scheme '" + scheme + "'");
            TrainConfig c;
            c.scheme = *flags;
            c.n_grids = k;
            c.sparsity = l;
            c.pretrain_epochs = pretrain_epochs;
            c.total_epochs = total_epochs;
            c.seed = seed;
            c.width = width;
            c.depth = depth;
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(c, rsrp_dbm, as_beam(a));
            }
            py::dict out;
            out["labels"] = r.assignment.labels;
            out["centers"] = r.assignment.centers;
            out["embeddings"] = r.embeddings;
            out["active_ratio"] = r.final_active_ratio;
            out["post_init_active_ratio"] = r.log.post_init_active_ratio;
            out["pretrain_l1"] = r.pretrain_l1;
            out["summary_json"] = summary_to_json(r.summary);
            py::list log;
            for (const auto& e : r.log.records) {
                py::dict row;
                row["epoch"] = e.epoch;
                row["phase"] = e.phase;
                row["l1"] = e.l1;
                row["l2"] = e.l2;
                row["combined"] = e.combined;
                row["active_ratio"] = e.active_ratio;
                row["val_l1"] = e.val_l1;
                log.append(row);
            }
            out["log"] = log;
            return out;
        },
        py::arg("a"), py::arg("rsrp_dbm"), py::arg("k"), py::arg("l"), py::arg("scheme") = "PIDA",
        py::arg("pretrain_epochs") = 2000, py::arg("total_epochs") = 4000, py::arg("seed") = 0,
        py::arg("width") = 256, py::arg("depth") = 6);
    m.def(
        "predict_under_beam",
        [](const std::string& summary_json, const Matrix& a) {
            auto p = predict_under_beam(summary_from_json(summary_json), as_beam(a));
            Matrix dbm(static_cast<Eigen::Index>(p.dbm.size()), a.rows());
            for (std::size_t g = 0; g < p.dbm.size(); ++g) dbm.row(static_cast<Eigen::Index>(g)) = p.dbm[g].transpose();
            return py::make_tuple(dbm, p.active);
        },
        py::arg("summary_json"), py::arg("a"));
    m.def(
        "clustering_metrics",
        [](const Labels& truth, const Labels& pred) { return scores_dict(clustering_metrics(truth, pred)); },
        py::arg("truth"), py::arg("pred"));
    m.def(
        "sample_mean_nmse",
        [](const Matrix& tc, const Labels& tl, const Matrix& pc, const Labels& pl) {
            return sample_mean_nmse(tc, tl, pc, pl).value;
        },
        py::arg("true_centers"), py::arg("true_labels"), py::arg("pred_centers"), py::arg("pred_labels"));
    m.def("center_wasserstein", &center_wasserstein, py::arg("a"), py::arg("b"));
}
